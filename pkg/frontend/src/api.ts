/**
 * Typed client for the node's HTTP API (explorer + agent endpoints).
 *
 * All energies are integer Wh, prices integer milli-cents per kWh, money
 * integer micro-cents. Addresses are 64 lowercase hex characters.
 */

export interface Tariff {
  feed_in_mct: number;
  retail_energy_mct: number;
  grid_fee_local_mct: number;
  grid_fee_full_mct: number;
}

export interface Status {
  height: number;
  current_interval_id: number;
  cleared_intervals: number;
  tariff: Tariff;
  interval_seconds: number;
}

export interface SeriesPoint {
  interval_id: number;
  produced_wh: number;
  consumed_wh: number;
  battery_wh: number;
  locally_sold_wh: number;
  locally_bought_wh: number;
  grid_sold_wh: number;
  grid_bought_wh: number;
  earnings_uct: number;
}

export interface KpiReport {
  account: string;
  from_interval: number;
  to_interval: number;
  produced_wh: number;
  consumed_wh: number;
  self_consumed_wh: number;
  locally_sold_wh: number;
  locally_bought_wh: number;
  grid_sold_wh: number;
  grid_bought_wh: number;
  self_consumption_ratio: number;
  self_sufficiency_ratio: number;
  net_earnings_uct: number;
}

export interface Preferences {
  account: string;
  max_buy_mct: number;
  min_sell_mct?: number;
  updated_at: number;
}

export interface MatchProbability {
  status: "OK" | "UNKNOWN";
  probability: number | null;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Raised for non-2xx responses; carries the HTTP status for error banners. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private readonly base: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.base + path, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // no JSON body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  status(): Promise<Status> {
    return this.request<Status>("/status");
  }

  series(account: string, from: number, to: number): Promise<SeriesPoint[]> {
    return this.request<SeriesPoint[]>(
      `/accounts/${account}/series?from=${from}&to=${to}`,
    );
  }

  kpis(account: string, from: number, to: number): Promise<KpiReport> {
    return this.request<KpiReport>(`/accounts/${account}/kpis?from=${from}&to=${to}`);
  }

  preferences(account: string): Promise<Preferences> {
    return this.request<Preferences>(`/agent/${account}/preferences`);
  }

  submitPreferences(
    account: string,
    update: { max_buy_mct: number; min_sell_mct?: number },
  ): Promise<Preferences> {
    return this.request<Preferences>(`/agent/${account}/preferences`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(update),
    });
  }

  matchProbability(
    account: string,
    side: "BUY" | "SELL",
    limit: number,
  ): Promise<MatchProbability> {
    return this.request<MatchProbability>(
      `/agent/${account}/match_probability?side=${side}&limit=${limit}`,
    );
  }
}
