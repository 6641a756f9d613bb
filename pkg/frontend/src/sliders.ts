/**
 * Price sliders: the household's handle on the market.
 *
 * Prosumers get two sliders - the green one sets the minimum price for
 * selling to neighbors, the blue one the maximum price for buying locally.
 * Consumers only ever buy, so their sell slider does not exist at all.
 *
 * The component never lies about state: the "active" value shown is always
 * the last preference the agent confirmed back to us. Moving a slider only
 * stages a pending value; Confirm submits it, and a failed submit rolls the
 * slider back to the confirmed value with an error banner (plus a retry
 * prompt when the failure was the network rather than a rejection).
 *
 * The match-probability info boxes refresh when a drag ends, not while it
 * moves, to keep agent queries cheap.
 */

import { ApiClient, ApiError, Preferences, Tariff } from "./api.js";
import { formatPrice, formatRatio } from "./format.js";

export type HouseholdKind = "PROSUMER" | "CONSUMER";
export type SliderStatus =
  | "loading"
  | "idle"
  | "pending"
  | "submitting"
  | "network_error"
  | "rejected";

export class PriceSliders {
  confirmed: Preferences | null = null;
  pendingBuy: number;
  pendingSell: number | null;
  status: SliderStatus = "loading";

  private root: HTMLElement;
  private onConfirmed: (prefs: Preferences) => void;

  constructor(
    root: HTMLElement,
    private readonly api: ApiClient,
    private readonly account: string,
    private readonly kind: HouseholdKind,
    private readonly tariff: Tariff,
    onConfirmed: (prefs: Preferences) => void = () => {},
  ) {
    this.root = root;
    this.onConfirmed = onConfirmed;
    this.pendingBuy = tariff.retail_energy_mct;
    this.pendingSell = kind === "PROSUMER" ? tariff.feed_in_mct : null;
    this.render();
  }

  get floor(): number {
    return this.tariff.feed_in_mct;
  }

  get ceiling(): number {
    return this.tariff.retail_energy_mct;
  }

  private clamp(value: number): number {
    return Math.max(this.floor, Math.min(this.ceiling, value));
  }

  async load(): Promise<void> {
    const prefs = await this.api.preferences(this.account);
    this.adoptConfirmed(prefs);
    this.status = "idle";
    this.render();
    await this.refreshProbabilities();
  }

  private adoptConfirmed(prefs: Preferences): void {
    this.confirmed = prefs;
    this.pendingBuy = prefs.max_buy_mct;
    this.pendingSell = this.kind === "PROSUMER" ? (prefs.min_sell_mct ?? this.floor) : null;
  }

  moveBuy(value: number): void {
    this.pendingBuy = this.clamp(value);
    this.status = this.dirty() ? "pending" : "idle";
    this.render();
  }

  moveSell(value: number): void {
    if (this.kind !== "PROSUMER") return;
    this.pendingSell = this.clamp(value);
    this.status = this.dirty() ? "pending" : "idle";
    this.render();
  }

  dirty(): boolean {
    if (!this.confirmed) return false;
    if (this.pendingBuy !== this.confirmed.max_buy_mct) return true;
    if (this.kind === "PROSUMER") {
      return this.pendingSell !== (this.confirmed.min_sell_mct ?? this.floor);
    }
    return false;
  }

  /** Drag ended: refresh the probability info boxes for the staged limits. */
  async dragEnd(): Promise<void> {
    await this.refreshProbabilities();
  }

  private lastAttempt: { buy: number; sell: number | null } | null = null;

  async submit(): Promise<void> {
    if (!this.confirmed) return;
    const previous = this.confirmed;
    const attempt = { buy: this.pendingBuy, sell: this.pendingSell };
    this.status = "submitting";
    this.render();
    try {
      const update: { max_buy_mct: number; min_sell_mct?: number } = {
        max_buy_mct: attempt.buy,
      };
      if (this.kind === "PROSUMER" && attempt.sell !== null) {
        update.min_sell_mct = attempt.sell;
      }
      const confirmed = await this.api.submitPreferences(this.account, update);
      this.adoptConfirmed(confirmed);
      this.status = "idle";
      this.lastAttempt = null;
      this.onConfirmed(confirmed);
    } catch (error) {
      // roll back to the last confirmed state; nothing unconfirmed survives,
      // but keep the attempt around so Retry can re-stage it
      this.adoptConfirmed(previous);
      this.lastAttempt = attempt;
      this.status = error instanceof ApiError ? "rejected" : "network_error";
    }
    this.render();
    await this.refreshProbabilities();
  }

  async retry(): Promise<void> {
    if (this.lastAttempt) {
      this.pendingBuy = this.lastAttempt.buy;
      this.pendingSell = this.lastAttempt.sell;
    }
    await this.submit();
  }

  async refreshProbabilities(): Promise<void> {
    const buyBox = this.root.querySelector<HTMLElement>('[data-testid="buy-probability"]');
    if (buyBox) {
      buyBox.textContent = await this.probabilityText("BUY", this.pendingBuy);
    }
    if (this.kind === "PROSUMER" && this.pendingSell !== null) {
      const sellBox = this.root.querySelector<HTMLElement>(
        '[data-testid="sell-probability"]',
      );
      if (sellBox) {
        sellBox.textContent = await this.probabilityText("SELL", this.pendingSell);
      }
    }
  }

  private async probabilityText(side: "BUY" | "SELL", limit: number): Promise<string> {
    try {
      const estimate = await this.api.matchProbability(this.account, side, limit);
      if (estimate.status === "UNKNOWN" || estimate.probability === null) {
        return "no data yet";
      }
      const verb = side === "BUY" ? "buying" : "selling";
      return `chance of ${verb} locally at this limit: ${formatRatio(estimate.probability)}`;
    } catch {
      return "probability unavailable";
    }
  }

  private sliderRow(
    side: "buy" | "sell",
    label: string,
    value: number,
    confirmedValue: number | null,
  ): HTMLElement {
    const row = document.createElement("div");
    row.className = `slider-row slider-${side}`;
    row.dataset.testid = `${side}-slider-row`;

    const title = document.createElement("label");
    title.textContent = label;
    row.appendChild(title);

    const input = document.createElement("input");
    input.type = "range";
    input.min = String(this.floor);
    input.max = String(this.ceiling);
    input.step = "100";
    input.value = String(value);
    input.dataset.testid = `${side}-slider`;
    input.addEventListener("input", () => {
      const moved = Number(input.value);
      if (side === "buy") this.moveBuy(moved);
      else this.moveSell(moved);
    });
    input.addEventListener("change", () => {
      void this.dragEnd();
    });
    row.appendChild(input);

    const pendingLabel = document.createElement("span");
    pendingLabel.className = "slider-pending";
    pendingLabel.dataset.testid = `${side}-pending`;
    pendingLabel.textContent = formatPrice(value);
    row.appendChild(pendingLabel);

    const confirmedLabel = document.createElement("span");
    confirmedLabel.className = "slider-confirmed";
    confirmedLabel.dataset.testid = `${side}-confirmed`;
    confirmedLabel.textContent =
      confirmedValue === null ? "—" : `active: ${formatPrice(confirmedValue)}`;
    if (confirmedValue !== null) {
      confirmedLabel.dataset.value = String(confirmedValue);
    }
    row.appendChild(confirmedLabel);

    const infoBox = document.createElement("p");
    infoBox.className = "info-box";
    infoBox.dataset.testid = `${side}-probability`;
    infoBox.textContent = "…";
    row.appendChild(infoBox);

    return row;
  }

  render(): void {
    this.root.textContent = "";
    const container = document.createElement("section");
    container.className = "sliders";

    if (this.status === "loading") {
      const note = document.createElement("p");
      note.dataset.testid = "sliders-loading";
      note.textContent = "loading preferences…";
      container.appendChild(note);
      this.root.appendChild(container);
      return;
    }

    if (this.kind === "PROSUMER") {
      container.appendChild(
        this.sliderRow(
          "sell",
          "Minimum price for selling to neighbors",
          this.pendingSell ?? this.floor,
          this.confirmed?.min_sell_mct ?? null,
        ),
      );
    }
    container.appendChild(
      this.sliderRow(
        "buy",
        "Maximum price for buying locally",
        this.pendingBuy,
        this.confirmed?.max_buy_mct ?? null,
      ),
    );

    const submit = document.createElement("button");
    submit.dataset.testid = "submit-preferences";
    submit.textContent = this.status === "submitting" ? "Submitting…" : "Confirm limits";
    submit.disabled = this.status === "submitting" || !this.dirty();
    submit.addEventListener("click", () => {
      void this.submit();
    });
    container.appendChild(submit);

    const banner = document.createElement("p");
    banner.className = "banner";
    banner.dataset.testid = "slider-banner";
    if (this.status === "network_error") {
      banner.textContent = "Could not reach your agent — values restored. Retry?";
      banner.classList.add("banner-retry");
      const retry = document.createElement("button");
      retry.dataset.testid = "retry-submit";
      retry.textContent = "Retry";
      retry.addEventListener("click", () => {
        void this.retry();
      });
      banner.appendChild(retry);
    } else if (this.status === "rejected") {
      banner.textContent = "The agent rejected the update (authorization failed).";
      banner.classList.add("banner-error");
    } else if (this.status === "pending") {
      banner.textContent = "Unconfirmed changes — press Confirm to activate.";
    }
    container.appendChild(banner);

    this.root.appendChild(container);
  }
}
