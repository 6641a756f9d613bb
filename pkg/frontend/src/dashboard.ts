/**
 * Personal energy dashboard: production (green) and demand (blue) over a
 * chosen timeframe, plus the four KPI tiles - production, demand,
 * self-consumption ratio, self-sufficiency ratio.
 *
 * Tile values come verbatim from the explorer; the client formats, it never
 * recomputes. Timeframes move via preset buttons, a date picker, and a zoom
 * band under the chart; hovering the chart shows the exact Wh of the
 * nearest point.
 */

import { ApiClient, KpiReport, SeriesPoint } from "./api.js";
import { formatRatio, formatWh, intervalLabel, intervalToDate } from "./format.js";

export interface Timeframe {
  from: number;
  to: number;
}

const SVG_NS = "http://www.w3.org/2000/svg";
const WIDTH = 720;
const HEIGHT = 220;
const INTERVALS_PER_DAY = 96;

export class Dashboard {
  timeframe: Timeframe;
  /** zoom band, as interval offsets within the loaded series */
  private zoom: { start: number; end: number } | null = null;
  private series: SeriesPoint[] = [];
  private kpis: KpiReport | null = null;
  private error: string | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly account: string,
    initial: Timeframe,
    private readonly horizon: Timeframe = initial,
  ) {
    this.timeframe = { ...initial };
  }

  async load(): Promise<void> {
    this.error = null;
    try {
      const [series, kpis] = await Promise.all([
        this.api.series(this.account, this.timeframe.from, this.timeframe.to),
        this.api.kpis(this.account, this.timeframe.from, this.timeframe.to),
      ]);
      this.series = series;
      this.kpis = kpis;
    } catch (error) {
      this.series = [];
      this.kpis = null;
      this.error = error instanceof Error ? error.message : String(error);
    }
    this.zoom = null;
    this.render();
  }

  async setTimeframe(timeframe: Timeframe): Promise<void> {
    this.timeframe = { ...timeframe };
    await this.load();
  }

  private visibleSeries(): SeriesPoint[] {
    if (!this.zoom) return this.series;
    return this.series.slice(this.zoom.start, this.zoom.end + 1);
  }

  setZoom(start: number, end: number): void {
    if (this.series.length === 0) return;
    const lastIndex = this.series.length - 1;
    start = Math.max(0, Math.min(lastIndex, Math.floor(start)));
    end = Math.max(start, Math.min(lastIndex, Math.floor(end)));
    this.zoom = start === 0 && end === lastIndex ? null : { start, end };
    this.render();
  }

  // -- rendering ----------------------------------------------------------

  render(): void {
    this.root.textContent = "";
    const section = document.createElement("section");
    section.className = "dashboard";
    section.appendChild(this.controls());

    if (this.error !== null || this.series.length === 0) {
      const empty = document.createElement("p");
      empty.dataset.testid = "no-data";
      empty.textContent = this.error
        ? `No data for this timeframe (${this.error}).`
        : "No data for this timeframe.";
      section.appendChild(empty);
      this.root.appendChild(section);
      return;
    }

    section.appendChild(this.kpiTiles());
    section.appendChild(this.chart());
    section.appendChild(this.zoomBand());
    this.root.appendChild(section);
  }

  private controls(): HTMLElement {
    const bar = document.createElement("div");
    bar.className = "timeframe-controls";

    const presets: Array<[string, number]> = [
      ["Day", INTERVALS_PER_DAY],
      ["3 days", 3 * INTERVALS_PER_DAY],
      ["Week", 7 * INTERVALS_PER_DAY],
    ];
    for (const [label, count] of presets) {
      const button = document.createElement("button");
      button.textContent = label;
      button.dataset.testid = `preset-${label.replace(" ", "-").toLowerCase()}`;
      button.addEventListener("click", () => {
        const to = this.horizon.to;
        void this.setTimeframe({ from: Math.max(this.horizon.from, to - count + 1), to });
      });
      bar.appendChild(button);
    }
    const all = document.createElement("button");
    all.textContent = "All";
    all.dataset.testid = "preset-all";
    all.addEventListener("click", () => {
      void this.setTimeframe({ ...this.horizon });
    });
    bar.appendChild(all);

    const picker = document.createElement("input");
    picker.type = "date";
    picker.dataset.testid = "date-picker";
    picker.addEventListener("change", () => {
      if (!picker.value) return;
      const dayStart = Math.floor(Date.parse(picker.value + "T00:00:00Z") / 1000 / 900);
      void this.setTimeframe({ from: dayStart, to: dayStart + INTERVALS_PER_DAY - 1 });
    });
    bar.appendChild(picker);
    return bar;
  }

  private kpiTiles(): HTMLElement {
    const kpis = this.kpis!;
    const grid = document.createElement("div");
    grid.className = "kpi-grid";
    const tiles: Array<[string, string, number, string]> = [
      ["production", "Production", kpis.produced_wh, formatWh(kpis.produced_wh)],
      ["demand", "Demand", kpis.consumed_wh, formatWh(kpis.consumed_wh)],
      [
        "self-consumption",
        "Self-consumption ratio",
        kpis.self_consumption_ratio,
        formatRatio(kpis.self_consumption_ratio),
      ],
      [
        "self-sufficiency",
        "Self-sufficiency ratio",
        kpis.self_sufficiency_ratio,
        formatRatio(kpis.self_sufficiency_ratio),
      ],
    ];
    for (const [id, label, raw, text] of tiles) {
      const tile = document.createElement("div");
      tile.className = "kpi-tile";
      tile.dataset.testid = `kpi-${id}`;
      tile.dataset.value = String(raw);
      const name = document.createElement("span");
      name.className = "kpi-label";
      name.textContent = label;
      const value = document.createElement("strong");
      value.className = "kpi-value";
      value.textContent = text;
      tile.append(name, value);
      grid.appendChild(tile);
    }
    return grid;
  }

  private chart(): HTMLElement {
    const wrap = document.createElement("div");
    wrap.className = "chart-wrap";
    const points = this.visibleSeries();
    const peak = Math.max(
      1,
      ...points.map((p) => Math.max(p.produced_wh, p.consumed_wh)),
    );
    const x = (index: number) =>
      points.length === 1 ? WIDTH / 2 : (index / (points.length - 1)) * WIDTH;
    const y = (wh: number) => HEIGHT - (wh / peak) * (HEIGHT - 10);

    const svg = document.createElementNS(SVG_NS, "svg");
    svg.setAttribute("viewBox", `0 0 ${WIDTH} ${HEIGHT}`);
    svg.setAttribute("data-testid", "energy-chart");

    const lines: Array<["production" | "demand", (p: SeriesPoint) => number, string]> = [
      ["production", (p) => p.produced_wh, "var(--green, #2e7d32)"],
      ["demand", (p) => p.consumed_wh, "var(--blue, #1565c0)"],
    ];
    for (const [name, pick, stroke] of lines) {
      const line = document.createElementNS(SVG_NS, "polyline");
      line.setAttribute("fill", "none");
      line.setAttribute("stroke", stroke);
      line.setAttribute("stroke-width", "2");
      line.setAttribute("data-testid", `${name}-line`);
      line.setAttribute(
        "points",
        points.map((p, i) => `${x(i).toFixed(1)},${y(pick(p)).toFixed(1)}`).join(" "),
      );
      svg.appendChild(line);
      for (let i = 0; i < points.length; i++) {
        const dot = document.createElementNS(SVG_NS, "circle");
        dot.setAttribute("cx", x(i).toFixed(1));
        dot.setAttribute("cy", y(pick(points[i]!)).toFixed(1));
        dot.setAttribute("r", "2");
        dot.setAttribute("fill", stroke);
        dot.setAttribute("data-testid", `${name}-point`);
        dot.setAttribute("data-interval", String(points[i]!.interval_id));
        dot.setAttribute("data-wh", String(pick(points[i]!)));
        svg.appendChild(dot);
      }
    }

    const tooltip = document.createElement("div");
    tooltip.className = "chart-tooltip";
    tooltip.dataset.testid = "chart-tooltip";
    tooltip.hidden = true;

    svg.addEventListener("mousemove", (event: MouseEvent) => {
      if (points.length === 0) return;
      const bounds = svg.getBoundingClientRect();
      const fraction =
        bounds.width > 0 ? (event.clientX - bounds.left) / bounds.width : 0;
      const index = Math.min(
        points.length - 1,
        Math.max(0, Math.round(fraction * (points.length - 1))),
      );
      const point = points[index]!;
      tooltip.hidden = false;
      tooltip.textContent =
        `${intervalLabel(point.interval_id)}: production ${formatWh(point.produced_wh)}, ` +
        `demand ${formatWh(point.consumed_wh)}`;
      tooltip.dataset.interval = String(point.interval_id);
    });
    svg.addEventListener("mouseleave", () => {
      tooltip.hidden = true;
    });

    wrap.append(svg, tooltip, this.legend());
    return wrap;
  }

  private legend(): HTMLElement {
    const legend = document.createElement("p");
    legend.className = "legend";
    const first = this.visibleSeries()[0];
    const last = this.visibleSeries()[this.visibleSeries().length - 1];
    if (first && last) {
      const fromDate = intervalToDate(first.interval_id).toISOString().slice(0, 16);
      const toDate = intervalToDate(last.interval_id).toISOString().slice(0, 16);
      legend.textContent = `production (green) vs demand (blue), ${fromDate} – ${toDate} UTC`;
    }
    return legend;
  }

  private zoomBand(): HTMLElement {
    const band = document.createElement("div");
    band.className = "zoom-band";
    const lastIndex = Math.max(0, this.series.length - 1);
    const start = document.createElement("input");
    const end = document.createElement("input");
    for (const [input, testid, value] of [
      [start, "zoom-start", this.zoom?.start ?? 0],
      [end, "zoom-end", this.zoom?.end ?? lastIndex],
    ] as const) {
      input.type = "range";
      input.min = "0";
      input.max = String(lastIndex);
      input.value = String(value);
      input.dataset.testid = testid;
      input.addEventListener("change", () => {
        this.setZoom(Number(start.value), Number(end.value));
      });
    }
    band.append(start, end);
    return band;
  }
}
