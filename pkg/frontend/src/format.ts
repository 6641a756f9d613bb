/** Display helpers. Values are shown, never recomputed. */

export function formatWh(wh: number): string {
  if (Math.abs(wh) >= 10_000) return `${(wh / 1000).toFixed(1)} kWh`;
  return `${wh} Wh`;
}

/** milli-cents per kWh -> cents per kWh for humans */
export function formatPrice(mct: number): string {
  return `${(mct / 1000).toFixed(2)} ct/kWh`;
}

/** a ratio straight from the API, rendered as a percentage */
export function formatRatio(ratio: number): string {
  return `${(ratio * 100).toFixed(1)}%`;
}

export function formatMoney(uct: number): string {
  return `${(uct / 1_000_000).toFixed(2)} ct`;
}

export function intervalToDate(intervalId: number): Date {
  return new Date(intervalId * 900 * 1000);
}

export function intervalLabel(intervalId: number): string {
  const date = intervalToDate(intervalId);
  const hh = String(date.getUTCHours()).padStart(2, "0");
  const mm = String(date.getUTCMinutes()).padStart(2, "0");
  return `${hh}:${mm}`;
}
