/**
 * Page bootstrap: read config from query parameters, wire the sliders and
 * the dashboard to the node's API.
 *
 *   index.html?api=http://127.0.0.1:8001&account=<64-hex>&kind=PROSUMER
 */

import { ApiClient } from "./api.js";
import { Dashboard } from "./dashboard.js";
import { HouseholdKind, PriceSliders } from "./sliders.js";

export async function boot(root: HTMLElement): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("api") ?? "http://127.0.0.1:8001";
  const account = params.get("account") ?? "";
  const kind = (params.get("kind") ?? "PROSUMER") as HouseholdKind;

  root.textContent = "";
  const header = document.createElement("header");
  const title = document.createElement("h1");
  title.textContent = "Your neighborhood energy market";
  header.appendChild(title);
  root.appendChild(header);

  if (!/^[0-9a-f]{64}$/.test(account)) {
    const hint = document.createElement("p");
    hint.textContent =
      "Pass ?api=<node url>&account=<64-hex address>&kind=PROSUMER|CONSUMER";
    root.appendChild(hint);
    return;
  }

  const api = new ApiClient(base);
  const status = await api.status();

  const sliderMount = document.createElement("div");
  sliderMount.id = "sliders";
  const dashboardMount = document.createElement("div");
  dashboardMount.id = "dashboard";
  root.append(sliderMount, dashboardMount);

  const horizon = {
    from: status.current_interval_id - status.cleared_intervals,
    to: status.current_interval_id - 1,
  };
  const day = {
    from: Math.max(horizon.from, horizon.to - 95),
    to: horizon.to,
  };
  const dashboard = new Dashboard(dashboardMount, api, account, day, horizon);
  const sliders = new PriceSliders(
    sliderMount,
    api,
    account,
    kind,
    status.tariff,
    () => void dashboard.load(),
  );
  await Promise.all([sliders.load(), dashboard.load()]);
}

const mount = document.getElementById("app");
if (mount) {
  void boot(mount);
}
