import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { PriceSliders } from "../src/sliders.js";
import { FixtureServer } from "./fixture_server.js";
import accounts from "./fixtures/accounts.json";

let server: FixtureServer;
let root: HTMLElement;

function makeSliders(kind: "PROSUMER" | "CONSUMER", onConfirmed = () => {}) {
  const api = new ApiClient("http://fixture", server.fetch);
  const account = kind === "PROSUMER" ? server.prosumer : server.consumer;
  return new PriceSliders(root, api, account, kind, server.tariff, onConfirmed);
}

beforeEach(() => {
  server = new FixtureServer();
  document.body.innerHTML = '<div id="mount"></div>';
  root = document.getElementById("mount")!;
});

describe("slider layout", () => {
  it("prosumers get both sliders", async () => {
    const sliders = makeSliders("PROSUMER");
    await sliders.load();
    expect(root.querySelector('[data-testid="sell-slider"]')).not.toBeNull();
    expect(root.querySelector('[data-testid="buy-slider"]')).not.toBeNull();
  });

  it("consumer view has no sell slider at all", async () => {
    const sliders = makeSliders("CONSUMER");
    await sliders.load();
    expect(root.querySelector('[data-testid="sell-slider"]')).toBeNull();
    expect(root.querySelector('[data-testid="sell-slider-row"]')).toBeNull();
    expect(root.querySelector('[data-testid="buy-slider"]')).not.toBeNull();
  });

  it("slider bounds are the tariff band", async () => {
    const sliders = makeSliders("PROSUMER");
    await sliders.load();
    const input = root.querySelector<HTMLInputElement>('[data-testid="buy-slider"]')!;
    expect(input.min).toBe(String(server.tariff.feed_in_mct));
    expect(input.max).toBe(String(server.tariff.retail_energy_mct));
  });

  it("loads the agent's confirmed preferences", async () => {
    const sliders = makeSliders("PROSUMER");
    await sliders.load();
    const confirmed = root.querySelector<HTMLElement>('[data-testid="buy-confirmed"]')!;
    expect(confirmed.dataset.value).toBe(String(accounts.prosumer.max_buy_mct));
  });
});

describe("staging and clamping", () => {
  it("moving a slider stages a pending value without touching confirmed", async () => {
    const sliders = makeSliders("PROSUMER");
    await sliders.load();
    sliders.moveBuy(6600);
    expect(sliders.pendingBuy).toBe(6600);
    expect(sliders.confirmed!.max_buy_mct).toBe(accounts.prosumer.max_buy_mct);
    const confirmed = root.querySelector<HTMLElement>('[data-testid="buy-confirmed"]')!;
    expect(confirmed.dataset.value).toBe(String(accounts.prosumer.max_buy_mct));
  });

  it("values clamp into the tariff band", async () => {
    const sliders = makeSliders("PROSUMER");
    await sliders.load();
    sliders.moveBuy(999_999);
    expect(sliders.pendingBuy).toBe(server.tariff.retail_energy_mct);
    sliders.moveSell(1);
    expect(sliders.pendingSell).toBe(server.tariff.feed_in_mct);
  });

  it("submit is disabled until something changes", async () => {
    const sliders = makeSliders("PROSUMER");
    await sliders.load();
    const button = () =>
      root.querySelector<HTMLButtonElement>('[data-testid="submit-preferences"]')!;
    expect(button().disabled).toBe(true);
    sliders.moveBuy(6600);
    expect(button().disabled).toBe(false);
  });
});

describe("submit round trip", () => {
  it("confirms the server-returned values and notifies", async () => {
    let notified = 0;
    const sliders = makeSliders("PROSUMER", () => {
      notified += 1;
    });
    await sliders.load();
    sliders.moveBuy(6600);
    sliders.moveSell(5200);
    await sliders.submit();
    expect(server.submits).toBe(1);
    expect(sliders.status).toBe("idle");
    expect(sliders.confirmed!.max_buy_mct).toBe(6600);
    expect(sliders.confirmed!.min_sell_mct).toBe(5200);
    expect(notified).toBe(1);
    const confirmed = root.querySelector<HTMLElement>('[data-testid="sell-confirmed"]')!;
    expect(confirmed.dataset.value).toBe("5200");
  });

  it("the next fixture clearing reflects the submitted limit", async () => {
    const before = server.nextClearing().trades[0]!.price_mct;
    const sliders = makeSliders("PROSUMER");
    await sliders.load();
    sliders.moveSell(5200);
    await sliders.submit();
    const after = server.nextClearing().trades[0]!;
    const buyLimit = server.prefs.get(server.consumer)!.max_buy_mct;
    expect(after.price_mct).toBe(Math.floor((buyLimit + 5200) / 2));
    expect(after.price_mct).not.toBe(before);
  });

  it("out-of-band submissions come back clamped by the agent", async () => {
    const sliders = makeSliders("PROSUMER");
    await sliders.load();
    // bypass local clamping to prove the confirmed value is the server's
    sliders.pendingBuy = 999_999;
    await sliders.submit();
    expect(sliders.confirmed!.max_buy_mct).toBe(server.tariff.retail_energy_mct);
  });
});

describe("failure handling", () => {
  it("network failure restores confirmed values and offers retry", async () => {
    const sliders = makeSliders("PROSUMER");
    await sliders.load();
    sliders.moveBuy(6600);
    server.failNextSubmit("network");
    await sliders.submit();
    expect(sliders.status).toBe("network_error");
    // display rolled back: pending mirrors confirmed again
    expect(sliders.pendingBuy).toBe(accounts.prosumer.max_buy_mct);
    const input = root.querySelector<HTMLInputElement>('[data-testid="buy-slider"]')!;
    expect(input.value).toBe(String(accounts.prosumer.max_buy_mct));
    expect(root.querySelector('[data-testid="retry-submit"]')).not.toBeNull();
    // retry re-stages the attempt and succeeds
    await sliders.retry();
    expect(sliders.status).toBe("idle");
    expect(sliders.confirmed!.max_buy_mct).toBe(6600);
  });

  it("authorization failure shows an error banner and rolls back", async () => {
    const sliders = makeSliders("PROSUMER");
    await sliders.load();
    sliders.moveSell(5300);
    server.failNextSubmit("forbidden");
    await sliders.submit();
    expect(sliders.status).toBe("rejected");
    expect(sliders.confirmed!.min_sell_mct).toBe(accounts.prosumer.min_sell_mct);
    const banner = root.querySelector<HTMLElement>('[data-testid="slider-banner"]')!;
    expect(banner.textContent).toContain("rejected");
    expect(server.prefs.get(server.prosumer)!.min_sell_mct).toBe(
      accounts.prosumer.min_sell_mct,
    );
  });

  it("never displays a value the agent has not confirmed", async () => {
    const sliders = makeSliders("PROSUMER");
    await sliders.load();
    sliders.moveBuy(7000);
    server.failNextSubmit("network");
    await sliders.submit();
    const confirmedLabels = root.querySelectorAll<HTMLElement>(".slider-confirmed");
    for (const label of confirmedLabels) {
      expect(label.textContent).not.toContain("7.00");
    }
  });
});

describe("probability info boxes", () => {
  it("drag end refreshes the estimate", async () => {
    const sliders = makeSliders("PROSUMER");
    await sliders.load();
    const calls = server.probabilityCalls;
    sliders.moveBuy(7400);
    await sliders.dragEnd();
    expect(server.probabilityCalls).toBeGreaterThan(calls);
    const box = root.querySelector<HTMLElement>('[data-testid="buy-probability"]')!;
    expect(box.textContent).toMatch(/chance of buying locally/);
    expect(box.textContent).toMatch(/%/);
  });

  it("dom change event triggers the refresh (drag-end wiring)", async () => {
    const sliders = makeSliders("PROSUMER");
    await sliders.load();
    const calls = server.probabilityCalls;
    const input = root.querySelector<HTMLInputElement>('[data-testid="buy-slider"]')!;
    input.value = "7600";
    input.dispatchEvent(new Event("input"));
    expect(sliders.pendingBuy).toBe(7600);
    // re-render replaced the node; fire change on the live one
    const live = root.querySelector<HTMLInputElement>('[data-testid="buy-slider"]')!;
    live.dispatchEvent(new Event("change"));
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(server.probabilityCalls).toBeGreaterThan(calls);
  });

  it("a higher buy limit never lowers the estimate", async () => {
    const api = new ApiClient("http://fixture", server.fetch);
    const low = await api.matchProbability(server.prosumer, "BUY", 4500);
    const high = await api.matchProbability(server.prosumer, "BUY", 7900);
    expect(low.probability).not.toBeNull();
    expect(high.probability!).toBeGreaterThanOrEqual(low.probability!);
  });
});
