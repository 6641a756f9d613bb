"""Regenerate the frontend's fixture payloads from a real simulated run.

Usage: python3 scripts/make_ui_fixtures.py
Writes frontend/tests/fixtures/*.json. Deterministic (seeded scenario), so
the checked-in fixtures only change when the market logic does.
"""

import json
from pathlib import Path

from gridmarket.explorer import Explorer
from gridmarket.ledger import Chain, read_block_log
from gridmarket.scenario import _synthesize_all, build_genesis, run_scenario, toy_scenario

OUT = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures"
N_INTERVALS = 96


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    spec = toy_scenario(n_prosumers=3, n_consumers=1, seed=11)
    log_path = OUT / "_blocks.tmp"
    report = run_scenario(spec, N_INTERVALS, block_log_path=log_path)
    assert report["completed"] and not report["invariant_failures"]

    chain = Chain(build_genesis(toy_scenario(n_prosumers=3, n_consumers=1, seed=11)))
    for block in read_block_log(log_path):
        chain.commit_block(block)
    log_path.unlink()

    start = spec.genesis_time // 900
    profiles = _synthesize_all(spec, start, N_INTERVALS)
    prosumer = spec.households[0]
    consumer = next(h for h in spec.households if h.min_sell_mct is None)
    readings = {
        h.keypair().address.hex: profiles[h.id].readings for h in spec.households
    }
    explorer = Explorer(chain, readings)

    account = prosumer.keypair().address.hex
    series = explorer.series(account, start, start + N_INTERVALS - 1)
    kpis = explorer.kpis(account, start, start + N_INTERVALS - 1).to_wire()

    # per-interval book extremes drive the fixture server's probability math
    book_stats = []
    for book in chain.state.book_history:
        asks = [o.limit_price_mct for o in book.sells if o.account != account]
        bids = [o.limit_price_mct for o in book.buys if o.account != account]
        book_stats.append(
            {
                "interval_id": book.interval_id,
                "min_ask_mct": min(asks) if asks else None,
                "max_bid_mct": max(bids) if bids else None,
            }
        )

    (OUT / "status.json").write_text(
        json.dumps(
            {
                "height": chain.height,
                "current_interval_id": chain.state.current_interval_id,
                "cleared_intervals": len(chain.state.clearing_history),
                "tariff": spec.tariff.to_wire(),
                "interval_seconds": 900,
            },
            indent=2,
        )
    )
    (OUT / "series.json").write_text(json.dumps(series, indent=2))
    (OUT / "kpis.json").write_text(json.dumps(kpis, indent=2))
    (OUT / "book_stats.json").write_text(json.dumps(book_stats, indent=2))
    (OUT / "accounts.json").write_text(
        json.dumps(
            {
                "prosumer": {
                    "address": account,
                    "max_buy_mct": prosumer.max_buy_mct or spec.tariff.retail_energy_mct,
                    "min_sell_mct": prosumer.min_sell_mct or spec.tariff.feed_in_mct,
                },
                "consumer": {
                    "address": consumer.keypair().address.hex,
                    "max_buy_mct": consumer.max_buy_mct or spec.tariff.retail_energy_mct,
                },
                "window": {"from": start, "to": start + N_INTERVALS - 1},
            },
            indent=2,
        )
    )
    print(f"wrote fixtures for {account[:12]} into {OUT}")


if __name__ == "__main__":
    main()
