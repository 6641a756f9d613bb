"""Serve a real node API over a freshly simulated chain, for UI development.

Usage: python3 scripts/serve_fixture_node.py [port]
Runs the toy community for 96 intervals, then serves the explorer + agent
endpoints (dev-signed, so the UI can update preferences without keys).
"""

import sys

import uvicorn

from gridmarket.agent import HouseholdAgent
from gridmarket.explorer import Explorer
from gridmarket.httpapi import NodeFacade, create_app
from gridmarket.ledger import Chain, read_block_log
from gridmarket.metering import HouseholdKind
from gridmarket.scenario import _synthesize_all, build_genesis, run_scenario, toy_scenario


def build_facade() -> NodeFacade:
    import tempfile
    from pathlib import Path

    spec = toy_scenario(n_prosumers=3, n_consumers=1, seed=11)
    with tempfile.TemporaryDirectory() as tmp:
        log = Path(tmp) / "blocks.log"
        report = run_scenario(spec, 96, block_log_path=log)
        assert report["completed"], "simulation did not complete"
        chain = Chain(build_genesis(toy_scenario(n_prosumers=3, n_consumers=1, seed=11)))
        for block in read_block_log(log):
            chain.commit_block(block)

    start = spec.genesis_time // 900
    profiles = _synthesize_all(spec, start, 96)
    readings = {}
    agents = {}
    pubkeys = {}
    for household in spec.households:
        keypair = household.keypair()
        address = keypair.address.hex
        readings[address] = profiles[household.id].readings
        agents[address] = HouseholdAgent(
            keypair,
            spec.tariff,
            is_prosumer=household.kind is HouseholdKind.PROSUMER,
            max_buy_mct=household.max_buy_mct,
            min_sell_mct=household.min_sell_mct,
        )
        pubkeys[address] = keypair.public_key
        print(f"{household.id}: {address} ({household.kind.value})")
    return NodeFacade(
        chain,
        spec.tariff,
        Explorer(chain, readings),
        agents=agents,
        pubkeys=pubkeys,
        dev_sign=True,
    )


if __name__ == "__main__":
    port = int(sys.argv[1]) if len(sys.argv) > 1 else 8801
    facade = build_facade()
    print(f"serving fixture node on 127.0.0.1:{port}")
    uvicorn.run(create_app(facade), host="127.0.0.1", port=port, log_level="warning")
