"""Operator entry points.

    gridmarket keygen --out keys.json
    gridmarket init-scenario --out scenario.json [--reference]
    gridmarket simulate --scenario scenario.json --intervals 96 --seed 7 --out report/
    gridmarket node --config node.json [--validator/--light]
    gridmarket explorer --chain blocks.log --genesis genesis.json --port 8545

``simulate`` is the deterministic desk-scale run: same scenario and seed give
byte-identical reports; the exit code is nonzero if any invariant failed.
``node`` runs a live validator or light node over TCP with its HTTP API.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click

from .agent import HouseholdAgent
from .consensus import ConsensusNode, LightNode, Timeouts
from .explorer import Explorer
from .httpapi import NodeFacade, create_app
from .identity import generate_keypair
from .ledger import Chain, GenesisConfig, append_block_log, read_block_log
from .metering import load_profiles
from .network import TcpTransport
from .runtime import LiveRunner
from .scenario import ScenarioSpec, build_genesis, reference_scenario, run_scenario, toy_scenario


@click.group()
def main() -> None:
    """Neighborhood energy market node and simulation tools."""


@main.command()
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Key file to write.")
@click.option("--seed", type=str, default=None, help="32-byte hex seed for a deterministic key.")
def keygen(out: str, seed: str | None) -> None:
    """Generate a keypair and write it as JSON (private key included!)."""
    keypair = generate_keypair(bytes.fromhex(seed) if seed else None)
    data = {
        "private_key": keypair.private_key.hex(),
        "public_key": keypair.public_key.hex(),
        "address": keypair.address.hex,
    }
    Path(out).write_text(json.dumps(data, indent=2) + "\n")
    click.echo(f"address {data['address']}")


@main.command("init-scenario")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--reference/--toy", default=True, help="Pilot-sized (37 households) or 4-household toy.")
@click.option("--seed", type=int, default=7)
def init_scenario(out: str, reference: bool, seed: int) -> None:
    """Write a ready-to-run scenario file."""
    spec = reference_scenario(seed=seed) if reference else toy_scenario(seed=seed)
    spec.save(out)
    click.echo(f"wrote scenario {spec.name!r} with {len(spec.households)} households")


@main.command()
@click.option("--scenario", "scenario_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def genesis(scenario_path: str, out: str) -> None:
    """Derive the genesis file (validators, tariffs, chain params) from a scenario."""
    spec = ScenarioSpec.load(scenario_path)
    build_genesis(spec).save(out)
    click.echo(f"wrote genesis with {len(spec.prosumers()) + 1} validators")


@main.command()
@click.option("--scenario", "scenario_path", type=click.Path(exists=True), required=True)
@click.option("--intervals", type=int, default=96, show_default=True)
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.option("--profiles", type=click.Path(exists=True), default=None, help="Meter CSV instead of synthetic profiles.")
@click.option("--block-log", type=click.Path(dir_okay=False), default=None, help="Also write the committed block log.")
def simulate(scenario_path, intervals, seed, out_dir, profiles, block_log) -> None:
    """Run the deterministic end-to-end community simulation."""
    spec = ScenarioSpec.load(scenario_path)
    if seed is not None:
        spec.seed = seed
    started = time.time()
    report = run_scenario(
        spec, intervals, out_dir=out_dir, profiles_csv=profiles, block_log_path=block_log
    )
    elapsed = time.time() - started
    click.echo(
        f"{report['scenario']}: {report['height']} blocks, "
        f"{len(report['intervals'])} intervals in {elapsed:.1f}s, "
        f"mean local coverage {report['summary']['mean_local_coverage']}"
    )
    failures = report["invariant_failures"]
    if failures:
        for failure in failures:
            click.echo(f"INVARIANT FAILED: {failure}", err=True)
        sys.exit(1)
    if not report["completed"]:
        click.echo("run did not complete the requested intervals", err=True)
        sys.exit(2)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--validator/--light", default=True)
def node(config_path: str, validator: bool) -> None:
    """Run a live node over TCP (config: key, genesis, listen, peers, http)."""
    config = json.loads(Path(config_path).read_text())
    genesis = GenesisConfig.load(config["genesis"])
    keypair = generate_keypair(bytes.fromhex(config["key_seed"]))
    if validator:
        consensus_node = ConsensusNode(
            keypair, genesis, timeouts=Timeouts(), use_wall_clock=True
        )
    else:
        consensus_node = LightNode(keypair, genesis)
    transport = TcpTransport(
        keypair.address.hex,
        tuple(config["listen"]),
        {addr: tuple(hostport) for addr, hostport in config.get("peers", {}).items()},
        on_message=lambda message: None,  # re-bound by the runner
    )
    runner = LiveRunner(consensus_node, transport)
    log_path = config.get("block_log")
    if log_path:
        runner.on_commit.append(lambda _node, block: append_block_log(log_path, block))

    http_port = config.get("http_port")
    if http_port:
        import threading

        import uvicorn

        agents = {}
        if config.get("agent", True):
            agents[keypair.address.hex] = HouseholdAgent(
                keypair,
                genesis.tariff,
                is_prosumer=validator,
            )
        facade = NodeFacade(
            consensus_node.chain,
            genesis.tariff,
            Explorer(consensus_node.chain),
            agents=agents,
            pubkeys={keypair.address.hex: keypair.public_key},
            dev_sign=bool(config.get("dev_sign", False)),
        )
        app = create_app(facade)
        server = uvicorn.Server(
            uvicorn.Config(app, host="127.0.0.1", port=http_port, log_level="warning")
        )
        threading.Thread(target=server.run, daemon=True).start()
        click.echo(f"http api on 127.0.0.1:{http_port}")

    click.echo(
        f"node {keypair.address.hex[:12]} listening on {config['listen']} "
        f"({'validator' if validator else 'light'})"
    )
    runner.start()
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        runner.stop()


@main.command()
@click.option("--chain", "chain_path", type=click.Path(exists=True), required=True, help="Block log file.")
@click.option("--genesis", "genesis_path", type=click.Path(exists=True), required=True)
@click.option("--profiles", type=click.Path(exists=True), default=None)
@click.option("--port", type=int, default=8545, show_default=True)
def explorer(chain_path: str, genesis_path: str, profiles: str | None, port: int) -> None:
    """Serve the read-only explorer API over a persisted block log."""
    import uvicorn

    genesis = GenesisConfig.load(genesis_path)
    chain = Chain(genesis)
    for block in read_block_log(chain_path):
        chain.commit_block(block)
    readings = {}
    if profiles:
        for profile in load_profiles(profiles):
            readings[profile.household_id] = profile.readings
    facade = NodeFacade(chain, genesis.tariff, Explorer(chain, readings))
    click.echo(f"explorer over {chain.height} blocks on 127.0.0.1:{port}")
    uvicorn.run(create_app(facade), host="127.0.0.1", port=port, log_level="warning")


if __name__ == "__main__":
    main()
