"""Scenario files and the deterministic end-to-end community simulation.

A scenario describes one neighborhood: the households (who has PV, batteries,
which price limits they start with), the utility, the tariffs, and the
network conditions. ``run_scenario`` boots every node on the seeded simulated
network, feeds the agents from synthesized (or supplied) meter profiles,
replays the requested number of 15-minute intervals through consensus, checks
every module invariant along the way, and writes a machine-readable report.

Same scenario + same seed = byte-identical report and final state hash.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .agent import HouseholdAgent
from .consensus import ConsensusNode, EquivocatingNode, LightNode, Timeouts
from .identity import KeyPair, generate_keypair
from .ledger import GenesisConfig, write_block_log
from .market import ClearingResult, OrderBook, TariffConfig, local_coverage
from .metering import (
    HouseholdKind,
    HouseholdProfile,
    MeterReading,
    load_profiles,
    synthesize_profile,
)
from .network import Partition, SimNetwork

__all__ = [
    "ScenarioError",
    "HouseholdSpec",
    "NetworkSpec",
    "ScenarioSpec",
    "reference_scenario",
    "toy_scenario",
    "build_genesis",
    "run_scenario",
    "write_report",
]

DEFAULT_TARIFF = TariffConfig(
    feed_in_mct=4000, retail_energy_mct=8000, grid_fee_local_mct=5000, grid_fee_full_mct=10000
)


class ScenarioError(ValueError):
    """Scenario file failed validation; message carries the exact location."""


@dataclass(frozen=True)
class HouseholdSpec:
    id: str
    kind: HouseholdKind
    pv_kwp: float
    battery_kwh: float
    key_seed: str  # 32-byte hex
    max_buy_mct: int | None = None
    min_sell_mct: int | None = None

    def keypair(self) -> KeyPair:
        return generate_keypair(bytes.fromhex(self.key_seed))


@dataclass(frozen=True)
class NetworkSpec:
    min_delay: float = 0.01
    max_delay: float = 0.05
    drop_probability: float = 0.0
    partitions: tuple[Partition, ...] = ()


@dataclass
class ScenarioSpec:
    name: str
    seed: int
    genesis_time: int
    households: list[HouseholdSpec]
    utility_key_seed: str
    tariff: TariffConfig = DEFAULT_TARIFF
    interval_seconds: int = 900
    block_interval_seconds: int = 900
    network: NetworkSpec = field(default_factory=NetworkSpec)
    timeouts: Timeouts = field(default_factory=Timeouts)

    def validate(self) -> None:
        where = f"scenario {self.name!r}"
        if self.genesis_time % self.interval_seconds:
            raise ScenarioError(
                f"{where}: genesis_time must sit on an interval boundary"
            )
        if self.interval_seconds % self.block_interval_seconds:
            raise ScenarioError(
                f"{where}: interval_seconds must be a multiple of block_interval_seconds"
            )
        seen: set[str] = set()
        for i, hh in enumerate(self.households):
            loc = f"{where}: households[{i}] ({hh.id!r})"
            if hh.id in seen:
                raise ScenarioError(f"{loc}: duplicate household id")
            seen.add(hh.id)
            if len(bytes.fromhex(hh.key_seed)) != 32:
                raise ScenarioError(f"{loc}: key_seed must be 32 bytes of hex")
            if hh.kind is HouseholdKind.CONSUMER and (hh.pv_kwp or hh.battery_kwh):
                raise ScenarioError(f"{loc}: consumers cannot have PV or battery")
            if hh.kind is HouseholdKind.PROSUMER and hh.pv_kwp <= 0:
                raise ScenarioError(f"{loc}: prosumer needs pv_kwp > 0")
        if len(bytes.fromhex(self.utility_key_seed)) != 32:
            raise ScenarioError(f"{where}: utility_key_seed must be 32 bytes of hex")

    def prosumers(self) -> list[HouseholdSpec]:
        return [h for h in self.households if h.kind is HouseholdKind.PROSUMER]

    def consumers(self) -> list[HouseholdSpec]:
        return [h for h in self.households if h.kind is HouseholdKind.CONSUMER]

    def utility_keypair(self) -> KeyPair:
        return generate_keypair(bytes.fromhex(self.utility_key_seed))

    def to_wire(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "genesis_time": self.genesis_time,
            "interval_seconds": self.interval_seconds,
            "block_interval_seconds": self.block_interval_seconds,
            "tariff": self.tariff.to_wire(),
            "utility_key_seed": self.utility_key_seed,
            "households": [
                {
                    "id": h.id,
                    "kind": h.kind.value,
                    "pv_kwp": h.pv_kwp,
                    "battery_kwh": h.battery_kwh,
                    "key_seed": h.key_seed,
                    **(
                        {"max_buy_mct": h.max_buy_mct}
                        if h.max_buy_mct is not None
                        else {}
                    ),
                    **(
                        {"min_sell_mct": h.min_sell_mct}
                        if h.min_sell_mct is not None
                        else {}
                    ),
                }
                for h in self.households
            ],
            "network": {
                "min_delay": self.network.min_delay,
                "max_delay": self.network.max_delay,
                "drop_probability": self.network.drop_probability,
                "partitions": [
                    {
                        "start": p.start,
                        "end": p.end,
                        "groups": [sorted(group) for group in p.groups],
                    }
                    for p in self.network.partitions
                ],
            },
            "timeouts": {
                "propose": self.timeouts.propose,
                "prevote": self.timeouts.prevote,
                "precommit": self.timeouts.precommit,
                "commit_pause": self.timeouts.commit_pause,
            },
        }

    @classmethod
    def from_wire(cls, data: Mapping) -> "ScenarioSpec":
        try:
            households = [
                HouseholdSpec(
                    id=h["id"],
                    kind=HouseholdKind(h["kind"]),
                    pv_kwp=float(h.get("pv_kwp", 0.0)),
                    battery_kwh=float(h.get("battery_kwh", 0.0)),
                    key_seed=h["key_seed"],
                    max_buy_mct=h.get("max_buy_mct"),
                    min_sell_mct=h.get("min_sell_mct"),
                )
                for h in data["households"]
            ]
            net = data.get("network", {})
            partitions = tuple(
                Partition(
                    start=float(entry["start"]),
                    end=float(entry["end"]),
                    groups=tuple(frozenset(group) for group in entry["groups"]),
                )
                for entry in net.get("partitions", [])
            )
            timeouts = data.get("timeouts", {})
            spec = cls(
                name=data["name"],
                seed=data["seed"],
                genesis_time=data["genesis_time"],
                interval_seconds=data.get("interval_seconds", 900),
                block_interval_seconds=data.get("block_interval_seconds", 900),
                tariff=TariffConfig.from_wire(data["tariff"])
                if "tariff" in data
                else DEFAULT_TARIFF,
                utility_key_seed=data["utility_key_seed"],
                households=households,
                network=NetworkSpec(
                    min_delay=net.get("min_delay", 0.01),
                    max_delay=net.get("max_delay", 0.05),
                    drop_probability=net.get("drop_probability", 0.0),
                    partitions=partitions,
                ),
                timeouts=Timeouts(
                    propose=timeouts.get("propose", 1.0),
                    prevote=timeouts.get("prevote", 0.5),
                    precommit=timeouts.get("precommit", 0.5),
                    commit_pause=timeouts.get("commit_pause", 0.3),
                ),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ScenarioError(f"scenario parse error: {exc!r}") from exc
        spec.validate()
        return spec

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_wire(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioSpec":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: not valid JSON: {exc}") from exc
        return cls.from_wire(data)


def _seed_hex(tag: str, index: int) -> str:
    import hashlib

    return hashlib.sha256(f"{tag}:{index}".encode()).hexdigest()


def reference_scenario(seed: int = 7, genesis_time: int = 1_650_016_800) -> ScenarioSpec:
    """The pilot-shaped community: 37 households, 27 prosumers with 280 kWp
    of PV and 80 kWh of battery in total, the rest pure consumers.

    Price limits are spread deterministically around the tariff band so the
    market actually has something to discover.
    """
    import random

    rng = random.Random(f"reference:{seed}")
    households: list[HouseholdSpec] = []
    # 27 PV capacities in tenths of kWp summing to exactly 2800
    tenths = [2800 // 27] * 27
    for i in range(2800 - sum(tenths)):
        tenths[i] += 1
    # 80 kWh of batteries across ten of the larger systems
    battery = [8.0 if i < 10 else 0.0 for i in range(27)]
    for i in range(27):
        households.append(
            HouseholdSpec(
                id=f"prosumer{i + 1:02d}",
                kind=HouseholdKind.PROSUMER,
                pv_kwp=tenths[i] / 10,
                battery_kwh=battery[i],
                key_seed=_seed_hex(f"prosumer:{seed}", i),
                max_buy_mct=rng.choice([6000, 6500, 7000, 7500, 8000]),
                min_sell_mct=rng.choice([4000, 4200, 4500, 5000, 5500]),
            )
        )
    for i in range(10):
        households.append(
            HouseholdSpec(
                id=f"consumer{i + 1:02d}",
                kind=HouseholdKind.CONSUMER,
                pv_kwp=0.0,
                battery_kwh=0.0,
                key_seed=_seed_hex(f"consumer:{seed}", i),
                max_buy_mct=rng.choice([5500, 6000, 6500, 7000, 8000]),
            )
        )
    return ScenarioSpec(
        name="pilot37",
        seed=seed,
        genesis_time=genesis_time,
        households=households,
        utility_key_seed=_seed_hex(f"utility:{seed}", 0),
    )


def toy_scenario(
    n_prosumers: int = 3,
    n_consumers: int = 1,
    seed: int = 7,
    genesis_time: int = 1_650_016_800,
    name: str = "toy",
) -> ScenarioSpec:
    households = [
        HouseholdSpec(
            id=f"prosumer{i + 1:02d}",
            kind=HouseholdKind.PROSUMER,
            pv_kwp=6.0 + i,
            battery_kwh=4.0 if i % 2 else 0.0,
            key_seed=_seed_hex(f"toy-prosumer:{seed}", i),
            min_sell_mct=4000 + 500 * i,
        )
        for i in range(n_prosumers)
    ] + [
        HouseholdSpec(
            id=f"consumer{i + 1:02d}",
            kind=HouseholdKind.CONSUMER,
            pv_kwp=0.0,
            battery_kwh=0.0,
            key_seed=_seed_hex(f"toy-consumer:{seed}", i),
            max_buy_mct=6000 + 500 * i,
        )
        for i in range(n_consumers)
    ]
    return ScenarioSpec(
        name=name,
        seed=seed,
        genesis_time=genesis_time,
        households=households,
        utility_key_seed=_seed_hex(f"toy-utility:{seed}", 0),
    )


def build_genesis(spec: ScenarioSpec) -> GenesisConfig:
    """Validators are the prosumers plus the utility, in scenario order."""
    validators = [
        (h.keypair().address.hex, h.keypair().public_key) for h in spec.prosumers()
    ]
    utility = spec.utility_keypair()
    validators.append((utility.address.hex, utility.public_key))
    accounts = tuple(h.keypair().address.hex for h in spec.households) + (
        utility.address.hex,
    )
    return GenesisConfig(
        genesis_time=spec.genesis_time,
        interval_seconds=spec.interval_seconds,
        block_interval_seconds=spec.block_interval_seconds,
        tariff=spec.tariff,
        validators=tuple(validators),
        accounts=accounts,
    )


# ---------------------------------------------------------------------------
# In-run invariant checking


def _breakeven_volume(book: OrderBook) -> int:
    """Max crossing volume from the cumulative supply/demand curves.

    Binary search over the sorted step curves; structurally different from
    the matching loop so the two can check each other in every run.
    """
    bids = sorted(
        ((o.limit_price_mct, o.energy_wh) for o in book.buys), key=lambda x: -x[0]
    )
    asks = sorted((o.limit_price_mct, o.energy_wh) for o in book.sells)
    bid_cum: list[int] = []
    bid_price: list[int] = []
    total = 0
    for price, energy in bids:
        total += energy
        bid_cum.append(total)
        bid_price.append(price)
    ask_cum: list[int] = []
    ask_price: list[int] = []
    total = 0
    for price, energy in asks:
        total += energy
        ask_cum.append(total)
        ask_price.append(price)

    def crosses(volume: int) -> bool:
        if volume == 0:
            return True
        if not bid_cum or not ask_cum:
            return False
        if volume > bid_cum[-1] or volume > ask_cum[-1]:
            return False
        b = bid_price[bisect.bisect_left(bid_cum, volume)]
        a = ask_price[bisect.bisect_left(ask_cum, volume)]
        return b >= a

    lo, hi = 0, min(bid_cum[-1] if bid_cum else 0, ask_cum[-1] if ask_cum else 0)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if crosses(mid):
            lo = mid
        else:
            hi = mid - 1
    return lo


def check_interval_invariants(
    result: ClearingResult, book: OrderBook, tariff: TariffConfig
) -> list[str]:
    """Every market invariant one cleared interval must satisfy."""
    failures: list[str] = []
    tag = f"interval {result.interval_id}"
    limits = {o.account: o for o in book.buys + book.sells}

    if sum(e.amount_uct for e in result.settlements) != 0:
        failures.append(f"{tag}: settlements do not sum to zero")

    flows: dict[str, int] = {a: 0 for a in limits}
    for t in result.trades:
        buy = limits.get(t.buyer)
        sell = limits.get(t.seller)
        if buy is None or sell is None:
            failures.append(f"{tag}: trade references account outside the book")
            continue
        flows[t.buyer] += t.energy_wh
        flows[t.seller] += t.energy_wh
        if not sell.limit_price_mct <= t.price_mct <= buy.limit_price_mct:
            failures.append(f"{tag}: trade price outside the pair's limits")
        if t.price_mct != (buy.limit_price_mct + sell.limit_price_mct) // 2:
            failures.append(f"{tag}: trade price is not the floored mean")
        if not tariff.floor_mct <= t.price_mct <= tariff.ceiling_mct:
            failures.append(f"{tag}: trade price outside [feed-in, retail]")
        all_in = t.price_mct + tariff.grid_fee_local_mct
        if all_in > tariff.retail_energy_mct + tariff.grid_fee_full_mct:
            failures.append(f"{tag}: buyer pays more than the utility fallback")
        if t.price_mct < tariff.feed_in_mct:
            failures.append(f"{tag}: seller earns less than feed-in")
    for account, energy in result.utility_sales + result.utility_purchases:
        flows[account] = flows.get(account, 0) + energy
    for account, order in limits.items():
        if flows.get(account) != order.energy_wh:
            failures.append(
                f"{tag}: {account[:8]} submitted {order.energy_wh} Wh but "
                f"{flows.get(account)} Wh were accounted"
            )

    traded = sum(t.energy_wh for t in result.trades)
    if traded != _breakeven_volume(book):
        failures.append(f"{tag}: matched volume differs from curve crossing")
    if not 0.0 <= local_coverage(result) <= 1.0:
        failures.append(f"{tag}: local coverage outside [0, 1]")
    return failures


# ---------------------------------------------------------------------------
# The simulation driver


def _synthesize_all(
    spec: ScenarioSpec, start_interval: int, n_intervals: int
) -> dict[str, HouseholdProfile]:
    return {
        h.id: synthesize_profile(
            h.id, h.kind, h.pv_kwp, h.battery_kwh, start_interval, n_intervals, spec.seed
        )
        for h in spec.households
    }


def run_scenario(
    spec: ScenarioSpec,
    n_intervals: int,
    out_dir: str | Path | None = None,
    profiles_csv: str | Path | None = None,
    crashed: tuple[int, ...] = (),
    byzantine_index: int | None = None,
    time_limit: float | None = None,
    block_log_path: str | Path | None = None,
) -> dict:
    """Boot the community, run ``n_intervals`` clearings, return the report.

    ``crashed`` and ``byzantine_index`` pick validators (scenario order,
    utility last) for fault injection. The report's ``invariant_failures``
    is empty on a healthy run; the CLI turns failures into a nonzero exit.
    """
    spec.validate()
    genesis = build_genesis(spec)
    start_interval = spec.genesis_time // spec.interval_seconds

    if profiles_csv is not None:
        shells = {
            h.id: HouseholdProfile(h.id, h.kind, h.pv_kwp, h.battery_kwh)
            for h in spec.households
        }
        profiles = {p.household_id: p for p in load_profiles(profiles_csv, shells)}
        missing = [h.id for h in spec.households if h.id not in profiles]
        if missing:
            raise ScenarioError(f"profiles missing households: {missing}")
    else:
        profiles = _synthesize_all(spec, start_interval, n_intervals)

    readings: dict[str, dict[int, MeterReading]] = {
        hid: {r.interval_id: r for r in profile.readings}
        for hid, profile in profiles.items()
    }

    net = SimNetwork(
        seed=spec.seed,
        min_delay=spec.network.min_delay,
        max_delay=spec.network.max_delay,
        drop_probability=spec.network.drop_probability,
        partitions=list(spec.network.partitions),
    )

    nodes: dict[str, object] = {}
    agents: dict[str, HouseholdAgent] = {}
    household_of: dict[str, str] = {}  # node address -> household id
    validator_specs = spec.prosumers()
    validator_index = {h.keypair().address.hex: i for i, h in enumerate(validator_specs)}
    utility_key = spec.utility_keypair()
    validator_index[utility_key.address.hex] = len(validator_specs)
    peer_addresses = [h.keypair().address.hex for h in validator_specs] + [
        utility_key.address.hex
    ]

    def make_validator(keypair: KeyPair) -> ConsensusNode:
        index = validator_index[keypair.address.hex]
        if index == byzantine_index:
            return EquivocatingNode(
                keypair, genesis, timeouts=spec.timeouts, peers=peer_addresses
            )
        return ConsensusNode(keypair, genesis, timeouts=spec.timeouts)

    for household in spec.households:
        keypair = household.keypair()
        if household.kind is HouseholdKind.PROSUMER:
            node = make_validator(keypair)
        else:
            node = LightNode(keypair, genesis)
        nodes[node.address] = node
        household_of[node.address] = household.id
        agents[node.address] = HouseholdAgent(
            keypair,
            spec.tariff,
            is_prosumer=household.kind is HouseholdKind.PROSUMER,
            max_buy_mct=household.max_buy_mct,
            min_sell_mct=household.min_sell_mct,
        )
        net.join(node)
    utility_node = make_validator(utility_key)
    nodes[utility_node.address] = utility_node
    net.join(utility_node)

    for index in crashed:
        net.crash(peer_addresses[index])

    last_interval = start_interval + n_intervals - 1

    def submit_for_interval(address: str) -> list:
        node = nodes[address]
        agent = agents[address]
        interval = node.chain.state.current_interval_id
        if interval > last_interval:
            return []
        reading = readings[household_of[address]].get(interval)
        nonce = node.chain.state.accounts.get(address)
        tx = agent.act_on_interval(reading, interval, nonce.nonce if nonce else 0)
        if tx is None:
            return []
        return node.submit_tx(tx)

    def on_commit(address: str, block) -> None:
        if address not in agents or address in net.crashed:
            return
        node = nodes[address]
        agent = agents[address]
        interval = node.chain.state.current_interval_id
        if (
            agent.last_interval_acted is None or interval > agent.last_interval_acted
        ) and interval <= last_interval:
            net.inject(address, lambda a=address: submit_for_interval(a), delay=0.01)

    net.observers.append(on_commit)
    net.start_all()
    for i, address in enumerate(nodes):
        if address in agents and address not in net.crashed:
            net.inject(address, lambda a=address: submit_for_interval(a), delay=0.01 + i * 0.001)

    live_validators = [
        nodes[a] for a in peer_addresses if a not in net.crashed and a in nodes
    ]

    def done() -> bool:
        return all(
            len(v.chain.state.clearing_history) >= n_intervals for v in live_validators
        )

    budget = time_limit if time_limit is not None else 30.0 + n_intervals * 12.0
    net.run_until(budget, stop=done)

    reference = live_validators[0] if live_validators else None
    completed = done() if live_validators else False

    failures: list[str] = []
    intervals_report: list[dict] = []
    if reference is not None:
        state = reference.chain.state
        # cross-node replication: every live node's hash log is a prefix match
        for other_address, other in nodes.items():
            if other_address in net.crashed or other is reference:
                continue
            shared = min(len(other.chain.state_hashes), len(reference.chain.state_hashes))
            if (
                other.chain.state_hashes[:shared]
                != reference.chain.state_hashes[:shared]
            ):
                failures.append(f"replication: {other_address[:8]} diverged")

        for result, book in zip(state.clearing_history[:n_intervals], state.book_history):
            failures.extend(check_interval_invariants(result, book, spec.tariff))
            traded = sum(t.energy_wh for t in result.trades)
            prices = [(t.price_mct, t.energy_wh) for t in result.trades]
            mean_price = (
                sum(p * e for p, e in prices) // sum(e for _, e in prices)
                if prices
                else None
            )
            intervals_report.append(
                {
                    "interval_id": result.interval_id,
                    "orders": len(book.buys) + len(book.sells),
                    "traded_wh": traded,
                    "utility_sale_wh": sum(e for _, e in result.utility_sales),
                    "utility_purchase_wh": sum(e for _, e in result.utility_purchases),
                    "local_coverage": round(local_coverage(result), 9),
                    "mean_price_mct": mean_price,
                }
            )

        # nonces advance by exactly one per committed transaction
        nonces: dict[str, int] = {}
        for block in reference.chain.blocks:
            for tx in block.transactions:
                expected = nonces.get(tx.sender_address, 0) + 1
                if tx.nonce != expected:
                    failures.append(
                        f"nonce: {tx.sender_address[:8]} jumped to {tx.nonce}"
                    )
                nonces[tx.sender_address] = tx.nonce

        mean_prices = [
            i["mean_price_mct"] for i in intervals_report if i["mean_price_mct"] is not None
        ]
        for price in mean_prices:
            if not spec.tariff.floor_mct <= price <= spec.tariff.ceiling_mct:
                failures.append(f"mean price {price} outside the tariff band")

    report = {
        "scenario": spec.name,
        "seed": spec.seed,
        "n_intervals": n_intervals,
        "completed": completed,
        "height": reference.chain.height if reference else 0,
        "final_state_hash": reference.chain.state_hashes[-1].hex()
        if reference and reference.chain.state_hashes
        else None,
        "final_balances": {
            account: acct.balance_uct
            for account, acct in sorted(reference.chain.state.accounts.items())
        }
        if reference
        else {},
        "intervals": intervals_report,
        "invariant_failures": failures,
        "summary": {
            "mean_local_coverage": round(
                sum(i["local_coverage"] for i in intervals_report)
                / len(intervals_report),
                9,
            )
            if intervals_report
            else None,
            "total_traded_wh": sum(i["traded_wh"] for i in intervals_report),
            "total_utility_sale_wh": sum(i["utility_sale_wh"] for i in intervals_report),
            "total_utility_purchase_wh": sum(
                i["utility_purchase_wh"] for i in intervals_report
            ),
        },
    }
    if block_log_path is not None and reference is not None:
        write_block_log(block_log_path, reference.chain.blocks)
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def write_report(report: dict, out_dir: str | Path) -> None:
    """JSON report plus a flat per-interval CSV for plotting."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    lines = ["interval_id,orders,traded_wh,utility_sale_wh,utility_purchase_wh,local_coverage,mean_price_mct"]
    for row in report["intervals"]:
        lines.append(
            f"{row['interval_id']},{row['orders']},{row['traded_wh']},"
            f"{row['utility_sale_wh']},{row['utility_purchase_wh']},"
            f"{row['local_coverage']},{'' if row['mean_price_mct'] is None else row['mean_price_mct']}"
        )
    (out / "intervals.csv").write_text("\n".join(lines) + "\n")
