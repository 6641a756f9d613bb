"""Read-only queries over committed chain state, for UIs and tooling.

Everything here is a pure function of an immutable snapshot: blocks,
transactions with their inclusion position, per-account trade lists with
settlement amounts, and the energy KPIs shown on the dashboard
(self-consumption ratio: share of own production consumed on-site;
self-sufficiency ratio: share of own consumption covered without imports).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .ledger import Block, Chain, Transaction
from .market import ClearingResult, OrderBook, SettlementEntry, Trade
from .metering import MeterReading

__all__ = ["NotFound", "KpiReport", "TradeRecord", "compute_kpis", "Explorer"]


class NotFound(LookupError):
    """The queried block, transaction or interval is not in committed state."""


@dataclass(frozen=True)
class TradeRecord:
    trade: Trade
    role: str  # "buyer" | "seller"

    def to_wire(self) -> dict:
        data = self.trade.to_wire()
        data["role"] = self.role
        return data


@dataclass(frozen=True)
class KpiReport:
    account: str
    from_interval: int
    to_interval: int
    produced_wh: int
    consumed_wh: int
    self_consumed_wh: int
    locally_sold_wh: int
    locally_bought_wh: int
    grid_sold_wh: int
    grid_bought_wh: int
    self_consumption_ratio: float
    self_sufficiency_ratio: float
    net_earnings_uct: int

    def to_wire(self) -> dict:
        return {
            "account": self.account,
            "from_interval": self.from_interval,
            "to_interval": self.to_interval,
            "produced_wh": self.produced_wh,
            "consumed_wh": self.consumed_wh,
            "self_consumed_wh": self.self_consumed_wh,
            "locally_sold_wh": self.locally_sold_wh,
            "locally_bought_wh": self.locally_bought_wh,
            "grid_sold_wh": self.grid_sold_wh,
            "grid_bought_wh": self.grid_bought_wh,
            "self_consumption_ratio": round(self.self_consumption_ratio, 6),
            "self_sufficiency_ratio": round(self.self_sufficiency_ratio, 6),
            "net_earnings_uct": self.net_earnings_uct,
        }


def _account_flows(
    account: str, results: Iterable[ClearingResult]
) -> tuple[int, int, int, int, int]:
    locally_sold = locally_bought = grid_sold = grid_bought = earnings = 0
    for result in results:
        for trade in result.trades:
            if trade.seller == account:
                locally_sold += trade.energy_wh
            if trade.buyer == account:
                locally_bought += trade.energy_wh
        for acct, energy in result.utility_purchases:
            if acct == account:
                grid_sold += energy
        for acct, energy in result.utility_sales:
            if acct == account:
                grid_bought += energy
        for entry in result.settlements:
            if entry.account == account:
                earnings += entry.amount_uct
    return locally_sold, locally_bought, grid_sold, grid_bought, earnings


def compute_kpis(
    account: str,
    from_interval: int,
    to_interval: int,
    readings: Iterable[MeterReading],
    clearing_history: Iterable[ClearingResult],
) -> KpiReport:
    """Exact Wh bookkeeping for one account over [from, to] inclusive.

    self_consumed = produced - locally_sold - grid_sold; the self-supplied
    share of consumption is consumed - locally_bought - grid_bought. Ratios
    degrade to 0 for households that produce or consume nothing.

    Raises :class:`NotFound` naming the gap if readings do not cover the
    window.
    """
    if from_interval > to_interval:
        raise ValueError("window is inverted")
    by_interval = {
        r.interval_id: r
        for r in readings
        if from_interval <= r.interval_id <= to_interval
    }
    missing = [i for i in range(from_interval, to_interval + 1) if i not in by_interval]
    if missing:
        raise NotFound(
            f"no readings for {account} in intervals {missing[0]}..{missing[-1]}"
        )
    produced = sum(r.production_wh for r in by_interval.values())
    consumed = sum(r.consumption_wh for r in by_interval.values())
    window = [
        res for res in clearing_history if from_interval <= res.interval_id <= to_interval
    ]
    locally_sold, locally_bought, grid_sold, grid_bought, earnings = _account_flows(
        account, window
    )
    self_consumed = produced - locally_sold - grid_sold
    self_supplied = consumed - locally_bought - grid_bought
    scr = self_consumed / produced if produced > 0 else 0.0
    ssr = self_supplied / consumed if consumed > 0 else 0.0
    return KpiReport(
        account=account,
        from_interval=from_interval,
        to_interval=to_interval,
        produced_wh=produced,
        consumed_wh=consumed,
        self_consumed_wh=self_consumed,
        locally_sold_wh=locally_sold,
        locally_bought_wh=locally_bought,
        grid_sold_wh=grid_sold,
        grid_bought_wh=grid_bought,
        self_consumption_ratio=min(1.0, max(0.0, scr)),
        self_sufficiency_ratio=min(1.0, max(0.0, ssr)),
        net_earnings_uct=earnings,
    )


class Explorer:
    """Query layer over one node's chain and its local meter readings."""

    def __init__(self, chain: Chain, readings: Mapping[str, list[MeterReading]] | None = None):
        self.chain = chain
        self.readings = dict(readings or {})

    # -- chain objects ------------------------------------------------------

    def get_block(self, height: int) -> Block:
        if not 1 <= height <= self.chain.height:
            raise NotFound(f"no committed block at height {height}")
        return self.chain.blocks[height - 1]

    def get_tx(self, tx_hash: bytes) -> tuple[Transaction, int, int]:
        located = self.chain.find_tx(tx_hash)
        if located is None:
            raise NotFound(f"unknown transaction {tx_hash.hex()}")
        return located

    def get_interval(self, interval_id: int) -> tuple[ClearingResult, OrderBook]:
        state = self.chain.state
        for result, book in zip(state.clearing_history, state.book_history):
            if result.interval_id == interval_id:
                return result, book
        raise NotFound(f"interval {interval_id} has not cleared")

    # -- account views ------------------------------------------------------

    def get_trades(
        self, account: str, from_interval: int, to_interval: int
    ) -> tuple[list[TradeRecord], list[SettlementEntry]]:
        if from_interval > to_interval:
            raise ValueError("window is inverted")
        records: list[TradeRecord] = []
        settlements: list[SettlementEntry] = []
        for result in self.chain.state.clearing_history:
            if not from_interval <= result.interval_id <= to_interval:
                continue
            for trade in result.trades:
                if trade.buyer == account:
                    records.append(TradeRecord(trade, "buyer"))
                if trade.seller == account:
                    records.append(TradeRecord(trade, "seller"))
            for entry in result.settlements:
                if entry.account == account:
                    settlements.append(entry)
        return records, settlements

    def kpis(self, account: str, from_interval: int, to_interval: int) -> KpiReport:
        return compute_kpis(
            account,
            from_interval,
            to_interval,
            self.readings.get(account, []),
            self.chain.state.clearing_history,
        )

    def series(
        self,
        account: str,
        from_interval: int,
        to_interval: int,
        resolution: str = "interval",
    ) -> list[dict]:
        """Per-interval (or coarser) production/consumption/trade points."""
        if from_interval > to_interval:
            raise ValueError("window is inverted")
        if resolution not in ("interval", "hour", "day"):
            raise ValueError(f"unknown resolution {resolution!r}")
        group_size = {"interval": 1, "hour": 4, "day": 96}[resolution]
        readings = {
            r.interval_id: r
            for r in self.readings.get(account, [])
            if from_interval <= r.interval_id <= to_interval
        }
        flows: dict[int, dict[str, int]] = {}
        for result in self.chain.state.clearing_history:
            if not from_interval <= result.interval_id <= to_interval:
                continue
            sold, bought, g_sold, g_bought, earnings = _account_flows(
                account, [result]
            )
            flows[result.interval_id] = {
                "locally_sold_wh": sold,
                "locally_bought_wh": bought,
                "grid_sold_wh": g_sold,
                "grid_bought_wh": g_bought,
                "earnings_uct": earnings,
            }
        points: dict[int, dict] = {}
        for interval_id in range(from_interval, to_interval + 1):
            bucket = interval_id - (interval_id - from_interval) % group_size
            point = points.setdefault(
                bucket,
                {
                    "interval_id": bucket,
                    "produced_wh": 0,
                    "consumed_wh": 0,
                    "battery_wh": 0,
                    "locally_sold_wh": 0,
                    "locally_bought_wh": 0,
                    "grid_sold_wh": 0,
                    "grid_bought_wh": 0,
                    "earnings_uct": 0,
                },
            )
            reading = readings.get(interval_id)
            if reading is not None:
                point["produced_wh"] += reading.production_wh
                point["consumed_wh"] += reading.consumption_wh
                point["battery_wh"] += reading.battery_wh
            for key, value in flows.get(interval_id, {}).items():
                point[key] += value
        return [points[k] for k in sorted(points)]
