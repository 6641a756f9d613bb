"""Double auction with discriminative pricing and tariff settlement.

Every 15-minute interval, one order per household is collected into an order
book. At clearing, asks are walked from cheapest up and bids from the highest
willingness-to-pay down; while the curves cross, buyer and seller trade the
feasible quantity at the integer mean of their two limits. Whatever cannot be
matched locally falls back to the utility at the fixed feed-in / retail
tariffs. Locally traded energy pays only the neighborhood grid fee; energy
through the utility pays the full grid-fee stack.

All quantities are integer watt-hours and all prices integer milli-cents per
kWh, which makes settlement amounts exact integer micro-cents
(mct/kWh x Wh = uct). No floats touch replicated state.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping

__all__ = [
    "UTILITY",
    "GRID_OPERATOR",
    "Side",
    "Order",
    "OrderBook",
    "Trade",
    "SettlementEntry",
    "ClearingResult",
    "TariffConfig",
    "OrderRejected",
    "insert_order",
    "price_trade",
    "match_orders",
    "settle",
    "clear_interval",
    "local_coverage",
]

# Settlement counterparties that are roles, not keyed accounts. Uppercase can
# never collide with the 64-char lowercase hex account addresses.
UTILITY = "UTILITY"
GRID_OPERATOR = "GRID_OPERATOR"


class Side(enum.Enum):
    BUY = "BUY"
    SELL = "SELL"


class OrderRejected(Exception):
    """An order violates book preconditions; ``code`` names the reason."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class Order:
    """One signed limit bid for one clearing interval.

    ``arrival_seq`` is the (block height, tx index) pair assigned when the
    order was committed; it breaks price ties identically on every node.
    """

    account: str
    side: Side
    energy_wh: int
    limit_price_mct: int
    interval_id: int
    arrival_seq: tuple[int, int]

    def __post_init__(self) -> None:
        if self.energy_wh <= 0:
            raise ValueError("order energy must be positive")
        if self.limit_price_mct < 0:
            raise ValueError("limit price must be non-negative")

    def to_wire(self) -> dict:
        return {
            "account": self.account,
            "side": self.side.value,
            "energy_wh": self.energy_wh,
            "limit_price_mct": self.limit_price_mct,
            "interval_id": self.interval_id,
            "arrival_seq": list(self.arrival_seq),
        }

    @classmethod
    def from_wire(cls, data: Mapping) -> "Order":
        return cls(
            account=data["account"],
            side=Side(data["side"]),
            energy_wh=data["energy_wh"],
            limit_price_mct=data["limit_price_mct"],
            interval_id=data["interval_id"],
            arrival_seq=tuple(data["arrival_seq"]),
        )


def _ask_key(order: Order):
    return (order.limit_price_mct, order.arrival_seq, order.account)


def _bid_key(order: Order):
    return (-order.limit_price_mct, order.arrival_seq, order.account)


@dataclass
class OrderBook:
    """All bids of one interval, kept in matching priority order."""

    interval_id: int
    buys: list[Order] = field(default_factory=list)
    sells: list[Order] = field(default_factory=list)

    def accounts(self) -> set[str]:
        return {o.account for o in self.buys} | {o.account for o in self.sells}

    def clone(self) -> "OrderBook":
        return OrderBook(self.interval_id, list(self.buys), list(self.sells))

    def to_wire(self) -> dict:
        return {
            "interval_id": self.interval_id,
            "buys": [o.to_wire() for o in self.buys],
            "sells": [o.to_wire() for o in self.sells],
        }

    @classmethod
    def from_wire(cls, data: Mapping) -> "OrderBook":
        return cls(
            interval_id=data["interval_id"],
            buys=[Order.from_wire(o) for o in data["buys"]],
            sells=[Order.from_wire(o) for o in data["sells"]],
        )


def insert_order(book: OrderBook, order: Order) -> OrderBook:
    """Add ``order`` to ``book``, re-establishing priority order.

    Rejects orders for a different interval (STALE_ORDER) and second orders
    from an account that already bid this interval (DUPLICATE_ORDER).
    """
    if order.interval_id != book.interval_id:
        raise OrderRejected(
            "STALE_ORDER",
            f"order targets interval {order.interval_id}, book is {book.interval_id}",
        )
    if order.account in book.accounts():
        raise OrderRejected(
            "DUPLICATE_ORDER",
            f"account {order.account} already has an order this interval",
        )
    if order.side is Side.BUY:
        book.buys.append(order)
        book.buys.sort(key=_bid_key)
    else:
        book.sells.append(order)
        book.sells.sort(key=_ask_key)
    return book


def price_trade(buy_limit_mct: int, sell_limit_mct: int) -> int:
    """Discriminative trade price: floor of the mean of the two limits."""
    if buy_limit_mct < sell_limit_mct:
        raise ValueError(
            f"crossed limits: buy {buy_limit_mct} < sell {sell_limit_mct}"
        )
    return (buy_limit_mct + sell_limit_mct) // 2


@dataclass(frozen=True)
class Trade:
    buyer: str
    seller: str
    energy_wh: int
    price_mct: int
    interval_id: int

    def to_wire(self) -> dict:
        return {
            "buyer": self.buyer,
            "seller": self.seller,
            "energy_wh": self.energy_wh,
            "price_mct": self.price_mct,
            "interval_id": self.interval_id,
        }

    @classmethod
    def from_wire(cls, data: Mapping) -> "Trade":
        return cls(
            buyer=data["buyer"],
            seller=data["seller"],
            energy_wh=data["energy_wh"],
            price_mct=data["price_mct"],
            interval_id=data["interval_id"],
        )


@dataclass(frozen=True)
class SettlementEntry:
    account: str  # address hex, UTILITY, or GRID_OPERATOR
    amount_uct: int  # positive = receives

    def to_wire(self) -> dict:
        return {"account": self.account, "amount_uct": self.amount_uct}

    @classmethod
    def from_wire(cls, data: Mapping) -> "SettlementEntry":
        return cls(account=data["account"], amount_uct=data["amount_uct"])


@dataclass(frozen=True)
class TariffConfig:
    """Fixed utility tariffs and the two grid-fee components.

    ``grid_fee_local_mct`` is the neighborhood-level cost charged on local
    trades; ``grid_fee_full_mct`` is the whole-stack fee charged on energy
    that goes through the utility. The feed-in and retail energy prices bound
    all bid limits: below feed-in, selling to the utility dominates; above
    retail, buying from it does.
    """

    feed_in_mct: int
    retail_energy_mct: int
    grid_fee_local_mct: int
    grid_fee_full_mct: int

    def __post_init__(self) -> None:
        if not 0 <= self.feed_in_mct <= self.retail_energy_mct:
            raise ValueError("tariffs require 0 <= feed_in <= retail")
        if not 0 <= self.grid_fee_local_mct <= self.grid_fee_full_mct:
            raise ValueError("grid fees require 0 <= local <= full")

    @property
    def floor_mct(self) -> int:
        return self.feed_in_mct

    @property
    def ceiling_mct(self) -> int:
        return self.retail_energy_mct

    def to_wire(self) -> dict:
        return {
            "feed_in_mct": self.feed_in_mct,
            "retail_energy_mct": self.retail_energy_mct,
            "grid_fee_local_mct": self.grid_fee_local_mct,
            "grid_fee_full_mct": self.grid_fee_full_mct,
        }

    @classmethod
    def from_wire(cls, data: Mapping) -> "TariffConfig":
        return cls(
            feed_in_mct=data["feed_in_mct"],
            retail_energy_mct=data["retail_energy_mct"],
            grid_fee_local_mct=data["grid_fee_local_mct"],
            grid_fee_full_mct=data["grid_fee_full_mct"],
        )


@dataclass(frozen=True)
class ClearingResult:
    """Everything one interval's clearing produced.

    Residuals are (account, energy_wh) pairs: ``utility_sales`` is energy the
    utility sold to unfilled buyers, ``utility_purchases`` energy it bought
    from unfilled sellers. Matched plus residual energy per account always
    equals the submitted order energy.
    """

    interval_id: int
    trades: tuple[Trade, ...]
    utility_sales: tuple[tuple[str, int], ...]
    utility_purchases: tuple[tuple[str, int], ...]
    settlements: tuple[SettlementEntry, ...]

    def to_wire(self) -> dict:
        return {
            "interval_id": self.interval_id,
            "trades": [t.to_wire() for t in self.trades],
            "utility_sales": [[a, e] for a, e in self.utility_sales],
            "utility_purchases": [[a, e] for a, e in self.utility_purchases],
            "settlements": [s.to_wire() for s in self.settlements],
        }

    @classmethod
    def from_wire(cls, data: Mapping) -> "ClearingResult":
        return cls(
            interval_id=data["interval_id"],
            trades=tuple(Trade.from_wire(t) for t in data["trades"]),
            utility_sales=tuple((a, e) for a, e in data["utility_sales"]),
            utility_purchases=tuple((a, e) for a, e in data["utility_purchases"]),
            settlements=tuple(
                SettlementEntry.from_wire(s) for s in data["settlements"]
            ),
        )


def match_orders(
    buys: list[Order], sells: list[Order], interval_id: int
) -> tuple[list[Trade], list[tuple[str, int]], list[tuple[str, int]]]:
    """Greedy merge of the sorted bid and ask curves.

    While the best remaining bid limit is at least the best remaining ask
    limit, the pair trades min(remaining) at the floored mean of their limits;
    partially filled orders stay at the curve head. Returns the trades plus
    the unmatched buy and sell residuals in curve order.
    """
    buys = sorted(buys, key=_bid_key)
    sells = sorted(sells, key=_ask_key)
    trades: list[Trade] = []
    buy_left = [o.energy_wh for o in buys]
    sell_left = [o.energy_wh for o in sells]
    bi = si = 0
    while bi < len(buys) and si < len(sells):
        bid, ask = buys[bi], sells[si]
        if bid.limit_price_mct < ask.limit_price_mct:
            break
        quantity = min(buy_left[bi], sell_left[si])
        trades.append(
            Trade(
                buyer=bid.account,
                seller=ask.account,
                energy_wh=quantity,
                price_mct=price_trade(bid.limit_price_mct, ask.limit_price_mct),
                interval_id=interval_id,
            )
        )
        buy_left[bi] -= quantity
        sell_left[si] -= quantity
        if buy_left[bi] == 0:
            bi += 1
        if sell_left[si] == 0:
            si += 1
    residual_buys = [
        (buys[i].account, buy_left[i]) for i in range(len(buys)) if buy_left[i] > 0
    ]
    residual_sells = [
        (sells[i].account, sell_left[i]) for i in range(len(sells)) if sell_left[i] > 0
    ]
    return trades, residual_buys, residual_sells


def settle(
    trades: Iterable[Trade],
    utility_sales: Iterable[tuple[str, int]],
    utility_purchases: Iterable[tuple[str, int]],
    tariff: TariffConfig,
) -> list[SettlementEntry]:
    """Exact micro-cent bookkeeping for one clearing; entries sum to zero.

    Local trades: the buyer pays the trade price plus the local grid fee, the
    seller receives the trade price, the grid operator the fee. Utility
    residuals settle at retail plus the full grid fee (buys) and at feed-in
    (sells).
    """
    amounts: dict[str, int] = {}

    def add(account: str, delta_uct: int) -> None:
        amounts[account] = amounts.get(account, 0) + delta_uct

    for trade in trades:
        e = trade.energy_wh
        add(trade.buyer, -(trade.price_mct + tariff.grid_fee_local_mct) * e)
        add(trade.seller, trade.price_mct * e)
        add(GRID_OPERATOR, tariff.grid_fee_local_mct * e)
    for account, e in utility_sales:
        add(account, -(tariff.retail_energy_mct + tariff.grid_fee_full_mct) * e)
        add(UTILITY, tariff.retail_energy_mct * e)
        add(GRID_OPERATOR, tariff.grid_fee_full_mct * e)
    for account, e in utility_purchases:
        add(account, tariff.feed_in_mct * e)
        add(UTILITY, -tariff.feed_in_mct * e)
    return [
        SettlementEntry(account, amount)
        for account, amount in sorted(amounts.items())
        if amount != 0
    ]


def clear_interval(book: OrderBook, tariff: TariffConfig) -> ClearingResult:
    """Run the auction over one interval's book. Pure; the book is not touched."""
    trades, residual_buys, residual_sells = match_orders(
        book.buys, book.sells, book.interval_id
    )
    settlements = settle(trades, residual_buys, residual_sells, tariff)
    return ClearingResult(
        interval_id=book.interval_id,
        trades=tuple(trades),
        utility_sales=tuple(residual_buys),
        utility_purchases=tuple(residual_sells),
        settlements=tuple(settlements),
    )


def local_coverage(result: ClearingResult) -> float:
    """Share of this interval's demand met by local trades; 0 if no demand."""
    traded = sum(t.energy_wh for t in result.trades)
    demand = traded + sum(e for _, e in result.utility_sales)
    if demand == 0:
        return 0.0
    return traded / demand
