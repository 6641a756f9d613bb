"""Per-household bidding agent.

Holds the user's price limits (set through sliders in the UI), turns each
interval's meter reading into at most one signed order, and answers "how
likely would I trade at this limit?" by replaying the question against the
last day of order books.

Limits are always clamped into [feed-in, retail]: bidding below the feed-in
tariff or above retail is dominated, because the utility stands ready to
trade unlimited energy at those prices. Defaults are the passive strategy
(buy at retail, sell at feed-in), which behaves exactly like having no local
market until the user moves a slider.
"""

from __future__ import annotations

from dataclasses import dataclass

from .identity import KeyPair
from .ledger import OrderPayload, Transaction
from .market import Order, OrderBook, Side, TariffConfig, match_orders
from .metering import MeterReading, net_position

__all__ = [
    "PROBABILITY_WINDOW_INTERVALS",
    "AgentError",
    "PricePreferences",
    "clamp_limits",
    "compose_order",
    "estimate_match_probability",
    "HouseholdAgent",
]

# one day of 15-minute intervals
PROBABILITY_WINDOW_INTERVALS = 96

# the replay probe must never collide with a real account (those are hex)
_PROBE_ACCOUNT = "~probe"
_PROBE_ARRIVAL = (1 << 62, 0)


class AgentError(Exception):
    """Scenario misconfiguration the agent cannot act around."""


@dataclass(frozen=True)
class PricePreferences:
    account: str
    max_buy_mct: int
    min_sell_mct: int | None  # None for consumers: nothing to sell
    updated_at: int = 0

    def to_wire(self) -> dict:
        data = {
            "account": self.account,
            "max_buy_mct": self.max_buy_mct,
            "updated_at": self.updated_at,
        }
        if self.min_sell_mct is not None:
            data["min_sell_mct"] = self.min_sell_mct
        return data


def clamp_limits(
    account: str,
    raw_buy_mct: int,
    raw_sell_mct: int | None,
    tariff: TariffConfig,
    updated_at: int = 0,
) -> PricePreferences:
    """Clip both limits into [feed_in, retail]."""

    def clip(value: int) -> int:
        return max(tariff.floor_mct, min(tariff.ceiling_mct, value))

    return PricePreferences(
        account=account,
        max_buy_mct=clip(raw_buy_mct),
        min_sell_mct=None if raw_sell_mct is None else clip(raw_sell_mct),
        updated_at=updated_at,
    )


def compose_order(
    preferences: PricePreferences,
    reading: MeterReading,
    interval_id: int,
    nonce: int,
    keypair: KeyPair,
) -> Transaction | None:
    """One signed order from one reading, or None when exactly balanced."""
    side, energy_wh = net_position(reading)
    if side is None:
        return None
    if side is Side.SELL:
        if preferences.min_sell_mct is None:
            raise AgentError(
                f"{preferences.account} has a surplus but no sell limit: "
                "consumer preferences on a producing household"
            )
        limit = preferences.min_sell_mct
    else:
        limit = preferences.max_buy_mct
    payload = OrderPayload(
        side=side,
        energy_wh=energy_wh,
        limit_price_mct=limit,
        interval_id=interval_id,
    )
    return Transaction.create(keypair, payload, nonce)


def _would_match(side: Side, limit_mct: int, book: OrderBook, own_account: str) -> bool:
    """Replay a hypothetical 1 Wh order into a historical book."""
    buys = [o for o in book.buys if o.account != own_account]
    sells = [o for o in book.sells if o.account != own_account]
    probe = Order(
        account=_PROBE_ACCOUNT,
        side=side,
        energy_wh=1,
        limit_price_mct=limit_mct,
        interval_id=book.interval_id,
        arrival_seq=_PROBE_ARRIVAL,
    )
    if side is Side.BUY:
        buys = buys + [probe]
    else:
        sells = sells + [probe]
    trades, _, _ = match_orders(buys, sells, book.interval_id)
    return any(_PROBE_ACCOUNT in (t.buyer, t.seller) for t in trades)


def estimate_match_probability(
    side: Side,
    limit_mct: int,
    history: list[OrderBook],
    own_account: str = "",
) -> float | None:
    """Share of recent intervals in which a 1 Wh order at ``limit_mct`` would
    have traded at least partially, with this household's own orders removed.

    Returns None (unknown) when there is no history yet.
    """
    window = history[-PROBABILITY_WINDOW_INTERVALS:]
    if not window:
        return None
    hits = sum(1 for book in window if _would_match(side, limit_mct, book, own_account))
    return hits / len(window)


class HouseholdAgent:
    """Sequential per-household loop: meter reading in, signed order out."""

    def __init__(
        self,
        keypair: KeyPair,
        tariff: TariffConfig,
        is_prosumer: bool,
        max_buy_mct: int | None = None,
        min_sell_mct: int | None = None,
    ):
        self.keypair = keypair
        self.account = keypair.address.hex
        self.tariff = tariff
        self.is_prosumer = is_prosumer
        raw_buy = max_buy_mct if max_buy_mct is not None else tariff.ceiling_mct
        raw_sell = (
            (min_sell_mct if min_sell_mct is not None else tariff.floor_mct)
            if is_prosumer
            else None
        )
        self.preferences = clamp_limits(self.account, raw_buy, raw_sell, tariff)
        self.last_interval_acted: int | None = None

    def update_preferences(
        self, max_buy_mct: int, min_sell_mct: int | None, updated_at: int
    ) -> PricePreferences:
        if not self.is_prosumer:
            min_sell_mct = None
        self.preferences = clamp_limits(
            self.account, max_buy_mct, min_sell_mct, self.tariff, updated_at
        )
        return self.preferences

    def act_on_interval(
        self, reading: MeterReading | None, interval_id: int, account_nonce: int
    ) -> Transaction | None:
        """Compose this interval's order once; later calls for it are no-ops."""
        if self.last_interval_acted is not None and interval_id <= self.last_interval_acted:
            return None
        self.last_interval_acted = interval_id
        if reading is None:
            return None
        return compose_order(
            self.preferences, reading, interval_id, account_nonce + 1, self.keypair
        )
