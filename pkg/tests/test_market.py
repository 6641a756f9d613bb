import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridmarket.canonical import canonical_serialize
from gridmarket.market import (
    GRID_OPERATOR,
    UTILITY,
    ClearingResult,
    Order,
    OrderBook,
    OrderRejected,
    Side,
    TariffConfig,
    clear_interval,
    insert_order,
    local_coverage,
    price_trade,
    settle,
)

from oracles import breakeven_volume_oracle, exhaustive_crossing_volume_oracle

TARIFF = TariffConfig(
    feed_in_mct=4000,
    retail_energy_mct=8000,
    grid_fee_local_mct=5000,
    grid_fee_full_mct=10000,
)

A, B, C, D = (f"{c}" * 64 for c in "abcd")


def order(account, side, energy, price, interval=5, seq=(1, 0)):
    return Order(
        account=account,
        side=side,
        energy_wh=energy,
        limit_price_mct=price,
        interval_id=interval,
        arrival_seq=seq,
    )


class TestInsert:
    def test_insert_into_empty_book(self):
        book = OrderBook(interval_id=5)
        insert_order(book, order(A, Side.SELL, 3000, 4000))
        assert len(book.sells) == 1 and not book.buys

    def test_equal_price_ties_break_by_arrival(self):
        book = OrderBook(interval_id=5)
        insert_order(book, order(B, Side.SELL, 100, 4000, seq=(5, 1)))
        insert_order(book, order(A, Side.SELL, 100, 4000, seq=(5, 0)))
        assert [o.account for o in book.sells] == [A, B]

    def test_duplicate_account_rejected(self):
        book = OrderBook(interval_id=5)
        insert_order(book, order(A, Side.SELL, 100, 4000))
        with pytest.raises(OrderRejected) as err:
            insert_order(book, order(A, Side.BUY, 50, 6000, seq=(1, 1)))
        assert err.value.code == "DUPLICATE_ORDER"

    def test_wrong_interval_rejected(self):
        book = OrderBook(interval_id=5)
        with pytest.raises(OrderRejected) as err:
            insert_order(book, order(A, Side.SELL, 100, 4000, interval=4))
        assert err.value.code == "STALE_ORDER"

    def test_buys_sorted_descending_by_price(self):
        book = OrderBook(interval_id=5)
        insert_order(book, order(A, Side.BUY, 10, 5000, seq=(1, 0)))
        insert_order(book, order(B, Side.BUY, 10, 7000, seq=(1, 1)))
        insert_order(book, order(C, Side.BUY, 10, 6000, seq=(1, 2)))
        assert [o.limit_price_mct for o in book.buys] == [7000, 6000, 5000]


class TestPriceTrade:
    def test_exact_mean(self):
        assert price_trade(10000, 4000) == 7000

    def test_identity_at_equal_limits(self):
        assert price_trade(5555, 5555) == 5555

    def test_floor_of_half_odd_sum(self):
        assert price_trade(10001, 4000) == 7000

    def test_crossed_limits_rejected(self):
        with pytest.raises(ValueError):
            price_trade(3999, 4000)


class TestWorkedExample:
    """Sells {A: 3000@4000, B: 2000@8000}, buys {C: 4000@10000, D: 2000@6000}."""

    @pytest.fixture()
    def result(self) -> ClearingResult:
        book = OrderBook(interval_id=5)
        insert_order(book, order(A, Side.SELL, 3000, 4000, seq=(1, 0)))
        insert_order(book, order(B, Side.SELL, 2000, 8000, seq=(1, 1)))
        insert_order(book, order(C, Side.BUY, 4000, 10000, seq=(1, 2)))
        insert_order(book, order(D, Side.BUY, 2000, 6000, seq=(1, 3)))
        return clear_interval(book, TARIFF)

    def test_trades(self, result):
        assert [(t.buyer, t.seller, t.energy_wh, t.price_mct) for t in result.trades] == [
            (C, A, 3000, 7000),
            (C, B, 1000, 9000),
        ]

    def test_residuals(self, result):
        assert result.utility_sales == ((D, 2000),)
        assert result.utility_purchases == ((B, 1000),)

    def test_volume_matches_exhaustive_oracle(self, result):
        volume = sum(t.energy_wh for t in result.trades)
        assert volume == exhaustive_crossing_volume_oracle(
            [(10000, 4000), (6000, 2000)], [(4000, 3000), (8000, 2000)]
        )
        assert volume == breakeven_volume_oracle(
            [(10000, 4000), (6000, 2000)], [(4000, 3000), (8000, 2000)]
        )

    def test_local_coverage(self, result):
        assert local_coverage(result) == pytest.approx(4000 / 6000)

    def test_settlements_sum_to_zero(self, result):
        assert sum(e.amount_uct for e in result.settlements) == 0


class TestClearEdgeCases:
    def test_only_buys_all_go_to_utility(self):
        book = OrderBook(interval_id=5)
        insert_order(book, order(A, Side.BUY, 700, 8000, seq=(1, 0)))
        insert_order(book, order(B, Side.BUY, 300, 5000, seq=(1, 1)))
        result = clear_interval(book, TARIFF)
        assert not result.trades
        assert result.utility_sales == ((A, 700), (B, 300))
        assert local_coverage(result) == 0.0

    def test_equal_limits_cross_at_that_price(self):
        book = OrderBook(interval_id=5)
        insert_order(book, order(A, Side.SELL, 1000, 6000, seq=(1, 0)))
        insert_order(book, order(B, Side.BUY, 1000, 6000, seq=(1, 1)))
        result = clear_interval(book, TARIFF)
        assert [(t.buyer, t.seller, t.energy_wh, t.price_mct) for t in result.trades] == [
            (B, A, 1000, 6000)
        ]
        assert not result.utility_sales and not result.utility_purchases
        assert local_coverage(result) == 1.0

    def test_empty_book_clears_empty(self):
        result = clear_interval(OrderBook(interval_id=5), TARIFF)
        assert result.trades == () and result.settlements == ()
        assert local_coverage(result) == 0.0


class TestSettle:
    def test_single_trade_arithmetic(self):
        from gridmarket.market import Trade

        entries = settle(
            [Trade(buyer=C, seller=A, energy_wh=3000, price_mct=7000, interval_id=5)],
            [],
            [],
            TariffConfig(4000, 8000, 1000, 10000),
        )
        amounts = {e.account: e.amount_uct for e in entries}
        assert amounts[C] == -24_000_000
        assert amounts[A] == +21_000_000
        assert amounts[GRID_OPERATOR] == +3_000_000
        assert sum(amounts.values()) == 0

    def test_empty_clearing_empty_settlement(self):
        assert settle([], [], [], TARIFF) == []

    def test_utility_purchase_pays_feed_in(self):
        entries = settle([], [], [(A, 1000)], TARIFF)
        amounts = {e.account: e.amount_uct for e in entries}
        assert amounts[A] == +4_000_000
        assert amounts[UTILITY] == -4_000_000
        assert sum(amounts.values()) == 0

    def test_utility_sale_splits_energy_and_grid_fee(self):
        entries = settle([], [(A, 1000)], [], TARIFF)
        amounts = {e.account: e.amount_uct for e in entries}
        assert amounts[A] == -(8000 + 10000) * 1000
        assert amounts[UTILITY] == 8000 * 1000
        assert amounts[GRID_OPERATOR] == 10000 * 1000


def random_book(rng: random.Random, max_orders=6, interval=5) -> OrderBook:
    book = OrderBook(interval_id=interval)
    n = rng.randint(0, max_orders)
    accounts = rng.sample("abcdefgh", n)
    for i, acct in enumerate(accounts):
        side = rng.choice([Side.BUY, Side.SELL])
        price = rng.randint(TARIFF.floor_mct, TARIFF.ceiling_mct)
        energy = rng.randint(1, 2000)
        insert_order(
            book, order(acct * 64, side, energy, price, interval, seq=(1, i))
        )
    return book


class TestRandomizedInvariants:
    N_CASES = 2000

    def test_invariants_on_random_books(self):
        rng = random.Random(2024)
        for _ in range(self.N_CASES):
            book = random_book(rng)
            result = clear_interval(book, TARIFF)
            limits = {o.account: o for o in book.buys + book.sells}

            # individual rationality, exact floored mean
            for t in result.trades:
                buy, sell = limits[t.buyer], limits[t.seller]
                assert sell.limit_price_mct <= t.price_mct <= buy.limit_price_mct
                assert t.price_mct == (buy.limit_price_mct + sell.limit_price_mct) // 2

            # budget balance
            assert sum(e.amount_uct for e in result.settlements) == 0

            # energy conservation per account
            flows: dict[str, int] = {o.account: 0 for o in book.buys + book.sells}
            for t in result.trades:
                flows[t.buyer] += t.energy_wh
                flows[t.seller] += t.energy_wh
            for acct, e in result.utility_sales + result.utility_purchases:
                flows[acct] += e
            for o in book.buys + book.sells:
                assert flows[o.account] == o.energy_wh

            # matched volume equals both independent oracles
            volume = sum(t.energy_wh for t in result.trades)
            buy_curve = [(o.limit_price_mct, o.energy_wh) for o in book.buys]
            sell_curve = [(o.limit_price_mct, o.energy_wh) for o in book.sells]
            assert volume == exhaustive_crossing_volume_oracle(buy_curve, sell_curve)
            assert volume == breakeven_volume_oracle(buy_curve, sell_curve)

            # participation never beats the utility fallback
            for t in result.trades:
                all_in = t.price_mct + TARIFF.grid_fee_local_mct
                assert all_in <= TARIFF.retail_energy_mct + TARIFF.grid_fee_full_mct
                assert t.price_mct >= TARIFF.feed_in_mct

    def test_clearing_is_deterministic(self):
        rng = random.Random(7)
        for _ in range(50):
            book = random_book(rng)
            first = clear_interval(book, TARIFF)
            second = clear_interval(book.clone(), TARIFF)
            assert canonical_serialize(first.to_wire()) == canonical_serialize(
                second.to_wire()
            )


@given(
    prices=st.lists(st.integers(4000, 8000), min_size=2, max_size=6),
    energies=st.lists(st.integers(1, 400), min_size=2, max_size=6),
    sides=st.lists(st.booleans(), min_size=2, max_size=6),
)
@settings(max_examples=300, deadline=None)
def test_volume_optimality_property(prices, energies, sides):
    n = min(len(prices), len(energies), len(sides))
    book = OrderBook(interval_id=1)
    for i in range(n):
        insert_order(
            book,
            order(
                chr(ord("a") + i) * 64,
                Side.BUY if sides[i] else Side.SELL,
                energies[i],
                prices[i],
                interval=1,
                seq=(1, i),
            ),
        )
    result = clear_interval(book, TARIFF)
    assert sum(t.energy_wh for t in result.trades) == exhaustive_crossing_volume_oracle(
        [(o.limit_price_mct, o.energy_wh) for o in book.buys],
        [(o.limit_price_mct, o.energy_wh) for o in book.sells],
    )
