from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridmarket.market import Side
from gridmarket.metering import (
    HouseholdKind,
    HouseholdProfile,
    MeterDataError,
    MeterReading,
    load_profiles,
    net_position,
    synthesize_profile,
    write_profiles_csv,
)

DATA = Path(__file__).resolve().parent / "data"
FIXTURE_START = 1649980800 // 900  # 2022-04-15T00:00:00Z


class TestNetPosition:
    def test_surplus_sells(self):
        reading = MeterReading("h", 1, consumption_wh=500, production_wh=2000, battery_wh=300)
        assert net_position(reading) == (Side.SELL, 1200)

    def test_deficit_buys(self):
        reading = MeterReading("h", 1, consumption_wh=500, production_wh=0, battery_wh=0)
        assert net_position(reading) == (Side.BUY, 500)

    def test_exact_balance_stays_out(self):
        reading = MeterReading("h", 1, consumption_wh=800, production_wh=500, battery_wh=-300)
        assert net_position(reading) == (None, 0)

    @given(
        consumption=st.integers(0, 5000),
        production=st.integers(0, 5000),
        battery=st.integers(-2000, 2000),
    )
    @settings(max_examples=300)
    def test_sides_exclusive_and_energy_exact(self, consumption, production, battery):
        reading = MeterReading("h", 1, consumption, production, battery)
        side, energy = net_position(reading)
        net = consumption - production + battery
        assert energy == abs(net)
        if net > 0:
            assert side is Side.BUY
        elif net < 0:
            assert side is Side.SELL
        else:
            assert side is None


class TestLoadProfiles:
    def test_fixture_parses_to_two_profiles(self):
        profiles = {p.household_id: p for p in load_profiles(DATA / "profiles_2x4.csv")}
        assert set(profiles) == {"house_a", "house_b"}
        assert all(len(p.readings) == 4 for p in profiles.values())
        assert profiles["house_a"].kind is HouseholdKind.PROSUMER
        assert profiles["house_b"].kind is HouseholdKind.CONSUMER
        assert profiles["house_a"].readings[0].interval_id == FIXTURE_START

    def test_negative_consumption_names_the_row(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text(
            "timestamp_utc,household_id,consumption_wh,production_wh,battery_wh\n"
            "2022-04-15T00:00:00Z,h1,100,0,0\n"
            "2022-04-15T00:15:00Z,h1,-1,0,0\n"
        )
        with pytest.raises(MeterDataError, match="line 3"):
            load_profiles(bad)

    def test_gap_names_household_and_range(self, tmp_path):
        gappy = tmp_path / "gap.csv"
        gappy.write_text(
            "timestamp_utc,household_id,consumption_wh,production_wh,battery_wh\n"
            "2022-04-15T00:00:00Z,h1,100,0,0\n"
            "2022-04-15T01:00:00Z,h1,100,0,0\n"
        )
        with pytest.raises(MeterDataError, match="h1"):
            load_profiles(gappy)

    def test_off_boundary_timestamp_rejected(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text(
            "timestamp_utc,household_id,consumption_wh,production_wh,battery_wh\n"
            "2022-04-15T00:07:00Z,h1,100,0,0\n"
        )
        with pytest.raises(MeterDataError, match="boundary"):
            load_profiles(bad)

    def test_duplicate_reading_rejected(self, tmp_path):
        bad = tmp_path / "dup.csv"
        bad.write_text(
            "timestamp_utc,household_id,consumption_wh,production_wh,battery_wh\n"
            "2022-04-15T00:00:00Z,h1,100,0,0\n"
            "2022-04-15T00:00:00Z,h1,120,0,0\n"
        )
        with pytest.raises(MeterDataError, match="duplicate"):
            load_profiles(bad)

    def test_consumer_with_production_rejected_under_meta(self, tmp_path):
        path = tmp_path / "meta.csv"
        path.write_text(
            "timestamp_utc,household_id,consumption_wh,production_wh,battery_wh\n"
            "2022-04-15T00:00:00Z,h1,100,50,0\n"
        )
        meta = {"h1": HouseholdProfile("h1", HouseholdKind.CONSUMER, 0.0, 0.0)}
        with pytest.raises(MeterDataError, match="consumer"):
            load_profiles(path, meta)

    def test_round_trip_through_writer(self, tmp_path):
        profiles = load_profiles(DATA / "profiles_2x4.csv")
        out = tmp_path / "again.csv"
        write_profiles_csv(out, profiles)
        again = load_profiles(out)
        assert [p.readings for p in again] == [p.readings for p in profiles]


class TestSynthesizer:
    def test_same_seed_same_profile(self):
        a = synthesize_profile("h1", HouseholdKind.PROSUMER, 8.0, 5.0, 0, 96, seed=7)
        b = synthesize_profile("h1", HouseholdKind.PROSUMER, 8.0, 5.0, 0, 96, seed=7)
        assert a.readings == b.readings

    def test_different_seed_differs(self):
        a = synthesize_profile("h1", HouseholdKind.PROSUMER, 8.0, 5.0, 0, 96, seed=7)
        b = synthesize_profile("h1", HouseholdKind.PROSUMER, 8.0, 5.0, 0, 96, seed=8)
        assert a.readings != b.readings

    def test_consumer_profile_has_no_production_or_battery(self):
        profile = synthesize_profile("c1", HouseholdKind.CONSUMER, 0.0, 0.0, 0, 96, seed=3)
        assert all(r.production_wh == 0 and r.battery_wh == 0 for r in profile.readings)
        assert any(r.consumption_wh > 0 for r in profile.readings)

    def test_prosumer_produces_at_midday(self):
        profile = synthesize_profile("p1", HouseholdKind.PROSUMER, 10.0, 0.0, 0, 96, seed=3)
        noon = [r for r in profile.readings if 44 <= r.interval_id <= 52]
        assert any(r.production_wh > 0 for r in noon)
        night = [r for r in profile.readings if r.interval_id < 20]
        assert all(r.production_wh == 0 for r in night)

    def test_battery_only_buffers_local_energy(self):
        # charging never exceeds PV surplus, discharging never exceeds load;
        # this keeps per-household energy accounting non-negative
        profile = synthesize_profile("p1", HouseholdKind.PROSUMER, 12.0, 10.0, 0, 192, seed=5)
        stored = 0
        for r in profile.readings:
            if r.battery_wh > 0:
                assert r.battery_wh <= r.production_wh - r.consumption_wh
            else:
                assert -r.battery_wh <= r.consumption_wh
            stored += r.battery_wh
            assert 0 <= stored <= 10_000
        assert any(r.battery_wh > 0 for r in profile.readings)

    def test_community_energy_conservation(self):
        profiles = [
            synthesize_profile(f"h{i}", HouseholdKind.PROSUMER, 6.0, 4.0, 0, 96, seed=i)
            for i in range(5)
        ]
        for interval in range(96):
            readings = [p.readings[interval] for p in profiles]
            buys = sells = 0
            for r in readings:
                side, energy = net_position(r)
                if side is Side.BUY:
                    buys += energy
                elif side is Side.SELL:
                    sells += energy
            net_import = sum(
                r.consumption_wh - r.production_wh + r.battery_wh for r in readings
            )
            assert buys - sells == net_import


class TestReferenceProfiles:
    def test_reference_community_round_trips_through_csv(self, tmp_path):
        from gridmarket.scenario import _synthesize_all, reference_scenario

        spec = reference_scenario(seed=7)
        start = spec.genesis_time // 900
        profiles = _synthesize_all(spec, start, 8)
        path = tmp_path / "reference.csv"
        write_profiles_csv(path, profiles.values())
        shells = {
            h.id: HouseholdProfile(h.id, h.kind, h.pv_kwp, h.battery_kwh)
            for h in spec.households
        }
        loaded = load_profiles(path, shells)
        assert len(loaded) == 37
        prosumers = [p for p in loaded if p.kind is HouseholdKind.PROSUMER]
        assert len(prosumers) == 27
        assert all(len(p.readings) == 8 for p in loaded)
