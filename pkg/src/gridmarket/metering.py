"""Simulated smart-meter data: household profiles and per-interval net positions.

Each household reports at most one reading per 15-minute interval, split into
consumption, production and battery energy (a household has up to three
meters, one per signal). Consumers have no production and no battery by
definition. The net position decides the market side: a net deficit buys, a
net surplus sells, an exactly balanced interval stays out of the market.

When no real meter data is supplied, a seeded synthetic generator produces
plausible PV bell curves and household load shapes. The battery signal is a
measured series like the others (there is no dispatch control here): it only
charges from local PV surplus and only discharges into local consumption,
which keeps every household's energy books self-consistent.
"""

from __future__ import annotations

import csv
import enum
import math
import random
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping

from .market import Side

__all__ = [
    "INTERVAL_SECONDS",
    "MeterDataError",
    "HouseholdKind",
    "MeterReading",
    "HouseholdProfile",
    "net_position",
    "load_profiles",
    "write_profiles_csv",
    "synthesize_profile",
]

INTERVAL_SECONDS = 900

CSV_COLUMNS = ["timestamp_utc", "household_id", "consumption_wh", "production_wh", "battery_wh"]


class MeterDataError(ValueError):
    """Malformed or inconsistent meter data; message pinpoints the location."""


class HouseholdKind(enum.Enum):
    PROSUMER = "PROSUMER"
    CONSUMER = "CONSUMER"


@dataclass(frozen=True)
class MeterReading:
    household_id: str
    interval_id: int
    consumption_wh: int
    production_wh: int
    battery_wh: int  # positive = charging

    def __post_init__(self) -> None:
        if self.consumption_wh < 0 or self.production_wh < 0:
            raise MeterDataError(
                f"{self.household_id}@{self.interval_id}: negative energy reading"
            )


@dataclass
class HouseholdProfile:
    household_id: str
    kind: HouseholdKind
    pv_kwp: float
    battery_kwh: float
    readings: list[MeterReading] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.kind is HouseholdKind.CONSUMER and self.pv_kwp:
            raise MeterDataError(f"{self.household_id}: consumers cannot have PV")

    def reading_for(self, interval_id: int) -> MeterReading | None:
        for reading in self.readings:
            if reading.interval_id == interval_id:
                return reading
        return None


def net_position(reading: MeterReading) -> tuple[Side | None, int]:
    """Market side and energy for one reading.

    net = consumption - production + battery; positive nets buy, negative
    nets sell, zero stays out. Charging counts as demand, discharging as
    supply.
    """
    net = reading.consumption_wh - reading.production_wh + reading.battery_wh
    if net > 0:
        return Side.BUY, net
    if net < 0:
        return Side.SELL, -net
    return None, 0


def _parse_timestamp(raw: str, line_no: int) -> int:
    if not raw.endswith("Z"):
        raise MeterDataError(f"line {line_no}: timestamp {raw!r} must be UTC with Z suffix")
    try:
        moment = datetime.strptime(raw, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
    except ValueError as exc:
        raise MeterDataError(f"line {line_no}: bad timestamp {raw!r}: {exc}")
    epoch = int(moment.timestamp())
    if epoch % INTERVAL_SECONDS:
        raise MeterDataError(
            f"line {line_no}: timestamp {raw!r} is not on a 15-minute boundary"
        )
    return epoch // INTERVAL_SECONDS


def _parse_energy(raw: str, column: str, line_no: int, signed: bool = False) -> int:
    try:
        value = int(raw)
    except ValueError:
        raise MeterDataError(f"line {line_no}: {column} {raw!r} is not an integer")
    if not signed and value < 0:
        raise MeterDataError(f"line {line_no}: {column} must be >= 0, got {value}")
    return value


def load_profiles(
    path: str | Path,
    household_meta: Mapping[str, HouseholdProfile] | None = None,
) -> list[HouseholdProfile]:
    """Read a profile CSV into validated household profiles.

    ``household_meta`` (id -> profile shell with kind/pv/battery) comes from
    the scenario file; without it, any household that ever produces is
    treated as a prosumer of unknown capacity.

    Raises :class:`MeterDataError` with the offending line for malformed
    rows, and names the household and missing range for coverage gaps.
    """
    rows: dict[str, dict[int, MeterReading]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_COLUMNS:
            raise MeterDataError(f"header must be {','.join(CSV_COLUMNS)}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_COLUMNS):
                raise MeterDataError(f"line {line_no}: expected {len(CSV_COLUMNS)} columns")
            interval_id = _parse_timestamp(row[0], line_no)
            household_id = row[1]
            reading = MeterReading(
                household_id=household_id,
                interval_id=interval_id,
                consumption_wh=_parse_energy(row[2], "consumption_wh", line_no),
                production_wh=_parse_energy(row[3], "production_wh", line_no),
                battery_wh=_parse_energy(row[4], "battery_wh", line_no, signed=True),
            )
            per_household = rows.setdefault(household_id, {})
            if interval_id in per_household:
                raise MeterDataError(
                    f"line {line_no}: duplicate reading for {household_id}@{interval_id}"
                )
            per_household[interval_id] = reading

    profiles = []
    for household_id, readings in rows.items():
        intervals = sorted(readings)
        missing = [
            i for i in range(intervals[0], intervals[-1] + 1) if i not in readings
        ]
        if missing:
            raise MeterDataError(
                f"{household_id}: missing intervals {missing[0]}..{missing[-1]} "
                f"({len(missing)} gaps in {intervals[0]}..{intervals[-1]})"
            )
        if household_meta and household_id in household_meta:
            meta = household_meta[household_id]
            profile = HouseholdProfile(
                household_id, meta.kind, meta.pv_kwp, meta.battery_kwh
            )
        else:
            produces = any(r.production_wh for r in readings.values())
            profile = HouseholdProfile(
                household_id,
                HouseholdKind.PROSUMER if produces else HouseholdKind.CONSUMER,
                pv_kwp=0.0,
                battery_kwh=0.0,
            )
        profile.readings = [readings[i] for i in intervals]
        if profile.kind is HouseholdKind.CONSUMER:
            for reading in profile.readings:
                if reading.production_wh or reading.battery_wh:
                    raise MeterDataError(
                        f"{household_id}@{reading.interval_id}: consumer with "
                        "production or battery energy"
                    )
        profiles.append(profile)
    return profiles


def write_profiles_csv(path: str | Path, profiles: Iterable[HouseholdProfile]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for profile in profiles:
            for r in profile.readings:
                moment = datetime.fromtimestamp(
                    r.interval_id * INTERVAL_SECONDS, tz=timezone.utc
                )
                writer.writerow(
                    [
                        moment.strftime("%Y-%m-%dT%H:%M:%SZ"),
                        profile.household_id,
                        r.consumption_wh,
                        r.production_wh,
                        r.battery_wh,
                    ]
                )


def synthesize_profile(
    household_id: str,
    kind: HouseholdKind,
    pv_kwp: float,
    battery_kwh: float,
    start_interval: int,
    n_intervals: int,
    seed: int,
) -> HouseholdProfile:
    """Deterministic synthetic profile: PV bell curve, two-peak load, simple
    self-consumption battery. Clearly synthetic; used when no field data is
    available.
    """
    # string seeding is deterministic across processes (tuple hashing is not)
    rng = random.Random(f"{seed}:{household_id}")
    base_load_w = rng.uniform(150, 400)
    evening_peak_w = rng.uniform(500, 1500)
    morning_peak_w = rng.uniform(300, 800)
    weather: dict[int, float] = {}
    stored_wh = 0.0
    capacity_wh = battery_kwh * 1000
    readings = []
    for interval_id in range(start_interval, start_interval + n_intervals):
        hour = (interval_id * INTERVAL_SECONDS % 86400) / 3600
        day = interval_id * INTERVAL_SECONDS // 86400
        if day not in weather:
            weather[day] = rng.uniform(0.45, 1.0)

        load_w = base_load_w
        if 6.5 <= hour < 9.0:
            load_w += morning_peak_w * math.sin((hour - 6.5) / 2.5 * math.pi)
        if 17.5 <= hour < 22.5:
            load_w += evening_peak_w * math.sin((hour - 17.5) / 5.0 * math.pi)
        load_w *= rng.uniform(0.85, 1.15)
        consumption = max(0, int(load_w * INTERVAL_SECONDS / 3600))

        production = 0
        if kind is HouseholdKind.PROSUMER and 6.0 <= hour < 20.0:
            shape = math.sin((hour - 6.0) / 14.0 * math.pi) ** 2
            pv_w = pv_kwp * 1000 * shape * weather[day] * rng.uniform(0.92, 1.08)
            production = max(0, int(pv_w * INTERVAL_SECONDS / 3600))

        battery = 0
        if capacity_wh > 0 and kind is HouseholdKind.PROSUMER:
            surplus = production - consumption
            if surplus > 0 and stored_wh < capacity_wh:
                # charge from PV surplus only, at most the C/2 rate
                battery = int(min(surplus, capacity_wh - stored_wh, capacity_wh / 2 / 4))
            elif surplus < 0 and stored_wh > 0:
                battery = -int(min(-surplus, stored_wh, capacity_wh / 2 / 4))
            stored_wh += battery

        readings.append(
            MeterReading(
                household_id=household_id,
                interval_id=interval_id,
                consumption_wh=consumption,
                production_wh=production,
                battery_wh=battery,
            )
        )
    profile = HouseholdProfile(household_id, kind, pv_kwp, battery_kwh)
    profile.readings = readings
    return profile
