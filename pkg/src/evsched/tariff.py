"""Seasonal time-of-use tariffs with demand charges.

A tariff is a set of seasons; each season lists rate periods.  Periods that
carry an energy rate must partition the 96 slots of the day.  Periods that
carry a demand rate may overlap (an ``anytime`` period spans the whole day).
Demand is measured on 15-minute average power.
"""

from __future__ import annotations

import calendar
import datetime as dt
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .timegrid import SLOT_HOURS, SLOTS_PER_DAY, ConfigurationError, slot_set_of_range

DEFAULT_SEASON_DATES = {
    "summer": ((5, 1), (10, 31)),
    "winter": ((11, 1), (4, 30)),
}


class Month(NamedTuple):
    year: int
    month: int

    @classmethod
    def parse(cls, text: str) -> "Month":
        try:
            y, m = text.split("-")
            out = cls(int(y), int(m))
        except ValueError:
            raise ConfigurationError(f"month must look like YYYY-MM, got {text!r}") from None
        if not 1 <= out.month <= 12:
            raise ConfigurationError(f"bad month {text!r}")
        return out

    @classmethod
    def of(cls, day: dt.date) -> "Month":
        return cls(day.year, day.month)

    def days(self) -> list[dt.date]:
        n = calendar.monthrange(self.year, self.month)[1]
        return [dt.date(self.year, self.month, d) for d in range(1, n + 1)]

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


@dataclass(frozen=True)
class RatePeriod:
    name: str
    slots: frozenset[int]
    energy_rate: float | None = None
    demand_rate: float | None = None
    ranges: tuple[str, ...] = ()

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(SLOTS_PER_DAY, dtype=bool)
        m[sorted(self.slots)] = True
        return m


@dataclass(frozen=True)
class Season:
    name: str
    start: tuple[int, int]
    end: tuple[int, int]
    periods: tuple[RatePeriod, ...]
    energy_rates: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rates = np.full(SLOTS_PER_DAY, np.nan)
        for p in self.periods:
            if p.energy_rate is None:
                continue
            idx = sorted(p.slots)
            if not np.all(np.isnan(rates[idx])):
                raise ConfigurationError(
                    f"season {self.name}: energy period {p.name} overlaps another"
                )
            rates[idx] = p.energy_rate
        if self.periods and any(p.energy_rate is not None for p in self.periods):
            gaps = np.flatnonzero(np.isnan(rates))
            if len(gaps):
                raise ConfigurationError(
                    f"season {self.name}: slots {gaps.tolist()} have no energy rate"
                )
        rates = np.nan_to_num(rates)
        rates.setflags(write=False)
        object.__setattr__(self, "energy_rates", rates)

    def contains(self, day: dt.date) -> bool:
        key = (day.month, day.day)
        if self.start <= self.end:
            return self.start <= key <= self.end
        return key >= self.start or key <= self.end

    @property
    def demand_periods(self) -> tuple[RatePeriod, ...]:
        return tuple(p for p in self.periods if p.demand_rate is not None)


@dataclass(frozen=True)
class TariffSchedule:
    name: str
    seasons: tuple[Season, ...]

    def season_of(self, day: dt.date) -> Season:
        hits = [s for s in self.seasons if s.contains(day)]
        if len(hits) != 1:
            raise ConfigurationError(
                f"{day} falls in {len(hits)} seasons of tariff {self.name!r}; need exactly one"
            )
        return hits[0]

    def energy_rates(self, day: dt.date) -> np.ndarray:
        return self.season_of(day).energy_rates

    def demand_periods(self, day: dt.date) -> tuple[RatePeriod, ...]:
        return self.season_of(day).demand_periods


def _parse_month_day(text: str) -> tuple[int, int]:
    try:
        m, d = (int(x) for x in text.split("-"))
        dt.date(2000, m, d)
    except ValueError:
        raise ConfigurationError(f"season dates look like MM-DD, got {text!r}") from None
    return m, d


def _parse_period(raw: Mapping) -> RatePeriod:
    try:
        name = raw["name"]
        ranges = tuple(raw["ranges"])
    except KeyError as exc:
        raise ConfigurationError(f"rate period missing {exc.args[0]!r}") from None
    slots: frozenset[int] = frozenset()
    for r in ranges:
        part = slot_set_of_range(r)
        if slots & part:
            raise ConfigurationError(f"period {name}: ranges overlap")
        slots |= part
    er = raw.get("energy_rate")
    dr = raw.get("demand_rate")
    if er is None and dr is None:
        raise ConfigurationError(f"period {name} has neither energy_rate nor demand_rate")
    for rate in (er, dr):
        if rate is not None and float(rate) < 0:
            raise ConfigurationError(f"period {name}: negative rate")
    return RatePeriod(
        name, slots,
        None if er is None else float(er),
        None if dr is None else float(dr),
        ranges,
    )


def tariff_from_dict(config: Mapping, name: str | None = None) -> TariffSchedule:
    """Build a tariff from its JSON form.

    Two layouts are accepted: ``{season: [period, ...]}`` where the season
    name picks the default calendar (summer May 1 to Oct 31, winter the rest),
    or ``{"name": ..., "seasons": {season: {"start": "MM-DD", "end": "MM-DD",
    "periods": [...]}}}``.
    """
    body = config.get("seasons", config) if isinstance(config, Mapping) else None
    if not isinstance(body, Mapping) or not body:
        raise ConfigurationError("tariff config must map season names to periods")
    name = name or config.get("name", "custom")
    seasons = []
    for season_name, spec in body.items():
        if season_name == "name":
            continue
        if isinstance(spec, Mapping):
            periods = spec.get("periods", [])
            start = _parse_month_day(spec["start"]) if "start" in spec else None
            end = _parse_month_day(spec["end"]) if "end" in spec else None
        else:
            periods, start, end = spec, None, None
        if start is None or end is None:
            if season_name in DEFAULT_SEASON_DATES:
                start, end = DEFAULT_SEASON_DATES[season_name]
            elif len(body) == 1:
                start, end = (1, 1), (12, 31)
            else:
                raise ConfigurationError(f"season {season_name!r} needs start/end dates")
        seasons.append(Season(season_name, start, end,
                              tuple(_parse_period(p) for p in periods)))
    tariff = TariffSchedule(name, tuple(seasons))
    # every calendar day (leap year included) must map to exactly one season
    for d in range(366):
        tariff.season_of(dt.date(2000, 1, 1) + dt.timedelta(d))
    return tariff


def load_tariff(path: str | Path) -> TariffSchedule:
    with open(path, encoding="utf-8") as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
    return tariff_from_dict(config)


def e19() -> TariffSchedule:
    """The E-19 energy and demand rates shipped with the package."""
    text = resources.files("evsched.data").joinpath("e19.json").read_text(encoding="utf-8")
    return tariff_from_dict(json.loads(text))


def _clock12(slot: int) -> str:
    minutes = (slot * 15) % 1440
    h, m = divmod(minutes, 60)
    suffix = "AM" if h < 12 else "PM"
    return f"{(h % 12) or 12}:{m:02d}{suffix}"


def describe_slots(slots: frozenset[int]) -> str:
    """Render a slot set as 12-hour clock ranges, e.g. ``8:30AM-12:00PM & 6:00PM-9:30PM``."""
    if len(slots) == SLOTS_PER_DAY:
        return "Any time"
    runs = []
    ordered = sorted(slots)
    start = prev = ordered[0]
    for s in ordered[1:]:
        if s != prev + 1:
            runs.append((start, prev + 1))
            start = s
        prev = s
    runs.append((start, prev + 1))
    if len(runs) > 1 and runs[0][0] == 0 and runs[-1][1] == SLOTS_PER_DAY:
        runs = runs[1:-1] + [(runs[-1][0], runs[0][1])]
    return " & ".join(f"{_clock12(a)}-{_clock12(b)}" for a, b in runs)


def rate_table(tariff: TariffSchedule) -> list[dict]:
    """Flat listing of every rate in the tariff, one row per (charge kind, season, period)."""
    rows = []
    for kind, attr in (("demand", "demand_rate"), ("energy", "energy_rate")):
        for season in tariff.seasons:
            for p in season.periods:
                rate = getattr(p, attr)
                if rate is not None:
                    rows.append({"kind": kind, "season": season.name, "period": p.name,
                                 "rate": rate, "time_period": describe_slots(p.slots)})
    return rows


# -- charges ---------------------------------------------------------------

def _check_profile(ap) -> np.ndarray:
    ap = np.asarray(ap, dtype=float)
    if ap.shape != (SLOTS_PER_DAY,):
        raise ValueError(f"aggregate profile must have {SLOTS_PER_DAY} slots, got {ap.shape}")
    if np.any(ap < 0):
        raise ValueError("aggregate profile has negative power")
    return ap


def energy_charge(ap, day: dt.date, tariff: TariffSchedule) -> float:
    """Dollars for one day: sum of kW x 0.25 h x $/kWh over all slots."""
    ap = _check_profile(ap)
    return float(ap @ tariff.energy_rates(day)) * SLOT_HOURS


@dataclass(frozen=True)
class BillingState:
    """Running per-period demand maxima for one billing month."""

    month: Month
    ap_max: Mapping[str, float] = field(default_factory=dict)
    energy_charges: float = 0.0
    days: frozenset[dt.date] = frozenset()

    def max_for(self, period: str) -> float:
        return self.ap_max.get(period, 0.0)


def period_peaks(ap, day: dt.date, tariff: TariffSchedule) -> dict[str, float]:
    ap = _check_profile(ap)
    return {p.name: float(ap[p.mask].max()) for p in tariff.demand_periods(day)}


def update_demand_state(state: BillingState, ap, day: dt.date,
                        tariff: TariffSchedule) -> BillingState:
    if Month.of(day) != state.month:
        raise ValueError(f"{day} is not in billing month {state.month}")
    peaks = period_peaks(ap, day, tariff)
    new_max = dict(state.ap_max)
    for name, value in peaks.items():
        new_max[name] = max(new_max.get(name, 0.0), value)
    return replace(
        state, ap_max=new_max,
        energy_charges=state.energy_charges + energy_charge(ap, day, tariff),
        days=state.days | {day},
    )


def demand_charge(state: BillingState, tariff: TariffSchedule) -> tuple[dict[str, float], float]:
    """Demand charge per period (max kW x $/kW) and their sum."""
    season = tariff.season_of(dt.date(state.month.year, state.month.month, 1))
    per = {p.name: state.max_for(p.name) * p.demand_rate for p in season.demand_periods}
    return per, sum(per.values())


@dataclass(frozen=True)
class BillBreakdown:
    month: Month
    energy: float
    demand: Mapping[str, float]
    peaks: Mapping[str, float]

    @property
    def demand_total(self) -> float:
        return sum(self.demand.values())

    @property
    def total(self) -> float:
        return self.demand_total + self.energy

    def as_dict(self) -> dict:
        return {
            "month": str(self.month), "total": self.total, "energy": self.energy,
            "demand_total": self.demand_total, "demand": dict(self.demand),
            "peaks": dict(self.peaks),
        }


def monthly_bill(daily_aps: Sequence, month: Month | tuple[int, int],
                 tariff: TariffSchedule) -> BillBreakdown:
    """Bill a month from one aggregate profile per calendar day, in day order."""
    month = Month(*month)
    days = month.days()
    if len(daily_aps) != len(days):
        raise ValueError(f"{month} has {len(days)} days, got {len(daily_aps)} profiles")
    state = BillingState(month)
    for day, ap in zip(days, daily_aps):
        state = update_demand_state(state, ap, day, tariff)
    per, _ = demand_charge(state, tariff)
    return BillBreakdown(month, state.energy_charges, per, dict(state.ap_max))
