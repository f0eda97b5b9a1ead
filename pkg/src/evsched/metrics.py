"""Descriptive statistics for a charging population.

Infrastructure use is the number of sessions per EVSE per business day.
Load flexibility is the share of a session's plugged time spent idle, both
durations counted in whole 15-minute slots.  Sessions split off after
midnight (``source_id`` set) continue an earlier session and are not
counted again.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm

from .timegrid import SLOTS_PER_DAY, ChargingSession

WHISKER_QUANTILE = 0.99


def _originals(sessions: Iterable[ChargingSession]) -> list[ChargingSession]:
    return [s for s in sessions if s.source_id is None]


def infrastructure_use(sessions: Sequence[ChargingSession] | int, evse_count: int) -> float:
    """Sessions per EVSE; ``sessions`` may also be a plain count."""
    if evse_count < 1:
        raise ValueError("evse_count must be at least 1")
    n = sessions if isinstance(sessions, int) else len(sessions)
    return n / evse_count


def flexibility(duration_slots: int, charge_slots: int) -> float:
    if duration_slots <= 0:
        raise ValueError("session duration must be positive")
    if not 0 <= charge_slots <= duration_slots:
        raise ValueError("charge slots must lie in [0, duration]")
    return (duration_slots - charge_slots) / duration_slots


def load_flexibility(session: ChargingSession) -> float:
    return flexibility(session.duration_slots, session.n_blocks)


def sessions_per_day(n_sessions: int, n_days: int) -> float:
    if n_days < 1:
        raise ValueError("n_days must be at least 1")
    return n_sessions / n_days


def rebin_hourly(hist: Sequence[int]) -> np.ndarray:
    h = np.asarray(hist)
    if len(h) != SLOTS_PER_DAY:
        raise ValueError(f"expected {SLOTS_PER_DAY} slot counts")
    return h.reshape(24, -1).sum(axis=1)


def arrival_departure_histograms(sessions: Iterable[ChargingSession], hourly: bool = False):
    """Counts of arrival and departure slots (or hours with ``hourly=True``)."""
    originals = _originals(sessions)
    arr = np.bincount([s.arrival_slot for s in originals], minlength=SLOTS_PER_DAY)
    dep = np.bincount([s.departure_slot for s in originals], minlength=SLOTS_PER_DAY)
    arr, dep = arr.astype(int), dep.astype(int)
    if hourly:
        return rebin_hourly(arr), rebin_hourly(dep)
    return arr, dep


def is_business_day(day: dt.date, holidays: Iterable[dt.date] = ()) -> bool:
    return day.weekday() < 5 and day not in set(holidays)


def business_days(start: dt.date, end: dt.date, holidays: Iterable[dt.date] = ()) -> list[dt.date]:
    hol = set(holidays)
    n = (end - start).days + 1
    days = (start + dt.timedelta(days=i) for i in range(max(n, 0)))
    return [d for d in days if is_business_day(d, hol)]


def daily_infrastructure_use(sessions: Iterable[ChargingSession], evse_count: int,
                             start: dt.date, end: dt.date,
                             holidays: Iterable[dt.date] = ()) -> dict[dt.date, float]:
    """Per business day in ``[start, end]``: sessions started that day per EVSE."""
    counts: dict[dt.date, int] = {}
    for s in _originals(sessions):
        counts[s.date] = counts.get(s.date, 0) + 1
    return {d: infrastructure_use(counts.get(d, 0), evse_count)
            for d in business_days(start, end, holidays)}


def box_stats(values: Iterable[float]) -> dict[str, float | None]:
    """Median, quartiles and whiskers for a box plot.

    Whiskers are the 1st and 99th percentiles of a normal fit
    (``mean -/+ z_0.99 * std``), not of the empirical sample.
    """
    x = np.asarray([v for v in values if v is not None and math.isfinite(v)], dtype=float)
    keys = ("n", "median", "q25", "q75", "whisker_low", "whisker_high", "mean")
    if x.size == 0:
        return dict.fromkeys(keys) | {"n": 0}
    z = float(norm.ppf(WHISKER_QUANTILE))
    mean, std = float(x.mean()), float(x.std())
    q25, med, q75 = (float(v) for v in np.percentile(x, [25, 50, 75]))
    return {"n": int(x.size), "median": med, "q25": q25, "q75": q75,
            "whisker_low": mean - z * std, "whisker_high": mean + z * std, "mean": mean}


@dataclass
class MetricsSummary:
    vap_id: str
    start: dt.date
    end: dt.date
    n_sessions: int
    n_evse: int
    n_days: int
    i_use: dict[dt.date, float] = field(default_factory=dict)
    l_flex: list[float] = field(default_factory=list)
    arrival_hist: list[int] = field(default_factory=lambda: [0] * SLOTS_PER_DAY)
    departure_hist: list[int] = field(default_factory=lambda: [0] * SLOTS_PER_DAY)

    @property
    def n_business_days(self) -> int:
        return len(self.i_use)

    @property
    def mean_i_use(self) -> float | None:
        return float(np.mean(list(self.i_use.values()))) if self.i_use else None

    @property
    def mean_l_flex(self) -> float | None:
        return float(np.mean(self.l_flex)) if self.l_flex else None

    @property
    def sessions_per_day(self) -> float:
        """Sessions per calendar day (every day in the window)."""
        return sessions_per_day(self.n_sessions, self.n_days)

    @property
    def sessions_per_business_day(self) -> float | None:
        n = sum(v * self.n_evse for v in self.i_use.values())
        return n / self.n_business_days if self.n_business_days else None

    def row(self) -> dict[str, object]:
        """Flat record for the metrics table."""
        iu, lf = box_stats(self.i_use.values()), box_stats(self.l_flex)
        out: dict[str, object] = {
            "vap_id": self.vap_id,
            "start": self.start.isoformat(),
            "end": self.end.isoformat(),
            "n_sessions": self.n_sessions,
            "n_evse": self.n_evse,
            "n_days": self.n_days,
            "n_business_days": self.n_business_days,
            "sessions_per_day": self.sessions_per_day,
            "sessions_per_business_day": self.sessions_per_business_day,
            "i_use_mean": self.mean_i_use,
            "l_flex_mean": self.mean_l_flex,
        }
        for prefix, stats in (("i_use", iu), ("l_flex", lf)):
            for k in ("median", "q25", "q75", "whisker_low", "whisker_high"):
                out[f"{prefix}_{k}"] = stats[k]
        return out

    def as_dict(self) -> dict[str, object]:
        d = asdict(self)
        d["start"], d["end"] = self.start.isoformat(), self.end.isoformat()
        d["i_use"] = {k.isoformat(): v for k, v in sorted(self.i_use.items())}
        d["summary"] = self.row()
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def summarize(sessions: Sequence[ChargingSession], vap_id: str | None = None,
              start: dt.date | None = None, end: dt.date | None = None,
              evse_count: int | None = None,
              holidays: Iterable[dt.date] = ()) -> MetricsSummary:
    """Metrics for one VAP over ``[start, end]`` (default: the sessions' span).

    ``evse_count`` defaults to the distinct EVSEs seen in the sessions.
    """
    if vap_id is not None:
        sessions = [s for s in sessions if s.vap_id == vap_id]
    else:
        vaps = sorted({s.vap_id for s in sessions})
        if len(vaps) > 1:
            raise ValueError(f"sessions span several VAPs {vaps}; pass vap_id")
        vap_id = vaps[0] if vaps else ""
    if start is None or end is None:
        dates = [s.date for s in sessions]
        if not dates:
            raise ValueError("no sessions and no explicit date window")
        start = start or min(dates)
        end = end or max(dates)
    if end < start:
        raise ValueError("window end precedes start")
    in_window = [s for s in sessions if start <= s.date <= end]
    originals = _originals(in_window)
    if evse_count is None:
        evse_count = len({s.evse_id for s in in_window})
    arr, dep = arrival_departure_histograms(originals)
    return MetricsSummary(
        vap_id=vap_id,
        start=start,
        end=end,
        n_sessions=len(originals),
        n_evse=evse_count,
        n_days=(end - start).days + 1,
        i_use=daily_infrastructure_use(originals, evse_count, start, end, holidays)
        if evse_count else {},
        l_flex=[load_flexibility(s) for s in originals],
        arrival_hist=arr.tolist(),
        departure_hist=dep.tolist(),
    )


def summarize_by_vap(sessions: Sequence[ChargingSession], **kwargs) -> list[MetricsSummary]:
    return [summarize(sessions, vap_id=v, **kwargs) for v in sorted({s.vap_id for s in sessions})]
