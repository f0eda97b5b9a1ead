"""Reading, writing and synthesizing charging-session data.

Input files are long form, one row per session and 15-minute slot::

    session_id,evse_id,vap_id,slot_timestamp,avg_power_kw
    s1,evse-07,P2-SB,2013-07-01T09:00:00,3.3

A session's first row fixes its arrival slot and its last row the departure
slot.  Missing slots in between are idle.  Rows after local midnight are
split off as a fixed (non-movable) record on the following day.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence, TextIO
from zoneinfo import ZoneInfo

import numpy as np

from .timegrid import (SLOT_MINUTES, SLOTS_PER_DAY, ChargingSession, ConfigurationError)

log = logging.getLogger(__name__)

COLUMNS = ("session_id", "evse_id", "vap_id", "slot_timestamp", "avg_power_kw")
POWER_THRESHOLD_KW = 0.01


class SessionFileError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class Rejected:
    session_id: str
    line: int
    reason: str


@dataclass
class ParseResult:
    sessions: list[ChargingSession] = field(default_factory=list)
    rejected: list[Rejected] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def _slot(ts: dt.datetime) -> int:
    # enclosing slot; non-aligned stamps widen the window rather than narrow it
    return (ts.hour * 60 + ts.minute) // SLOT_MINUTES


def _is_dst_transition(day: dt.date, tz: ZoneInfo) -> bool:
    start = dt.datetime.combine(day, dt.time(0), tz)
    end = dt.datetime.combine(day, dt.time(23, 59), tz)
    return start.utcoffset() != end.utcoffset()


def read_sessions(source: str | Path | TextIO, threshold: float = POWER_THRESHOLD_KW,
                  timezone: str | None = None) -> ParseResult:
    """Parse a long-form session file, collecting rejected records.

    Structural problems (missing columns, wrong field count, non-numeric
    power) raise :class:`SessionFileError` with the line number.  Record-level
    problems (negative power, bad timestamp, DST-transition day) reject that
    session only.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return read_sessions(fh, threshold, timezone)
    tz = ZoneInfo(timezone) if timezone else None
    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SessionFileError("empty file, header required", 1) from None
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise SessionFileError(f"missing columns {missing}", 1)
    col = {c: header.index(c) for c in COLUMNS}

    out = ParseResult()
    rows: dict[str, dict[dt.datetime, tuple[float, int]]] = {}
    meta: dict[str, tuple[str, str, int]] = {}
    bad: dict[str, Rejected] = {}

    for line, rec in enumerate(reader, start=2):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != len(header):
            raise SessionFileError(f"expected {len(header)} fields, got {len(rec)}", line)
        sid = rec[col["session_id"]].strip()
        if not sid:
            raise SessionFileError("empty session_id", line)
        try:
            power = float(rec[col["avg_power_kw"]])
        except ValueError:
            raise SessionFileError(f"bad power value {rec[col['avg_power_kw']]!r}", line) from None
        if not math.isfinite(power):
            raise SessionFileError("power must be finite", line)
        evse, vap = rec[col["evse_id"]].strip(), rec[col["vap_id"]].strip()
        first = meta.setdefault(sid, (evse, vap, line))
        if sid in bad:
            continue
        try:
            ts = dt.datetime.fromisoformat(rec[col["slot_timestamp"]].strip())
        except ValueError:
            bad[sid] = Rejected(sid, line, f"unparseable timestamp {rec[col['slot_timestamp']]!r}")
            continue
        if power < 0:
            bad[sid] = Rejected(sid, line, f"negative power {power}")
            continue
        if (evse, vap) != first[:2]:
            bad[sid] = Rejected(sid, line, "evse_id/vap_id change within session")
            continue
        per = rows.setdefault(sid, {})
        if ts in per:
            msg = f"line {line}: duplicate row for {sid} at {ts.isoformat()}, keeping the later one"
            log.warning(msg)
            out.warnings.append(msg)
        per[ts] = (power, line)

    for sid, (evse, vap, first_line) in meta.items():
        if sid in bad:
            continue
        per = rows.get(sid, {})
        stamps = sorted(per)
        offsets = {t.utcoffset() for t in stamps}
        if len(offsets) > 1:
            bad[sid] = Rejected(sid, first_line, "UTC offset changes within session (DST)")
            continue
        local = [t.replace(tzinfo=None) for t in stamps]
        if tz is not None and any(_is_dst_transition(t.date(), tz) for t in local):
            bad[sid] = Rejected(sid, first_line, "session on a DST transition day")
            continue
        try:
            out.sessions.extend(_build(sid, evse, vap, local, [per[t][0] for t in stamps],
                                       threshold))
        except ValueError as exc:
            bad[sid] = Rejected(sid, first_line, str(exc))

    out.rejected = sorted(bad.values(), key=lambda r: r.line)
    for r in out.rejected:
        msg = f"line {r.line}: rejected session {r.session_id}: {r.reason}"
        log.warning(msg)
        out.warnings.append(msg)
    return out


def _build(sid, evse, vap, stamps: list[dt.datetime], powers: list[float], threshold):
    by_day: dict[dt.date, list[tuple[int, float]]] = defaultdict(list)
    for t, p in zip(stamps, powers):
        by_day[t.date()].append((_slot(t), p))
    days = sorted(by_day)
    last_day = days[-1]
    out = []
    day = days[0]
    while day <= last_day:
        entries = by_day.get(day, [])
        raw = np.zeros(SLOTS_PER_DAY)
        for s, p in entries:
            raw[s] = p
        first = day == days[0]
        t_a = entries[0][0] if first else 0
        t_d = entries[-1][0] if day == last_day else SLOTS_PER_DAY - 1
        out.append(ChargingSession.from_power(
            sid if first else f"{sid}@{day.isoformat()}", evse, vap, day, t_a, t_d, raw,
            threshold=threshold, movable=first, source_id=None if first else sid,
        ))
        day += dt.timedelta(days=1)
    return out


def parse_sessions(source, threshold: float = POWER_THRESHOLD_KW,
                   timezone: str | None = None) -> list[ChargingSession]:
    return read_sessions(source, threshold, timezone).sessions


def write_sessions(sessions: Iterable[ChargingSession], dest: str | Path | TextIO) -> None:
    """Write sessions in long form, one row per slot from arrival to departure."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            write_sessions(sessions, fh)
        return
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(COLUMNS)
    for s in sessions:
        p = s.raw_power
        sid = s.source_id or s.session_id
        for k in range(s.arrival_slot, s.departure_slot + 1):
            ts = dt.datetime.combine(s.date, dt.time()) + dt.timedelta(minutes=k * SLOT_MINUTES)
            w.writerow([sid, s.evse_id, s.vap_id, ts.isoformat(), repr(float(p[k]))])


def sessions_to_csv(sessions: Iterable[ChargingSession]) -> str:
    buf = io.StringIO()
    write_sessions(sessions, buf)
    return buf.getvalue()


def group_sessions(sessions: Iterable[ChargingSession]
                   ) -> dict[str, dict[dt.date, list[ChargingSession]]]:
    """``{vap_id: {date: [sessions]}}`` with keys in sorted order."""
    out: dict[str, dict[dt.date, list[ChargingSession]]] = {}
    for s in sessions:
        out.setdefault(s.vap_id, {}).setdefault(s.date, []).append(s)
    return {v: {d: sorted(ss, key=lambda s: s.session_id) for d, ss in sorted(days.items())}
            for v, days in sorted(out.items())}


# -- synthetic data ----------------------------------------------------------

# hourly shapes for non-residential charging: plug-ins cluster 7-10AM with a
# smaller midday return, departures cluster 5-7PM with a lunchtime bump
ARRIVAL_HOURLY = (0, 0, 0, 0, 0, 1, 3, 14, 22, 18, 9, 7, 14, 13, 7, 4, 2, 1, 1, 1, 0, 0, 0, 0)
DEPARTURE_HOURLY = (0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 2, 3, 5, 4, 4, 6, 9, 18, 20, 12, 6, 4, 2, 1)


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the synthetic population.

    ``arrival_hourly`` / ``departure_hourly`` are 24 relative weights.
    ``flexibility_target`` is the mean share of plugged time spent idle.
    ``weekend_weight`` scales session volume on Saturdays and Sundays.
    A ``visit_share`` of sessions are short stays (``visit_hours`` long) that
    depart on their own clock instead of following ``departure_hourly``.
    """

    n_sessions: int = 3000
    start_date: dt.date = dt.date(2013, 7, 1)
    n_days: int = 31
    n_evse: int = 50
    vap_id: str = "SYN"
    arrival_hourly: tuple[float, ...] = ARRIVAL_HOURLY
    departure_hourly: tuple[float, ...] = DEPARTURE_HOURLY
    power_levels: tuple[float, ...] = (3.3, 6.6)
    power_weights: tuple[float, ...] = (0.6, 0.4)
    flexibility_target: float = 0.5
    flexibility_concentration: float = 6.0
    min_charge_slots: int = 1
    taper: bool = True
    weekend_weight: float = 0.3
    visit_share: float = 0.45
    visit_hours: tuple[float, ...] = (1.0, 4.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_sessions < 0 or self.n_days < 1 or self.n_evse < 1:
            raise ConfigurationError("n_sessions >= 0, n_days >= 1 and n_evse >= 1 required")
        if not 0 <= self.flexibility_target < 1:
            raise ConfigurationError("flexibility_target must be in [0, 1)")
        for name in ("arrival_hourly", "departure_hourly"):
            h = getattr(self, name)
            if len(h) != 24 or min(h) < 0 or sum(h) <= 0:
                raise ConfigurationError(f"{name} needs 24 non-negative weights with positive sum")
        if len(self.power_levels) != len(self.power_weights) or not self.power_levels:
            raise ConfigurationError("power_levels and power_weights must match")
        if min(self.power_levels) <= 0:
            raise ConfigurationError("power levels must be positive")
        if not 0 <= self.visit_share <= 1:
            raise ConfigurationError("visit_share must be in [0, 1]")
        if len(self.visit_hours) != 2 or not 0.25 <= self.visit_hours[0] <= self.visit_hours[1]:
            raise ConfigurationError("visit_hours must be (min, max) with 0.25 <= min <= max")


def _tuple_of_floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def load_synthetic_config(path: str | Path, **overrides) -> SyntheticConfig:
    """Read a flat ``key = value`` file (``#`` starts a comment)."""
    kinds = {f.name: f.type for f in fields(SyntheticConfig)}
    values: dict[str, object] = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigurationError(f"{path}:{n}: expected key = value")
            key, val = (x.strip() for x in text.split("=", 1))
            if key not in kinds:
                raise ConfigurationError(f"{path}:{n}: unknown key {key!r}")
            values[key] = val
    values.update({k: v for k, v in overrides.items() if v is not None})
    return synthetic_config_from_mapping(values)


def synthetic_config_from_mapping(values: Mapping[str, object]) -> SyntheticConfig:
    kinds = {f.name: f.type for f in fields(SyntheticConfig)}
    out: dict[str, object] = {}
    for key, val in values.items():
        if key not in kinds:
            raise ConfigurationError(f"unknown synthetic config key {key!r}")
        kind = str(kinds[key])
        try:
            if not isinstance(val, str):
                out[key] = val
            elif kind.startswith("tuple"):
                out[key] = _tuple_of_floats(val)
            elif kind == "int":
                out[key] = int(val)
            elif kind == "float":
                out[key] = float(val)
            elif kind == "bool":
                out[key] = val.lower() in ("1", "true", "yes", "on")
            elif kind == "dt.date":
                out[key] = dt.date.fromisoformat(val)
            else:
                out[key] = val
        except ValueError:
            raise ConfigurationError(f"bad value for {key}: {val!r}") from None
    return SyntheticConfig(**out)


def _slot_weights(hourly: Sequence[float]) -> np.ndarray:
    w = np.repeat(np.asarray(hourly, dtype=float), 60 // SLOT_MINUTES)
    return w / w.sum()


def generate_synthetic(config: SyntheticConfig = SyntheticConfig()) -> list[ChargingSession]:
    """Seeded synthetic sessions shaped like non-residential workplace charging.

    Each session charges from plug-in at a fixed level (last block tapered),
    then sits idle until departure.  Its charging share of the plugged window
    is drawn from a Beta distribution with mean ``1 - flexibility_target``.
    """
    cfg = config
    if cfg.n_sessions == 0:
        return []
    rng = np.random.default_rng(cfg.seed)
    arr_w = _slot_weights(cfg.arrival_hourly)
    dep_w = _slot_weights(cfg.departure_hourly)
    dep_cdf = np.cumsum(dep_w)
    arr_slots = np.flatnonzero(arr_w > 0)
    if not np.any(dep_w[arr_slots.min() + 1:] > 0):
        raise ConfigurationError("no departure weight after any arrival slot")
    widest = int(np.flatnonzero(dep_w > 0).max() - arr_slots.min() + 1)
    if cfg.min_charge_slots > widest:
        raise ConfigurationError(
            f"min_charge_slots={cfg.min_charge_slots} exceeds every feasible window ({widest})"
        )

    days = [cfg.start_date + dt.timedelta(d) for d in range(cfg.n_days)]
    day_w = np.array([cfg.weekend_weight if d.weekday() >= 5 else 1.0 for d in days])
    day_of = np.sort(rng.choice(len(days), size=cfg.n_sessions, p=day_w / day_w.sum()))
    mean_charge = 1.0 - cfg.flexibility_target
    a = max(mean_charge * cfg.flexibility_concentration, 1e-3)
    b = max(cfg.flexibility_target * cfg.flexibility_concentration, 1e-3)

    drafts = []
    for n in range(cfg.n_sessions):
        for _ in range(1000):
            t_a = int(rng.choice(SLOTS_PER_DAY, p=arr_w))
            tail = 1.0 - dep_cdf[t_a]
            if tail > 1e-12 and SLOTS_PER_DAY - t_a >= cfg.min_charge_slots:
                break
        else:
            raise ConfigurationError("could not draw a feasible arrival slot")
        if rng.random() < cfg.visit_share:
            stay = rng.uniform(*cfg.visit_hours) * 60 / SLOT_MINUTES
            t_d = int(min(t_a + max(1, round(stay)) - 1, SLOTS_PER_DAY - 1))
        else:
            # departure conditioned on being strictly after arrival
            u = dep_cdf[t_a] + rng.random() * tail
            t_d = int(min(np.searchsorted(dep_cdf, u, side="right"), SLOTS_PER_DAY - 1))
        t_d = max(t_d, t_a + 1)
        d_session = t_d - t_a + 1
        share = rng.beta(a, b) if cfg.flexibility_target > 0 else 1.0
        m = int(np.clip(round(share * d_session), cfg.min_charge_slots, d_session))
        level = float(rng.choice(cfg.power_levels, p=np.asarray(cfg.power_weights) / sum(cfg.power_weights)))
        blocks = [level] * m
        if cfg.taper and m > 1:
            blocks[-1] = round(level * float(rng.uniform(0.3, 1.0)), 2)
        drafts.append((days[day_of[n]], t_a, t_d, blocks))

    # interval partitioning: hand each session the EVSE that freed up first
    sessions = []
    width = len(str(cfg.n_sessions))
    for day in days:
        todays = sorted((d for d in drafts if d[0] == day), key=lambda d: d[1])
        free_at = np.full(cfg.n_evse, -1)
        for day_, t_a, t_d, blocks in todays:
            evse = int(np.argmin(free_at))
            free_at[evse] = t_d
            sid = f"{cfg.vap_id}-{len(sessions):0{width}d}"
            sessions.append(ChargingSession(
                sid, f"{cfg.vap_id}-evse{evse:03d}", cfg.vap_id, day_, t_a, t_d,
                tuple(float(q) for q in blocks), tuple(range(t_a, t_a + len(blocks))),
            ))
    return sessions
