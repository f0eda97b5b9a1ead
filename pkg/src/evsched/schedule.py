"""Order-preserving slot assignments and the aggregate load they produce.

A schedule maps every session to one slot per charge block.  Blocks keep
their measured order, stay inside the plug-in window and inside the
optimization window ``[t_start, t_end]``.  Blocks measured outside the
optimization window, and every block of a non-movable session, stay where
they were recorded.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .timegrid import SLOT_HOURS, SLOTS_PER_DAY, ChargingSession

ARRIVAL = "arrival"
DEPARTURE = "departure"
WINDOW_START = "window_start"
WINDOW_END = "window_end"
ORDER = "order"
FIXED = "fixed"
COUNT = "count"
MISSING = "missing"


class InvalidScheduleError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        head = "; ".join(str(v) for v in self.violations[:3])
        super().__init__(f"{len(self.violations)} constraint violation(s): {head}")


@dataclass(frozen=True)
class Violation:
    session_id: str
    block: int | None
    constraint: str
    detail: str = ""

    def __str__(self):
        where = self.session_id if self.block is None else f"{self.session_id}[{self.block}]"
        return f"{where}: {self.constraint} {self.detail}".rstrip()


@dataclass(frozen=True)
class Schedule:
    assignments: Mapping[str, tuple[int, ...]] = field(default_factory=dict)
    t_start: int = 0
    t_end: int = SLOTS_PER_DAY - 1

    def __post_init__(self):
        if not (0 <= self.t_start <= self.t_end < SLOTS_PER_DAY):
            raise ValueError(f"bad optimization window [{self.t_start}, {self.t_end}]")

    def __len__(self):
        return len(self.assignments)

    def slots_for(self, session_id: str) -> tuple[int, ...]:
        return self.assignments[session_id]


def is_movable_block(session: ChargingSession, slot: int, t_start: int, t_end: int) -> bool:
    return session.movable and t_start <= slot <= t_end


def baseline_schedule(sessions: Iterable[ChargingSession], t_start: int = 0,
                      t_end: int = SLOTS_PER_DAY - 1) -> Schedule:
    """The as-measured schedule: every block at its recorded slot."""
    return Schedule({s.session_id: tuple(s.original_slots) for s in sessions}, t_start, t_end)


def validate_schedule(schedule: Schedule, sessions: Sequence[ChargingSession]) -> list[Violation]:
    """Every constraint violation in ``schedule``; an empty list means feasible."""
    out: list[Violation] = []
    lo_w, hi_w = schedule.t_start, schedule.t_end
    known = {s.session_id for s in sessions}
    for sid in schedule.assignments:
        if sid not in known:
            out.append(Violation(sid, None, MISSING, "scheduled but not in session list"))
    for s in sessions:
        slots = schedule.assignments.get(s.session_id)
        if slots is None:
            out.append(Violation(s.session_id, None, MISSING, "no assignment"))
            continue
        if len(slots) != s.n_blocks:
            out.append(Violation(s.session_id, None, COUNT,
                                 f"{len(slots)} slots for {s.n_blocks} blocks"))
            continue
        for j, (t, orig) in enumerate(zip(slots, s.original_slots)):
            if not is_movable_block(s, orig, lo_w, hi_w):
                if t != orig:
                    out.append(Violation(s.session_id, j, FIXED, f"moved {orig}->{t}"))
            else:
                if t < lo_w:
                    out.append(Violation(s.session_id, j, WINDOW_START, f"{t} < {lo_w}"))
                if t > hi_w:
                    out.append(Violation(s.session_id, j, WINDOW_END, f"{t} > {hi_w}"))
            if t < s.arrival_slot:
                out.append(Violation(s.session_id, j, ARRIVAL, f"{t} < {s.arrival_slot}"))
            if t > s.departure_slot:
                out.append(Violation(s.session_id, j, DEPARTURE, f"{t} > {s.departure_slot}"))
            if j + 1 < len(slots) and not t < slots[j + 1]:
                out.append(Violation(s.session_id, j, ORDER, f"{t} !< {slots[j + 1]}"))
    return out


@dataclass(frozen=True)
class AggregateProfile:
    ap: np.ndarray
    day: dt.date | None = None
    vap_id: str | None = None

    @property
    def energy_kwh(self) -> float:
        return float(self.ap.sum()) * SLOT_HOURS


def aggregate_power(schedule: Schedule, sessions: Sequence[ChargingSession],
                    check: bool = True) -> AggregateProfile:
    """Sum of every block's power at its assigned slot."""
    if check:
        bad = validate_schedule(schedule, sessions)
        if bad:
            raise InvalidScheduleError(bad)
    ap = np.zeros(SLOTS_PER_DAY)
    for s in sessions:
        np.add.at(ap, list(schedule.assignments[s.session_id]), s.blocks)
    days = {s.date for s in sessions}
    vaps = {s.vap_id for s in sessions}
    return AggregateProfile(
        ap,
        days.pop() if len(days) == 1 else None,
        vaps.pop() if len(vaps) == 1 else None,
    )


def profile_stats(ap, period: Iterable[int]) -> dict[str, float]:
    """Max kW and kWh of a profile over a slot set."""
    ap = ap.ap if isinstance(ap, AggregateProfile) else np.asarray(ap, dtype=float)
    idx = sorted(set(period))
    if not idx:
        raise ValueError("empty period")
    if idx[0] < 0 or idx[-1] >= len(ap):
        raise ValueError("period slots out of range")
    sub = ap[idx]
    return {"max_kw": float(sub.max()), "energy_kwh": float(sub.sum()) * SLOT_HOURS}


def write_schedule(schedule: Schedule, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["session_id", "block_index", "assigned_slot"])
        for sid in sorted(schedule.assignments):
            for j, t in enumerate(schedule.assignments[sid]):
                w.writerow([sid, j, t])


def read_schedule(path: str | Path, t_start: int = 0,
                  t_end: int = SLOTS_PER_DAY - 1) -> Schedule:
    rows: dict[str, dict[int, int]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(rec["session_id"], {})[int(rec["block_index"])] = int(rec["assigned_slot"])
    return Schedule({sid: tuple(b[j] for j in sorted(b)) for sid, b in rows.items()},
                    t_start, t_end)
