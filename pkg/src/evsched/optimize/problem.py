"""Slot-assignment problems with max-type demand terms and linear slot costs.

Both the bill and the peak problems reduce to the same shape::

    minimize  sum_h rate_h * max(prev_h, max_{k in h} AP_k) + sum_k cost_k * AP_k
    s.t.      AP_k <= cap_k,  blocks order-preserving inside their windows

``AP`` is fixed load plus the movable blocks of every session.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..schedule import Schedule, is_movable_block
from ..timegrid import SLOTS_PER_DAY, ChargingSession

EPS = 1e-9
STATUSES = ("optimal", "gap-feasible", "time-limit")


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``mode`` is ``exact`` (exhaustive search, errors past ``exact_threshold``
    candidate schedules), ``heuristic`` or ``auto`` (exact when small
    enough).  ``time_limit`` is in seconds per solve; ``None`` means no limit.
    """

    mode: str = "auto"
    relative_gap: float = 0.05
    exact_threshold: int = 200_000
    time_limit: float | None = 60.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("exact", "heuristic", "auto"):
            raise ValueError(f"unknown solver mode {self.mode!r}")
        if self.relative_gap < 0:
            raise ValueError("relative_gap must be >= 0")
        if self.exact_threshold < 1:
            raise ValueError("exact_threshold must be >= 1")


class InstanceTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class Item:
    """Movable blocks of one session and the slots they may use."""

    session_index: int
    session_id: str
    q: np.ndarray
    block_index: np.ndarray
    lo: int
    hi: int
    initial: np.ndarray

    @property
    def m(self) -> int:
        return len(self.q)

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1

    @property
    def n_candidates(self) -> int:
        return math.comb(self.width, self.m)


@dataclass(frozen=True)
class DemandTerm:
    name: str
    mask: np.ndarray
    rate: float
    prev: float = 0.0


@dataclass
class SlotProblem:
    fixed: np.ndarray
    items: list[Item]
    demand: list[DemandTerm] = field(default_factory=list)
    linear: np.ndarray = field(default_factory=lambda: np.zeros(SLOTS_PER_DAY))
    cap: np.ndarray = field(default_factory=lambda: np.full(SLOTS_PER_DAY, np.inf))

    def __post_init__(self):
        if np.any(self.linear < 0) or any(d.rate < 0 for d in self.demand):
            raise ValueError("costs and rates must be non-negative")

    @property
    def n_candidates(self) -> int:
        return math.prod(it.n_candidates for it in self.items)

    def load(self, slots: Sequence[np.ndarray]) -> np.ndarray:
        ap = self.fixed.copy()
        for it, s in zip(self.items, slots):
            np.add.at(ap, s, it.q)
        return ap

    def objective(self, ap: np.ndarray) -> float:
        if np.any(ap > self.cap + EPS):
            return math.inf
        total = float(ap @ self.linear)
        for d in self.demand:
            total += d.rate * max(d.prev, float(ap[d.mask].max()))
        return total

    def objective_many(self, aps: np.ndarray) -> np.ndarray:
        """Objective of each row of a (n, K) stack of profiles."""
        total = aps @ self.linear
        for d in self.demand:
            total = total + d.rate * np.maximum(d.prev, aps[:, d.mask].max(axis=1))
        bad = np.any(aps > self.cap + EPS, axis=1)
        return np.where(bad, np.inf, total)

    def secondary(self, ap: np.ndarray) -> float:
        """Leveling potential used to break ties between equal objectives."""
        total = 0.0
        for d in self.demand:
            sub = ap[d.mask]
            total += d.rate * float(sub @ sub)
        if not self.demand:
            total = float(ap @ ap)
        return total


def build_items(sessions: Sequence[ChargingSession], t_start: int = 0,
                t_end: int = SLOTS_PER_DAY - 1) -> tuple[np.ndarray, list[Item]]:
    """Split sessions into fixed load and movable items for ``[t_start, t_end]``."""
    fixed = np.zeros(SLOTS_PER_DAY)
    items = []
    for i, s in enumerate(sessions):
        movable = [j for j, t in enumerate(s.original_slots)
                   if is_movable_block(s, t, t_start, t_end)]
        pinned = [j for j in range(s.n_blocks) if j not in set(movable)]
        for j in pinned:
            fixed[s.original_slots[j]] += s.blocks[j]
        if not movable:
            continue
        lo = max(s.arrival_slot, t_start)
        hi = min(s.departure_slot, t_end)
        idx = np.array(movable, dtype=int)
        items.append(Item(
            i, s.session_id, np.array([s.blocks[j] for j in movable]), idx, lo, hi,
            np.array([s.original_slots[j] for j in movable], dtype=int),
        ))
    return fixed, items


def to_schedule(sessions: Sequence[ChargingSession], items: Sequence[Item],
                slots: Sequence[np.ndarray], t_start: int = 0,
                t_end: int = SLOTS_PER_DAY - 1) -> Schedule:
    assigned = {s.session_id: list(s.original_slots) for s in sessions}
    for it, sl in zip(items, slots):
        row = assigned[it.session_id]
        for j, t in zip(it.block_index, sl):
            row[j] = int(t)
    return Schedule({k: tuple(v) for k, v in assigned.items()}, t_start, t_end)


@dataclass(frozen=True)
class SolveResult:
    schedule: Schedule
    objective: float
    lower_bound: float
    status: str
    solver: str = "heuristic"
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")

    @property
    def gap(self) -> float:
        return relative_gap(self.objective, self.lower_bound)

    def to_json(self, schedule_ref: str | None = None) -> dict:
        return {
            "objective": self.objective,
            "lower_bound": self.lower_bound,
            "gap": self.gap,
            "status": self.status,
            "solver": self.solver,
            "schedule": schedule_ref,
            "stats": self.stats,
        }


def relative_gap(objective: float, lower_bound: float) -> float:
    if not math.isfinite(objective):
        return math.inf
    return max(0.0, (objective - lower_bound) / max(abs(objective), EPS))
