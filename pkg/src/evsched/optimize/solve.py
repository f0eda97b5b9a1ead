from __future__ import annotations

import logging
import math
from typing import Sequence

from ..timegrid import ChargingSession
from .exact import solve_exact as _exact
from .heuristic import solve_heuristic as _heuristic
from .problem import (InstanceTooLargeError, SlotProblem, SolveResult, SolverConfig,
                      to_schedule)

log = logging.getLogger(__name__)


def solve_exact(problem: SlotProblem, sessions: Sequence[ChargingSession],
                config: SolverConfig = SolverConfig(), t_start: int = 0,
                t_end: int = 95) -> SolveResult:
    slots, obj, stats = _exact(problem, config.exact_threshold)
    if slots is None:
        raise ValueError("instance has no feasible schedule")
    return SolveResult(to_schedule(sessions, problem.items, slots, t_start, t_end),
                       obj, obj, "optimal", "exact", stats)


def solve_heuristic(problem: SlotProblem, sessions: Sequence[ChargingSession],
                    config: SolverConfig = SolverConfig(), t_start: int = 0,
                    t_end: int = 95, init=None) -> SolveResult:
    slots, obj, lb, status, stats = _heuristic(
        problem, config.relative_gap, config.time_limit, init=init)
    if not math.isfinite(obj):
        raise ValueError("heuristic found no feasible schedule")
    return SolveResult(to_schedule(sessions, problem.items, slots, t_start, t_end),
                       obj, lb, status, "heuristic", stats)


def solve(problem: SlotProblem, sessions: Sequence[ChargingSession],
          config: SolverConfig = SolverConfig(), t_start: int = 0, t_end: int = 95,
          init=None) -> SolveResult:
    """Dispatch on ``config.mode``."""
    if config.mode == "exact":
        return solve_exact(problem, sessions, config, t_start, t_end)
    if config.mode == "auto":
        try:
            if problem.n_candidates <= config.exact_threshold:
                return solve_exact(problem, sessions, config, t_start, t_end)
        except InstanceTooLargeError:
            pass
    return solve_heuristic(problem, sessions, config, t_start, t_end, init=init)
