"""scikit-learn style wrappers around the two optimizers.

``fit`` takes a list of :class:`ChargingSession` for one VAP and solves it;
``transform`` returns the same sessions with their charge blocks moved to
the optimized slots.  Hyperparameters mirror :class:`SolverConfig`, so the
estimators work with ``get_params``/``set_params``/``clone``.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import replace
from typing import Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .ingestion import group_sessions
from .optimize.bill import MonthBillResult, optimize_month_bill
from .optimize.peak import DEFAULT_PEAK_PERIOD, PeakResult, optimize_peak_two_stage
from .optimize.problem import SolverConfig
from .schedule import Schedule, validate_schedule
from .tariff import Month, TariffSchedule, e19
from .timegrid import SLOTS_PER_DAY, ChargingSession


def check_sessions(X, *, single_vap: bool = True) -> list[ChargingSession]:
    """Validate estimator input: a sequence of sessions, optionally one VAP only."""
    if isinstance(X, ChargingSession):
        raise TypeError("expected a sequence of ChargingSession, got a single session")
    sessions = list(X)
    bad = [type(s).__name__ for s in sessions if not isinstance(s, ChargingSession)]
    if bad:
        raise TypeError(f"expected ChargingSession items, got {sorted(set(bad))}")
    ids = [s.session_id for s in sessions]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate session_id in input")
    if single_vap and len({s.vap_id for s in sessions}) > 1:
        raise ValueError("input mixes several VAPs; fit one estimator per VAP")
    return sessions


def check_window(t_start: int, t_end: int) -> None:
    if not 0 <= t_start <= t_end < SLOTS_PER_DAY:
        raise ValueError(f"need 0 <= t_start <= t_end < {SLOTS_PER_DAY}")


def apply_schedule(sessions: Sequence[ChargingSession], schedule: Schedule
                   ) -> list[ChargingSession]:
    """Sessions with ``original_slots`` replaced by the scheduled slots."""
    violations = validate_schedule(schedule, sessions)
    if violations:
        raise ValueError(f"schedule is infeasible: {violations[0]}")
    return [replace(s, original_slots=schedule.slots_for(s.session_id)) for s in sessions]


class _ScheduleEstimator(TransformerMixin, BaseEstimator):
    def _config(self) -> SolverConfig:
        check_window(self.t_start, self.t_end)
        return SolverConfig(mode=self.mode, relative_gap=self.relative_gap,
                            exact_threshold=self.exact_threshold,
                            time_limit=self.time_limit, seed=self.seed)

    def transform(self, X):
        check_is_fitted(self, "schedules_")
        sessions = check_sessions(X)
        out = []
        for s in sessions:
            schedule = self.schedules_.get(s.date)
            if schedule is None or s.session_id not in schedule.assignments:
                raise ValueError(f"session {s.session_id} was not part of the fitted data")
            out.extend(apply_schedule([s], Schedule(
                {s.session_id: schedule.slots_for(s.session_id)},
                schedule.t_start, schedule.t_end)))
        return out


class BillOptimizer(_ScheduleEstimator):
    """Monthly bill minimization for one VAP.

    After ``fit``: ``results_`` maps each month to its :class:`MonthBillResult`,
    ``schedules_`` maps each day to its optimized schedule and ``savings_`` is
    the summed bill reduction in dollars.
    """

    def __init__(self, tariff: TariffSchedule | None = None, mode: str = "auto",
                 relative_gap: float = 0.05, exact_threshold: int = 200_000,
                 time_limit: float | None = 60.0, seed: int = 0, t_start: int = 0,
                 t_end: int = SLOTS_PER_DAY - 1):
        self.tariff = tariff
        self.mode = mode
        self.relative_gap = relative_gap
        self.exact_threshold = exact_threshold
        self.time_limit = time_limit
        self.seed = seed
        self.t_start = t_start
        self.t_end = t_end

    def fit(self, X, y=None):
        sessions = check_sessions(X)
        config = self._config()
        tariff = self.tariff if self.tariff is not None else e19()
        self.results_: dict[Month, MonthBillResult] = {}
        self.schedules_: dict[dt.date, Schedule] = {}
        for days in group_sessions(sessions).values():
            for month in sorted({Month.of(d) for d in days}):
                by_day = {d: ss for d, ss in days.items() if Month.of(d) == month}
                res = optimize_month_bill(by_day, month, tariff, config,
                                          self.t_start, self.t_end)
                self.results_[month] = res
                self.schedules_.update(res.schedules)
        self.savings_ = sum(r.savings for r in self.results_.values())
        return self


class PeakShaver(_ScheduleEstimator):
    """Two-stage peak shaving, one solve per day.

    After ``fit``: ``results_`` maps each day to its :class:`PeakResult` and
    ``schedules_`` to the stage-2 schedule.
    """

    def __init__(self, peak_period=DEFAULT_PEAK_PERIOD, mode: str = "auto",
                 relative_gap: float = 0.05, exact_threshold: int = 200_000,
                 time_limit: float | None = 60.0, seed: int = 0, t_start: int = 0,
                 t_end: int = SLOTS_PER_DAY - 1):
        self.peak_period = peak_period
        self.mode = mode
        self.relative_gap = relative_gap
        self.exact_threshold = exact_threshold
        self.time_limit = time_limit
        self.seed = seed
        self.t_start = t_start
        self.t_end = t_end

    def fit(self, X, y=None):
        sessions = check_sessions(X)
        config = self._config()
        self.results_: dict[dt.date, PeakResult] = {}
        for days in group_sessions(sessions).values():
            for day, ss in days.items():
                self.results_[day] = optimize_peak_two_stage(
                    ss, self.peak_period, config, self.t_start, self.t_end)
        self.schedules_ = {d: r.schedule for d, r in self.results_.items()}
        return self
