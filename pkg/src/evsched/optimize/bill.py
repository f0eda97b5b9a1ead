"""Monthly TOU bill minimization with running demand maxima.

Days are solved in calendar order.  Day ``d`` minimizes its energy charge
plus ``sum_h DR_h * max(AP_max_h(d-1), peak_h(d))``: demand already set
earlier in the month is sunk, so load only pays a demand rate for the kW it
adds above the running maximum.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..schedule import Schedule, aggregate_power, baseline_schedule
from ..tariff import (BillBreakdown, BillingState, Month, TariffSchedule, monthly_bill,
                      update_demand_state)
from ..timegrid import SLOT_HOURS, SLOTS_PER_DAY, ChargingSession
from .problem import DemandTerm, SlotProblem, SolveResult, SolverConfig, build_items
from .solve import solve


def bill_problem(sessions: Sequence[ChargingSession], state: BillingState,
                 tariff: TariffSchedule, day: dt.date, t_start: int = 0,
                 t_end: int = SLOTS_PER_DAY - 1) -> SlotProblem:
    fixed, items = build_items(sessions, t_start, t_end)
    terms = [DemandTerm(p.name, p.mask, p.demand_rate, state.max_for(p.name))
             for p in tariff.demand_periods(day)]
    return SlotProblem(fixed, items, terms, tariff.energy_rates(day) * SLOT_HOURS)


def _day_of(sessions, day):
    days = {s.date for s in sessions}
    if day is None:
        if len(days) != 1:
            raise ValueError("sessions span several days; pass day= explicitly")
        return days.pop()
    if days - {day}:
        raise ValueError(f"sessions from {sorted(days - {day})} passed for {day}")
    return day


def _one_vap(sessions):
    if len({s.vap_id for s in sessions}) > 1:
        raise ValueError("sessions from several VAPs cannot share one bill")


def optimize_day_bill(sessions: Sequence[ChargingSession], state: BillingState,
                      tariff: TariffSchedule, config: SolverConfig = SolverConfig(),
                      day: dt.date | None = None, t_start: int = 0,
                      t_end: int = SLOTS_PER_DAY - 1) -> tuple[SolveResult, BillingState]:
    """Schedule one day's sessions and thread the billing state forward."""
    _one_vap(sessions)
    day = _day_of(sessions, day)
    problem = bill_problem(sessions, state, tariff, day, t_start, t_end)
    baseline_obj = problem.objective(problem.load([it.initial for it in problem.items]))
    result = solve(problem, sessions, config, t_start, t_end)
    if result.objective > baseline_obj + 1e-9 * max(1.0, baseline_obj):
        # exhaustive search cannot lose to the baseline; the local search starts from it
        raise RuntimeError("optimizer returned a schedule worse than the baseline")
    result.stats["baseline_objective"] = baseline_obj
    ap = aggregate_power(result.schedule, sessions).ap
    return result, update_demand_state(state, ap, day, tariff)


@dataclass
class MonthBillResult:
    month: Month
    bill: BillBreakdown
    baseline_bill: BillBreakdown
    schedules: dict[dt.date, Schedule] = field(default_factory=dict)
    results: dict[dt.date, SolveResult] = field(default_factory=dict)
    baseline_profiles: np.ndarray | None = None
    profiles: np.ndarray | None = None
    states: list[BillingState] = field(default_factory=list)
    n_sessions: int = 0

    @property
    def savings(self) -> float:
        return self.baseline_bill.total - self.bill.total


def optimize_month_bill(sessions_by_day: Mapping[dt.date, Sequence[ChargingSession]],
                        month: Month | tuple[int, int], tariff: TariffSchedule,
                        config: SolverConfig = SolverConfig(), t_start: int = 0,
                        t_end: int = SLOTS_PER_DAY - 1) -> MonthBillResult:
    """Optimize every day of ``month`` in order; days without sessions carry no load."""
    month = Month(*month)
    days = month.days()
    stray = [d for d in sessions_by_day if Month.of(d) != month]
    if stray:
        raise ValueError(f"sessions outside {month}: {stray[:3]}")
    all_sessions = [s for d in days for s in sessions_by_day.get(d, ())]
    _one_vap(all_sessions)
    state = BillingState(month)
    out = MonthBillResult(month, None, None)
    base_aps, opt_aps = [], []
    for day in days:
        todays = list(sessions_by_day.get(day, ()))
        result, state = optimize_day_bill(todays, state, tariff, config, day, t_start, t_end)
        out.results[day] = result
        out.schedules[day] = result.schedule
        out.states.append(state)
        opt_aps.append(aggregate_power(result.schedule, todays, check=False).ap)
        base_aps.append(aggregate_power(baseline_schedule(todays, t_start, t_end), todays).ap)
    out.baseline_profiles = np.array(base_aps)
    out.profiles = np.array(opt_aps)
    out.bill = monthly_bill(opt_aps, month, tariff)
    out.baseline_bill = monthly_bill(base_aps, month, tariff)
    out.n_sessions = sum(1 for s in all_sessions if s.movable)
    return out
