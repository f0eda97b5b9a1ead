import datetime as dt

import numpy as np
import pytest

import oracle
from conftest import make_session
from evsched.ingestion import SyntheticConfig, generate_synthetic, group_sessions
from evsched.optimize.bill import bill_problem, optimize_day_bill, optimize_month_bill
from evsched.optimize.problem import SolverConfig
from evsched.schedule import aggregate_power, baseline_schedule, validate_schedule
from evsched.tariff import BillingState, Month, e19, energy_charge

DAY = dt.date(2013, 7, 1)
JULY = Month(2013, 7)
EXACT = SolverConfig(mode="exact")
HEUR = SolverConfig(mode="heuristic")


def test_part_peak_beats_peak_with_empty_state():
    # one 4 kW block free to sit anywhere from 8:30AM (part-peak) to 12:30PM (peak)
    s = make_session("a", t_a=34, t_d=50, blocks=(4.0,), slots=(50,))
    for cfg in (EXACT, HEUR):
        res, state = optimize_day_bill([s], BillingState(JULY), e19(), cfg)
        assert res.schedule.slots_for("a") == (34,)
        # enumerate the two candidates by hand: part-peak 34 vs peak 50
        at34 = 4 * 4.07 + 4 * 12.56 + 4 * 0.25 * 0.11156
        at50 = 4 * 19.71253 + 4 * 12.56 + 4 * 0.25 * 0.16253
        assert at34 < at50
        assert res.objective == pytest.approx(at34, abs=1e-9)
        assert round(4 * 4.07 + 0.11156, 2) == 16.39 and round(4 * 19.71253 + 0.16253, 2) == 79.01
        assert state.ap_max == {"peak": 0.0, "part-peak": 4.0, "anytime": 4.0}


def test_sunk_demand_leaves_energy_rate_to_decide():
    s = make_session("a", t_a=30, t_d=50, blocks=(4.0,), slots=(50,))
    state = BillingState(JULY, {"part-peak": 10.0, "anytime": 10.0})
    res, new_state = optimize_day_bill([s], state, e19(), EXACT)
    # demand is sunk in off-peak and part-peak slots; off-peak 30..33 has the lowest ER
    assert res.schedule.slots_for("a") == (30,)
    assert res.objective == pytest.approx(10 * 4.07 + 10 * 12.56 + 0.07818, abs=1e-9)
    assert new_state.ap_max["part-peak"] == 10.0


def test_sunk_peak_demand_prefers_peak_slot():
    s = make_session("a", t_a=44, t_d=50, blocks=(4.0,), slots=(44,))
    state = BillingState(JULY, {"peak": 10.0, "anytime": 10.0})
    res, _ = optimize_day_bill([s], state, e19(), EXACT)
    assert res.schedule.slots_for("a") == (48,)


def test_empty_day():
    state = BillingState(JULY, {"peak": 3.0})
    res, new_state = optimize_day_bill([], state, e19(), EXACT, day=DAY)
    assert res.objective == pytest.approx(3.0 * 19.71253)
    assert new_state.ap_max["peak"] == 3.0 and new_state.energy_charges == 0.0
    res, _ = optimize_day_bill([], BillingState(JULY), e19(), HEUR, day=DAY)
    assert res.objective == 0.0


def test_day_bill_checks_inputs():
    a = make_session("a", day=DAY)
    b = make_session("b", day=dt.date(2013, 7, 2))
    with pytest.raises(ValueError):
        optimize_day_bill([a, b], BillingState(JULY), e19())
    with pytest.raises(ValueError):
        optimize_day_bill([a, make_session("c", vap="other")], BillingState(JULY), e19())
    with pytest.raises(ValueError):
        optimize_day_bill([a], BillingState(Month(2013, 8)), e19())


def test_day_bill_never_worse_than_baseline(fixtures):
    from evsched.ingestion import parse_sessions
    sessions = parse_sessions(fixtures / "tiny.csv")
    for prev in ({}, {"peak": 30.0, "part-peak": 5.0, "anytime": 12.0}):
        state = BillingState(JULY, prev)
        res, _ = optimize_day_bill(sessions, state, e19(), HEUR)
        assert res.objective <= res.stats["baseline_objective"] + 1e-9
        assert validate_schedule(res.schedule, sessions) == []


def test_state_threading_matches_tariff_update():
    rng = np.random.default_rng(0)
    sessions = generate_synthetic(SyntheticConfig(n_sessions=120, n_days=31, seed=1))
    month = optimize_month_bill(group_sessions(sessions)["SYN"], JULY, e19(), HEUR)
    prev = {}
    for state in month.states:
        for name, value in state.ap_max.items():
            assert value >= prev.get(name, 0.0)
        prev = dict(state.ap_max)
    assert month.bill.peaks == month.states[-1].ap_max
    assert month.bill.energy == pytest.approx(month.states[-1].energy_charges)
    assert month.bill.total <= month.baseline_bill.total + 1e-9
    # the optimized profiles re-billed by the oracle give the same numbers
    ec, dc, total = oracle.month_bill(list(month.profiles), JULY.days())
    assert month.bill.total == pytest.approx(total, rel=1e-12)
    ec, dc, total = oracle.month_bill(list(month.baseline_profiles), JULY.days())
    assert month.baseline_bill.total == pytest.approx(total, rel=1e-12)
    assert rng is not None


def test_month_of_empty_days():
    res = optimize_month_bill({}, JULY, e19(), HEUR)
    assert res.bill.total == 0.0 and res.baseline_bill.total == 0.0
    assert res.profiles.shape == (31, 96)


def test_zero_flexibility_month_is_unchanged():
    days = {}
    for d in (1, 5, 17):
        day = dt.date(2013, 7, d)
        days[day] = [make_session(f"x{d}", t_a=40, t_d=45, blocks=(3.3,) * 6,
                                  slots=tuple(range(40, 46)), day=day)]
    res = optimize_month_bill(days, JULY, e19(), EXACT)
    assert res.bill.total == res.baseline_bill.total
    assert res.bill.as_dict() == res.baseline_bill.as_dict()


def test_month_rejects_stray_days():
    day = dt.date(2013, 8, 1)
    with pytest.raises(ValueError):
        optimize_month_bill({day: [make_session(day=day)]}, JULY, e19())


def test_bill_problem_prices():
    s = make_session("a", t_a=34, t_d=50, blocks=(4.0,))
    p = bill_problem([s], BillingState(JULY), e19(), DAY)
    ap = aggregate_power(baseline_schedule([s]), [s]).ap
    expected = energy_charge(ap, DAY, e19()) + 4 * 4.07 + 4 * 12.56
    assert p.objective(ap) == pytest.approx(expected)
