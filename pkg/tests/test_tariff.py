import datetime as dt
import re
from decimal import Decimal

import numpy as np
import pytest

import oracle
from evsched.tariff import (BillingState, Month, demand_charge, describe_slots, e19,
                            energy_charge, load_tariff, monthly_bill, rate_table,
                            tariff_from_dict, update_demand_state)
from evsched.timegrid import ConfigurationError

SUMMER, WINTER = dt.date(2013, 7, 10), dt.date(2013, 1, 10)

# the published table, row by row: (kind, season, $ text, time-period text)
TABLE = [
    ("demand", "summer", "peak", "$19.71253", "12:00PM-6:00PM"),
    ("demand", "summer", "part-peak", "$4.07", "8:30AM-12:00PM & 6:00PM-09:30PM"),
    ("demand", "summer", "anytime", "$12.56", "Any time"),
    ("demand", "winter", "part-peak", "$0.21", "8:30AM-09:30PM"),
    ("demand", "winter", "anytime", "$12.56", "Any time"),
    ("energy", "summer", "peak", "$0.16253", "12:00PM-6:00PM"),
    ("energy", "summer", "part-peak", "$0.11156", "8:30AM-12:00PM & 6:00PM-09:30PM"),
    ("energy", "summer", "off-peak", "$0.07818", "09:30PM-08:30AM"),
    ("energy", "winter", "part-peak", "$0.10479", "08:30AM-09:30PM"),
    ("energy", "winter", "off-peak", "$0.08200", "09:30PM-08:30AM"),
]


def _unpad(text):
    # the table writes some hours with a leading zero ("09:30PM"), some without
    return re.sub(r"\b0(\d:)", r"\1", text)


def test_e19_matches_published_table():
    rows = {(r["kind"], r["season"], r["period"]): r for r in rate_table(e19())}
    assert len(rows) == len(TABLE)
    for kind, season, period, dollars, when in TABLE:
        r = rows[(kind, season, period)]
        assert Decimal(repr(r["rate"])) == Decimal(dollars[1:])
        assert r["time_period"] == _unpad(when)


def test_e19_slot_boundaries():
    t = e19()
    s = t.season_of(SUMMER)
    by = {p.name: p for p in s.periods}
    assert by["peak"].slots == frozenset(range(48, 72))
    assert by["part-peak"].slots == frozenset(range(34, 48)) | frozenset(range(72, 86))
    assert 86 in by["off-peak"].slots and 34 not in by["off-peak"].slots
    assert len(by["anytime"].slots) == 96
    assert [p.name for p in t.demand_periods(WINTER)] == ["part-peak", "anytime"]
    assert describe_slots(by["part-peak"].slots) == "8:30AM-12:00PM & 6:00PM-9:30PM"


def test_seasons():
    t = e19()
    assert t.season_of(dt.date(2013, 5, 1)).name == "summer"
    assert t.season_of(dt.date(2013, 10, 31)).name == "summer"
    assert t.season_of(dt.date(2013, 11, 1)).name == "winter"
    assert t.season_of(dt.date(2016, 2, 29)).name == "winter"


def test_energy_rates_match_oracle():
    for day, season in ((SUMMER, "summer"), (WINTER, "winter")):
        er, _ = oracle.e19_periods(season)
        assert np.array_equal(e19().energy_rates(day), np.array(er))


def test_energy_charge_examples():
    ap = np.zeros(96)
    ap[5] = 4.0
    assert energy_charge(ap, SUMMER, e19()) == pytest.approx(0.07818, abs=1e-12)
    assert energy_charge(np.zeros(96), SUMMER, e19()) == 0.0


def test_winter_flat_day_energy_charge():
    # the 96-slot partition summed longhand: 44 off-peak + 52 part-peak slots
    er, _ = oracle.e19_periods("winter")
    assert er.count(0.082) == 44 and er.count(0.10479) == 52
    hand = 0.25 * (44 * 0.0820 + 52 * 0.10479)
    assert hand == pytest.approx(2.26427, abs=1e-12)
    assert energy_charge(np.ones(96), WINTER, e19()) == pytest.approx(hand, abs=1e-4)


def test_energy_charge_rejects_bad_profiles():
    with pytest.raises(ValueError):
        energy_charge(np.ones(95), SUMMER, e19())
    with pytest.raises(ValueError):
        energy_charge(-np.ones(96), SUMMER, e19())


def test_update_demand_state_examples():
    t = e19()
    state = BillingState(Month(2013, 7), {"peak": 5.0})
    ap = np.zeros(96)
    ap[50] = 7.0
    assert update_demand_state(state, ap, SUMMER, t).ap_max["peak"] == 7.0
    ap[50] = 3.0
    assert update_demand_state(state, ap, SUMMER, t).ap_max["peak"] == 5.0
    ap[50] = 6.6
    fresh = update_demand_state(BillingState(Month(2013, 7)), ap, SUMMER, t)
    assert fresh.ap_max == {"peak": 6.6, "part-peak": 0.0, "anytime": 6.6}
    with pytest.raises(ValueError):
        update_demand_state(state, ap, dt.date(2013, 8, 1), t)


def test_demand_charge_examples():
    t = e19()
    summer = BillingState(Month(2013, 7), {"peak": 10.0, "part-peak": 10.0, "anytime": 10.0})
    per, total = demand_charge(summer, t)
    assert total == pytest.approx(10 * (19.71253 + 4.07 + 12.56), abs=1e-9)
    assert total == pytest.approx(363.4253, abs=1e-4)
    assert demand_charge(BillingState(Month(2013, 7)), t)[1] == 0.0
    winter = BillingState(Month(2013, 1), {"part-peak": 8.0, "anytime": 8.0})
    assert demand_charge(winter, t)[1] == pytest.approx(102.16, abs=1e-4)


def test_monthly_bill_examples():
    t = e19()
    month = Month(2013, 11)
    zero = monthly_bill([np.zeros(96)] * 30, month, t)
    assert zero.total == 0.0
    flat = monthly_bill([np.ones(96)] * 30, month, t)
    ec, dc, total = oracle.month_bill([np.ones(96)] * 30, month.days())
    assert flat.energy == pytest.approx(ec, abs=1e-4)
    assert flat.demand_total == pytest.approx(0.21 + 12.56, abs=1e-12)
    assert flat.total == pytest.approx(total, abs=1e-4)
    assert flat.total == pytest.approx(30 * 2.26427 + 12.77, abs=1e-4)
    with pytest.raises(ValueError):
        monthly_bill([np.zeros(96)] * 29, month, t)


def test_single_nonzero_day_month():
    t = e19()
    aps = [np.zeros(96) for _ in range(31)]
    aps[9][[40, 55]] = [3.0, 5.0]
    bill = monthly_bill(aps, Month(2013, 7), t)
    expected_ec = 0.25 * (3.0 * 0.11156 + 5.0 * 0.16253)
    assert bill.energy == pytest.approx(expected_ec, abs=1e-12)
    assert bill.demand_total == pytest.approx(5 * 19.71253 + 3 * 4.07 + 5 * 12.56, abs=1e-9)


def test_day_permutation_leaves_demand_unchanged():
    rng = np.random.default_rng(1)
    month = Month(2013, 7)
    aps = [rng.uniform(0, 20, 96) * (rng.random(96) < 0.3) for _ in range(31)]
    base = monthly_bill(aps, month, e19())
    for _ in range(3):
        shuffled = [aps[i] for i in rng.permutation(31)]
        other = monthly_bill(shuffled, month, e19())
        assert other.demand == pytest.approx(base.demand, abs=1e-9)
        assert other.energy == pytest.approx(base.energy, rel=1e-12)


def test_scaling_is_linear():
    rng = np.random.default_rng(2)
    aps = [rng.uniform(0, 10, 96) for _ in range(31)]
    base = monthly_bill(aps, Month(2013, 7), e19())
    scaled = monthly_bill([2.5 * a for a in aps], Month(2013, 7), e19())
    assert scaled.total == pytest.approx(2.5 * base.total, rel=1e-12)


def test_custom_tariff(fixtures):
    t = load_tariff(fixtures / "tariff_flat.json")
    day = dt.date(2013, 3, 3)
    ap = np.ones(96)
    assert energy_charge(ap, day, t) == pytest.approx(0.25 * (64 * 0.20 + 32 * 0.05))
    assert [p.name for p in t.demand_periods(day)] == ["day"]


def test_short_form_tariff():
    t = tariff_from_dict({"summer": [{"name": "all", "ranges": ["00:00-24:00"],
                                      "energy_rate": 0.1, "demand_rate": 1.0}],
                          "winter": [{"name": "all", "ranges": ["00:00-24:00"],
                                      "energy_rate": 0.2}]})
    assert t.energy_rates(SUMMER)[0] == 0.1 and t.energy_rates(WINTER)[0] == 0.2
    assert t.demand_periods(WINTER) == ()


@pytest.mark.parametrize("periods", [
    [{"name": "a", "ranges": ["00:00-12:00"], "energy_rate": 0.1}],
    [{"name": "a", "ranges": ["00:00-13:00"], "energy_rate": 0.1},
     {"name": "b", "ranges": ["12:00-24:00"], "energy_rate": 0.1}],
    [{"name": "a", "ranges": ["00:10-24:00"], "energy_rate": 0.1}],
    [{"name": "a", "ranges": ["00:00-24:00"]}],
    [{"name": "a", "ranges": ["00:00-24:00"], "energy_rate": -0.1}],
    [{"ranges": ["00:00-24:00"], "energy_rate": 0.1}],
])
def test_bad_tariffs(periods):
    with pytest.raises(ConfigurationError):
        tariff_from_dict({"seasons": {"all": {"start": "01-01", "end": "12-31",
                                              "periods": periods}}})


def test_season_calendar_must_cover_year():
    p = [{"name": "a", "ranges": ["00:00-24:00"], "energy_rate": 0.1}]
    with pytest.raises(ConfigurationError):
        tariff_from_dict({"seasons": {"a": {"start": "01-01", "end": "06-30", "periods": p}}})
    with pytest.raises(ConfigurationError):
        tariff_from_dict({"seasons": {"a": {"start": "01-01", "end": "12-31", "periods": p},
                                      "b": {"start": "06-01", "end": "06-30", "periods": p}}})
