import datetime as dt

import numpy as np
import pytest

from conftest import make_session
from evsched.timegrid import (GRID, SLOTS_PER_DAY, ChargingSession, ConfigurationError,
                              TimeGrid, extract_charge_blocks, session_energy,
                              slot_of_time, slot_set_of_range, vaps_from_sessions)


def test_grid_constants():
    assert GRID.slots_per_day * GRID.slot_minutes == 1440
    assert GRID.slot_hours == 0.25
    with pytest.raises(ConfigurationError):
        TimeGrid(96, 10)


@pytest.mark.parametrize("clock, slot", [("00:00", 0), ("12:00", 48), ("08:30", 34),
                                         ("23:45", 95), ("21:30", 86)])
def test_slot_of_time(clock, slot):
    assert slot_of_time(clock) == slot
    assert slot_of_time(clock, boundary=True) == slot


def test_slot_of_time_floors_inside_slot():
    assert slot_of_time("09:14") == 36
    assert slot_of_time(dt.time(9, 14, 30)) == 36


@pytest.mark.parametrize("bad", ["09:14", "08:31"])
def test_boundary_must_be_aligned(bad):
    with pytest.raises(ConfigurationError):
        slot_of_time(bad, boundary=True)


@pytest.mark.parametrize("bad", ["24:00", "9", "ab:cd", "10:75", "25:00"])
def test_slot_of_time_rejects(bad):
    with pytest.raises(ConfigurationError):
        slot_of_time(bad)


def test_slot_ranges():
    assert slot_set_of_range("12:00-18:00") == frozenset(range(48, 72))
    assert slot_set_of_range("21:30-08:30") == frozenset(range(86, 96)) | frozenset(range(34))
    assert slot_set_of_range("00:00-24:00") == frozenset(range(96))
    assert len(slot_set_of_range("08:30-21:30")) == 52
    with pytest.raises(ConfigurationError):
        slot_set_of_range("10:00-10:00")
    with pytest.raises(ConfigurationError):
        slot_set_of_range("10:00")


@pytest.mark.parametrize("raw, q, slots", [
    ([0, 3.3, 3.3, 0, 1.1, 0], [3.3, 3.3, 1.1], [1, 2, 4]),
    ([0, 0, 0], [], []),
    ([6.6], [6.6], [0]),
])
def test_extract_charge_blocks(raw, q, slots):
    got_q, got_slots = extract_charge_blocks(raw)
    assert got_q.tolist() == q
    assert got_slots.tolist() == slots


def test_extract_threshold_and_errors():
    q, s = extract_charge_blocks([0.005, 2.0, 0.01], threshold=0.01)
    assert q.tolist() == [2.0] and s.tolist() == [1]
    with pytest.raises(ValueError):
        extract_charge_blocks([1.0, -0.5])
    with pytest.raises(ValueError):
        extract_charge_blocks([[1.0]])


@pytest.mark.parametrize("blocks, energy", [((4.0, 4.0), 2.0), ((), 0.0),
                                            ((3.3, 3.3, 3.3, 1.1), 2.75)])
def test_session_energy(blocks, energy):
    s = make_session(t_a=10, t_d=20, blocks=blocks)
    assert session_energy(s) == pytest.approx(energy, abs=1e-12)
    assert s.energy_kwh == pytest.approx(energy, abs=1e-12)


def test_from_power_round_trip():
    raw = np.zeros(SLOTS_PER_DAY)
    raw[[36, 38, 40]] = [3.3, 3.3, 1.1]
    s = ChargingSession.from_power("a", "e", "v", dt.date(2013, 7, 1), 36, 41, raw)
    assert s.blocks == (3.3, 3.3, 1.1) and s.original_slots == (36, 38, 40)
    assert np.array_equal(s.raw_power, raw)
    assert s.duration_slots == 6 and s.n_blocks == 3


def test_from_power_rejects_power_outside_window():
    raw = np.zeros(SLOTS_PER_DAY)
    raw[30] = 1.0
    with pytest.raises(ValueError):
        ChargingSession.from_power("a", "e", "v", dt.date(2013, 7, 1), 36, 41, raw)
    with pytest.raises(ValueError):
        ChargingSession.from_power("a", "e", "v", dt.date(2013, 7, 1), 36, 41, raw[:10])


@pytest.mark.parametrize("kwargs", [
    dict(t_a=40, t_d=36),
    dict(t_a=36, t_d=96),
    dict(t_a=36, t_d=40, blocks=(1.0, 2.0), slots=(38, 37)),
    dict(t_a=36, t_d=40, blocks=(1.0,), slots=(41,)),
    dict(t_a=36, t_d=40, blocks=(0.0,), slots=(36,)),
    dict(t_a=36, t_d=40, blocks=(1.0, 1.0), slots=(36,)),
])
def test_session_invariants(kwargs):
    with pytest.raises(ValueError):
        make_session(**kwargs)


def test_zero_block_session_is_allowed():
    s = make_session(t_a=10, t_d=12, blocks=())
    assert s.n_blocks == 0 and s.energy_kwh == 0.0


def test_vaps_from_sessions():
    a = make_session("a", evse="E1", vap="V1")
    b = make_session("b", evse="E2", vap="V1")
    c = make_session("c", evse="E3", vap="V2")
    vaps = vaps_from_sessions([a, b, c])
    assert vaps["V1"].evse_ids == {"E1", "E2"} and vaps["V2"].evse_ids == {"E3"}
    with pytest.raises(ValueError):
        vaps_from_sessions([a, make_session("d", evse="E1", vap="V2")])


def test_sessions_are_immutable():
    s = make_session()
    with pytest.raises(Exception):
        s.arrival_slot = 3
