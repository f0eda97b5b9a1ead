import datetime as dt
import os
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def summer_day() -> dt.date:
    return dt.date(2013, 7, 1)


def make_session(sid="s", t_a=36, t_d=40, blocks=(3.3,), slots=None, day=dt.date(2013, 7, 1),
                 evse="E1", vap="V", movable=True):
    from evsched.timegrid import ChargingSession
    if slots is None:
        slots = tuple(range(t_a, t_a + len(blocks)))
    return ChargingSession(sid, evse, vap, day, t_a, t_d, tuple(blocks), tuple(slots),
                           movable=movable)
