"""Day discretization, charging-session records and aggregation points."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SLOTS_PER_DAY = 96
SLOT_MINUTES = 15
SLOT_HOURS = 0.25


class ConfigurationError(ValueError):
    """Raised for malformed tariff periods, clock ranges or run settings."""


@dataclass(frozen=True)
class TimeGrid:
    slots_per_day: int = SLOTS_PER_DAY
    slot_minutes: int = SLOT_MINUTES

    def __post_init__(self):
        if self.slots_per_day * self.slot_minutes != 1440:
            raise ConfigurationError("slots must tile a 24h day")

    @property
    def slot_hours(self) -> float:
        return self.slot_minutes / 60.0

    def slot_of(self, when: dt.time | dt.datetime) -> int:
        return (when.hour * 60 + when.minute) // self.slot_minutes

    def slot_start(self, slot: int) -> dt.time:
        minutes = slot * self.slot_minutes
        return dt.time(minutes // 60, minutes % 60)


GRID = TimeGrid()


def parse_clock(text: str) -> int:
    """Return minutes since midnight for ``HH:MM``; ``24:00`` is allowed."""
    try:
        hh, mm = text.strip().split(":")
        hours, minutes = int(hh), int(mm)
    except ValueError:
        raise ConfigurationError(f"bad clock time {text!r}") from None
    total = hours * 60 + minutes
    if not (0 <= minutes < 60) or not (0 <= total <= 1440):
        raise ConfigurationError(f"clock time out of range: {text!r}")
    return total


def slot_of_time(clock_time: str | dt.time, *, boundary: bool = False) -> int:
    """Slot index covering ``clock_time``.

    With ``boundary=True`` the time must sit exactly on a 15-minute edge, as
    required for tariff period limits.
    """
    if isinstance(clock_time, dt.time):
        total = clock_time.hour * 60 + clock_time.minute
        if clock_time.second or clock_time.microsecond:
            if boundary:
                raise ConfigurationError(f"{clock_time} is not slot aligned")
    else:
        total = parse_clock(clock_time)
    if total >= 1440 and not boundary:
        raise ConfigurationError("clock time must be before 24:00")
    if boundary and total % SLOT_MINUTES:
        raise ConfigurationError(f"{clock_time} is not a 15-minute boundary")
    return total // SLOT_MINUTES


def slot_set_of_range(text: str) -> frozenset[int]:
    """Slots covered by ``"HH:MM-HH:MM"`` (half open, may wrap past midnight)."""
    try:
        start_txt, end_txt = text.split("-")
    except ValueError:
        raise ConfigurationError(f"bad clock range {text!r}") from None
    start = slot_of_time(start_txt, boundary=True)
    end = slot_of_time(end_txt, boundary=True)
    if start == end and start not in (0, SLOTS_PER_DAY):
        raise ConfigurationError(f"empty clock range {text!r}")
    if start < end:
        return frozenset(range(start, end))
    if start == end:
        return frozenset(range(SLOTS_PER_DAY))
    return frozenset(range(start, SLOTS_PER_DAY)) | frozenset(range(0, end))


def extract_charge_blocks(raw_power: Sequence[float], threshold: float = 0.0):
    """Split a power series into its non-zero charge blocks.

    Returns ``(Q, slots)``: the strictly positive entries in index order and
    the indices they came from.  Entries at or below ``threshold`` count as
    idle.
    """
    p = np.asarray(raw_power, dtype=float)
    if p.ndim != 1:
        raise ValueError("raw_power must be one-dimensional")
    if np.any(p < 0):
        raise ValueError("power values must be non-negative")
    idx = np.flatnonzero(p > threshold)
    return p[idx].copy(), idx.astype(int)


@dataclass(frozen=True)
class ChargingSession:
    """One plug-in to departure record on a single day.

    ``blocks`` and ``original_slots`` hold the measured non-zero charge blocks
    in time order.  ``movable=False`` marks load that is carried as fixed
    (e.g. the after-midnight tail of a session that began the day before);
    such records point back to the originating session through ``source_id``.
    """

    session_id: str
    evse_id: str
    vap_id: str
    date: dt.date
    arrival_slot: int
    departure_slot: int
    blocks: tuple[float, ...]
    original_slots: tuple[int, ...]
    movable: bool = True
    source_id: str | None = None

    def __post_init__(self):
        t_a, t_d = self.arrival_slot, self.departure_slot
        if not (0 <= t_a <= t_d < SLOTS_PER_DAY):
            raise ValueError(
                f"session {self.session_id}: need 0 <= t_a <= t_d < {SLOTS_PER_DAY}, "
                f"got t_a={t_a}, t_d={t_d}"
            )
        if len(self.blocks) != len(self.original_slots):
            raise ValueError(f"session {self.session_id}: blocks/slots length mismatch")
        if any(q <= 0 for q in self.blocks):
            raise ValueError(f"session {self.session_id}: charge blocks must be positive")
        prev = t_a - 1
        for s in self.original_slots:
            if s <= prev or s > t_d:
                raise ValueError(
                    f"session {self.session_id}: slots must increase inside [t_a, t_d]"
                )
            prev = s

    @classmethod
    def from_power(cls, session_id, evse_id, vap_id, date, arrival_slot,
                   departure_slot, raw_power, threshold=0.0, movable=True, source_id=None):
        p = np.asarray(raw_power, dtype=float)
        if len(p) != SLOTS_PER_DAY:
            raise ValueError(f"raw_power must have {SLOTS_PER_DAY} entries")
        outside = np.ones(SLOTS_PER_DAY, dtype=bool)
        outside[arrival_slot:departure_slot + 1] = False
        if np.any(p[outside] > threshold):
            raise ValueError(f"session {session_id}: power recorded outside [t_a, t_d]")
        q, slots = extract_charge_blocks(p, threshold)
        return cls(
            str(session_id), str(evse_id), str(vap_id), date, int(arrival_slot),
            int(departure_slot), tuple(float(v) for v in q),
            tuple(int(s) for s in slots), movable, source_id,
        )

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def duration_slots(self) -> int:
        return self.departure_slot - self.arrival_slot + 1

    @property
    def raw_power(self) -> np.ndarray:
        p = np.zeros(SLOTS_PER_DAY)
        p[list(self.original_slots)] = self.blocks
        return p

    @property
    def energy_kwh(self) -> float:
        return session_energy(self)


def session_energy(session: ChargingSession) -> float:
    return sum(session.blocks) * SLOT_HOURS


@dataclass(frozen=True)
class Vap:
    """Virtual aggregation point: EVSEs pooled behind one meter."""

    vap_id: str
    zip_codes: frozenset[str] = field(default_factory=frozenset)
    evse_ids: frozenset[str] = field(default_factory=frozenset)


def vaps_from_sessions(sessions: Iterable[ChargingSession]) -> dict[str, Vap]:
    """Build the VAP map implied by session records.

    Raises if an EVSE shows up under two VAPs.
    """
    owner: dict[str, str] = {}
    members: dict[str, set[str]] = {}
    for s in sessions:
        seen = owner.setdefault(s.evse_id, s.vap_id)
        if seen != s.vap_id:
            raise ValueError(f"EVSE {s.evse_id} belongs to both {seen} and {s.vap_id}")
        members.setdefault(s.vap_id, set()).add(s.evse_id)
    return {v: Vap(v, frozenset(), frozenset(e)) for v, e in sorted(members.items())}
