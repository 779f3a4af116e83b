"""Discrete time grid, movement requests and step-shaped allocation encoding.

An allocation of movement ``i`` to interval ``s`` is encoded as the binary row
``Y[i, t] = 1`` iff ``t <= s``, i.e. ``(1, ..., 1, 0, ..., 0)`` with the last
one at ``s``.  Column ``T`` is implicitly zero, so ``Y[i, t] - Y[i, t + 1]``
is the indicator that movement ``i`` happens at ``t``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import SlotOutOfRange


@dataclass(frozen=True)
class TimeGrid:
    """``T`` intervals of ``dt_minutes`` each, starting at clock minute ``start_minute``."""

    T: int
    dt_minutes: float = 1.0
    start_minute: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.dt_minutes <= 0:
            raise ValueError("dt_minutes must be positive")

    @property
    def dt_hours(self) -> float:
        return self.dt_minutes / 60.0

    def slot_of_minute(self, minute: float) -> int:
        """Interval index containing clock minute ``minute`` (floor division)."""
        slot = math.floor((minute - self.start_minute) / self.dt_minutes)
        if not 0 <= slot < self.T:
            raise SlotOutOfRange(f"clock minute {minute} falls outside the grid (slot {slot})")
        return slot

    def slot_of(self, hhmm: str) -> int:
        return self.slot_of_minute(parse_hhmm(hhmm))

    def minute_of_slot(self, slot: int) -> float:
        return self.start_minute + slot * self.dt_minutes

    def clock(self, slot: int) -> str:
        return format_hhmm(self.minute_of_slot(slot))

    def intervals(self, minutes: float) -> int:
        """Smallest interval count covering ``minutes``."""
        return int(math.ceil(minutes / self.dt_minutes - 1e-9))


def parse_hhmm(text: str) -> int:
    text = text.strip()
    if ":" in text:
        hh, mm = text.split(":", 1)
    elif text.isdigit() and len(text) in (3, 4):
        hh, mm = text[:-2], text[-2:]
    else:
        raise ValueError(f"bad clock time {text!r}")
    hours, minutes = int(hh), int(mm)
    if not (0 <= hours <= 24 and 0 <= minutes < 60):
        raise ValueError(f"bad clock time {text!r}")
    return hours * 60 + minutes


def format_hhmm(minute: float) -> str:
    m = int(round(minute))
    return f"{m // 60:02d}:{m % 60:02d}"


class MovementKind(str, enum.Enum):
    ARRIVAL = "A"
    DEPARTURE = "D"


@dataclass(frozen=True)
class Movement:
    id: str
    kind: MovementKind
    airline: str
    requested_slot: int


@dataclass(frozen=True)
class HeaDemand:
    energy_wh: float
    rate_cap_w: float

    def __post_init__(self):
        if self.energy_wh <= 0 or self.rate_cap_w <= 0:
            raise ValueError("HEA demand needs positive energy and rate cap")


@dataclass(frozen=True)
class Connection:
    """Arrival ``arrival`` and departure ``departure`` served by one aircraft.

    ``min_connect`` is the connecting-time floor in intervals.
    """

    id: str
    arrival: str
    departure: str
    min_connect: int = 0
    hea: HeaDemand | None = None
    airline: str = ""

    def __post_init__(self):
        if self.min_connect < 0:
            raise ValueError("min_connect must be >= 0")

    @property
    def is_hea(self) -> bool:
        return self.hea is not None

    def conventional(self) -> "Connection":
        return Connection(self.id, self.arrival, self.departure, self.min_connect, None, self.airline)


@dataclass(frozen=True)
class Schedule:
    """Movements and connections on a common grid."""

    grid: TimeGrid
    movements: tuple[Movement, ...]
    connections: tuple[Connection, ...] = ()
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {}
        for k, mv in enumerate(self.movements):
            if mv.id in index:
                raise ValueError(f"duplicate movement id {mv.id!r}")
            if not 0 <= mv.requested_slot < self.grid.T:
                raise SlotOutOfRange(f"movement {mv.id!r} requests slot {mv.requested_slot}")
            index[mv.id] = k
        object.__setattr__(self, "_index", index)
        for c in self.connections:
            a, d = index.get(c.arrival), index.get(c.departure)
            if a is None or d is None:
                raise ValueError(f"connection {c.id!r} references an unknown movement")
            if self.movements[a].kind != MovementKind.ARRIVAL or self.movements[d].kind != MovementKind.DEPARTURE:
                raise ValueError(f"connection {c.id!r} must pair an arrival with a departure")

    def position(self, movement_id: str) -> int:
        return self._index[movement_id]

    def movement(self, movement_id: str) -> Movement:
        return self.movements[self._index[movement_id]]

    @property
    def hea_connections(self) -> tuple[Connection, ...]:
        return tuple(c for c in self.connections if c.is_hea)

    def requested(self) -> dict[str, int]:
        return {m.id: m.requested_slot for m in self.movements}

    def with_connections(self, connections: Iterable[Connection]) -> "Schedule":
        return Schedule(self.grid, self.movements, tuple(connections))

    def airlines(self) -> list[str]:
        return sorted({m.airline for m in self.movements})


class AllocationMatrix:
    """Binary step matrix ``Y`` with rows in movement order."""

    def __init__(self, ids: Sequence[str], Y: np.ndarray):
        Y = np.asarray(Y)
        if Y.ndim != 2 or Y.shape[0] != len(ids):
            raise ValueError("Y must have one row per movement id")
        if Y.size and not np.isin(Y, (0, 1)).all():
            raise ValueError("Y entries must be 0 or 1")
        if Y.size and (Y[:, 0] != 1).any():
            raise ValueError("first interval must be covered (Y[:, 0] == 1)")
        if Y.shape[1] > 1 and (np.diff(Y.astype(np.int8), axis=1) > 0).any():
            raise ValueError("rows must be non-increasing in t")
        self.ids = tuple(ids)
        self.Y = Y.astype(np.int8)
        self._row = {m: k for k, m in enumerate(self.ids)}

    @property
    def T(self) -> int:
        return self.Y.shape[1]

    def row(self, movement_id: str) -> np.ndarray:
        return self.Y[self._row[movement_id]]

    def slot(self, movement_id: str) -> int:
        return int(self.row(movement_id).sum()) - 1

    def slots(self) -> dict[str, int]:
        return dict(zip(self.ids, (self.Y.sum(axis=1) - 1).tolist()))

    def events(self) -> np.ndarray:
        """``Y[:, t] - Y[:, t+1]`` with ``Y[:, T] := 0``."""
        padded = np.concatenate([self.Y, np.zeros((self.Y.shape[0], 1), np.int8)], axis=1)
        return padded[:, :-1] - padded[:, 1:]


def encode_allocation(slots: Mapping[str, int], T: int) -> AllocationMatrix:
    ids = list(slots)
    Y = np.zeros((len(ids), T), dtype=np.int8)
    for k, m in enumerate(ids):
        s = slots[m]
        if not 0 <= s < T:
            raise SlotOutOfRange(f"slot {s} for {m!r} outside [0, {T - 1}]")
        Y[k, : s + 1] = 1
    return AllocationMatrix(ids, Y)


def request_steps(requested: int, T: int) -> np.ndarray:
    return (np.arange(T) <= requested).astype(np.int8)


@dataclass(frozen=True)
class Displacement:
    late: int
    early: int

    @property
    def total(self) -> int:
        return self.late + self.early


def displacement(requested: int, allocated: int) -> Displacement:
    return Displacement(max(allocated - requested, 0), max(requested - allocated, 0))


def displacement_from_steps(A: np.ndarray, Y: np.ndarray) -> Displacement:
    """Summation form over step encodings of request ``A`` and allocation ``Y``."""
    A = np.asarray(A, dtype=np.int64)
    Y = np.asarray(Y, dtype=np.int64)
    return Displacement(int(((1 - A) * Y).sum()), int((A * (1 - Y)).sum()))


@dataclass(frozen=True)
class CapacityViolation:
    start: int
    end: int
    count: int


def window_counts(alloc: AllocationMatrix, L: int) -> np.ndarray:
    """Movements allocated in ``[t, min(t + L, T - 1)]`` for every ``t``."""
    if L < 1:
        raise ValueError("L must be >= 1")
    per_slot = alloc.events().sum(axis=0)
    csum = np.concatenate([[0], np.cumsum(per_slot)])
    T = alloc.T
    ends = np.minimum(np.arange(T) + L, T - 1)
    return csum[ends + 1] - csum[np.arange(T)]


def check_capacity(alloc: AllocationMatrix, R: int, L: int) -> list[CapacityViolation]:
    if R < 0:
        raise ValueError("R must be >= 0")
    counts = window_counts(alloc, L)
    T = alloc.T
    return [CapacityViolation(t, min(t + L, T - 1), int(c))
            for t, c in enumerate(counts) if c > R]


def check_connect(alloc: AllocationMatrix, conn: Connection) -> bool:
    gap = int((alloc.row(conn.departure).astype(np.int64) - alloc.row(conn.arrival)).sum())
    return gap >= conn.min_connect


def dwell_window(arrival_slot: int, departure_slot: int) -> tuple[int, int]:
    """Charging intervals ``(first, last)`` for an aircraft on the ground.

    These are the ``t`` with ``Y_dep[t] - Y_arr[t] = 1``, i.e. ``arrival < t <= departure``.
    """
    return arrival_slot + 1, departure_slot
