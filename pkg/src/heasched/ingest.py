"""Schedule, flight-record and scenario-config file handling, plus synthetic schedules.

Schedule CSV (one row per movement)::

    movement_id,kind,airline,tail,requested_hhmm,seats,aircraft_class,next_leg_distance_miles,connect_id

``kind`` is ``A`` or ``D``; ``next_leg_distance_miles`` is only meaningful on
departures; rows sharing a non-empty ``connect_id`` form one connection.

Flight-record CSV (one row per aircraft turn at the airport)::

    date,tail,origin,destination,arr_time,dep_time,distance,seats,aircraft_class

Config files are flat ``key = value`` lines; ``#`` starts a comment.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import hea_params as hp
from .errors import InconsistentPair, ParseError, SlotOutOfRange
from .hea_params import AircraftClass, HybridConfig
from .schedule import (Connection, HeaDemand, Movement, MovementKind, Schedule, TimeGrid, format_hhmm,
                       parse_hhmm)

log = logging.getLogger(__name__)

SCHEDULE_COLUMNS = ("movement_id", "kind", "airline", "tail", "requested_hhmm", "seats", "aircraft_class",
                    "next_leg_distance_miles", "connect_id")
FLIGHT_COLUMNS = ("date", "tail", "origin", "destination", "arr_time", "dep_time", "distance", "seats",
                  "aircraft_class")
MIN_HEA_DWELL_MINUTES = 15.0


@dataclass(frozen=True)
class ScheduleRecord:
    movement_id: str
    kind: MovementKind
    airline: str
    tail: str
    requested_hhmm: str
    seats: int | None = None
    aircraft_class: AircraftClass | None = None
    next_leg_distance_miles: float | None = None
    connect_id: str = ""

    def row(self) -> dict:
        return {
            "movement_id": self.movement_id,
            "kind": self.kind.value,
            "airline": self.airline,
            "tail": self.tail,
            "requested_hhmm": self.requested_hhmm,
            "seats": "" if self.seats is None else str(self.seats),
            "aircraft_class": "" if self.aircraft_class is None else self.aircraft_class.value,
            "next_leg_distance_miles": "" if self.next_leg_distance_miles is None
            else f"{self.next_leg_distance_miles:g}",
            "connect_id": self.connect_id,
        }


@dataclass
class ParsedSchedule:
    schedule: Schedule
    records: list[ScheduleRecord]
    short_dwell: list[str] = field(default_factory=list)


def read_schedule_records(path) -> list[ScheduleRecord]:
    with open(path, newline="") as fh:
        return _read_schedule_records(fh)


def _read_schedule_records(fh) -> list[ScheduleRecord]:
    reader = csv.DictReader(fh)
    if reader.fieldnames is None:
        return []
    missing = [c for c in SCHEDULE_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise ParseError(f"missing column(s) {', '.join(missing)}", line=1)
    records = []
    for line, row in enumerate(reader, start=2):
        records.append(_schedule_record(row, line))
    return records


def _cell(row, column, line, convert, optional=False):
    text = (row.get(column) or "").strip()
    if not text:
        if optional:
            return None
        raise ParseError("empty value", line, column)
    try:
        return convert(text)
    except (ValueError, KeyError) as exc:
        raise ParseError(str(exc) or "bad value", line, column) from None


def _schedule_record(row, line) -> ScheduleRecord:
    kind = _cell(row, "kind", line, lambda s: MovementKind(s.upper()))
    hhmm = _cell(row, "requested_hhmm", line, lambda s: format_hhmm(parse_hhmm(s)))
    seats = _cell(row, "seats", line, int, optional=True)
    if seats is not None and seats <= 0:
        raise ParseError("seats must be positive", line, "seats")
    dist = _cell(row, "next_leg_distance_miles", line, float, optional=True)
    if dist is not None and dist <= 0:
        raise ParseError("distance must be positive", line, "next_leg_distance_miles")
    return ScheduleRecord(
        movement_id=_cell(row, "movement_id", line, str),
        kind=kind,
        airline=(row.get("airline") or "").strip(),
        tail=(row.get("tail") or "").strip(),
        requested_hhmm=hhmm,
        seats=seats,
        aircraft_class=_cell(row, "aircraft_class", line, AircraftClass.parse, optional=True),
        next_leg_distance_miles=dist,
        connect_id=(row.get("connect_id") or "").strip(),
    )


def write_schedule_csv(records: Iterable[ScheduleRecord], path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SCHEDULE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for rec in records:
            writer.writerow(rec.row())


def _pairs(records: Sequence[ScheduleRecord]):
    groups: dict[str, list[ScheduleRecord]] = {}
    for rec in records:
        if rec.connect_id:
            groups.setdefault(rec.connect_id, []).append(rec)
    out = []
    for cid, group in groups.items():
        arrs = [r for r in group if r.kind == MovementKind.ARRIVAL]
        deps = [r for r in group if r.kind == MovementKind.DEPARTURE]
        if len(arrs) != 1 or len(deps) != 1:
            raise InconsistentPair(cid, "needs exactly one arrival and one departure")
        out.append((cid, arrs[0], deps[0]))
    return out


def build_schedule(records: Sequence[ScheduleRecord], grid: TimeGrid, min_connect_minutes: float = 30.0,
                   cfg: HybridConfig | None = None, load_factor: float = hp.DEFAULT_LOAD_FACTOR,
                   c_rate: float = hp.DEFAULT_C_RATE, tables=None,
                   min_hea_dwell_minutes: float = MIN_HEA_DWELL_MINUTES) -> ParsedSchedule:
    """Movements and connections on ``grid``; HEA demand attached when ``cfg`` is given.

    A connection is HEA-operated when its departure leg is within range under
    ``cfg`` and its requested dwell is at least ``min_hea_dwell_minutes``.
    """
    movements = []
    for rec in records:
        try:
            slot = grid.slot_of(rec.requested_hhmm)
        except SlotOutOfRange as exc:
            raise ParseError(str(exc), column="requested_hhmm") from None
        movements.append(Movement(rec.movement_id, rec.kind, rec.airline, slot))
    min_connect = grid.intervals(min_connect_minutes)

    connections, short = [], []
    for cid, arr, dep in _pairs(records):
        dwell = parse_hhmm(dep.requested_hhmm) - parse_hhmm(arr.requested_hhmm)
        if dwell < 0:
            raise InconsistentPair(cid, f"departure {dep.requested_hhmm} precedes arrival {arr.requested_hhmm}")
        demand = None
        if dwell < min_hea_dwell_minutes:
            short.append(cid)
        elif cfg is not None:
            demand = hea_demand(dep, cfg, load_factor, c_rate, tables)
        connections.append(Connection(cid, arr.movement_id, dep.movement_id, min_connect, demand,
                                       dep.airline or arr.airline))
    return ParsedSchedule(Schedule(grid, tuple(movements), tuple(connections)), list(records), short)


def hea_demand(dep: ScheduleRecord, cfg: HybridConfig, load_factor: float = hp.DEFAULT_LOAD_FACTOR,
               c_rate: float = hp.DEFAULT_C_RATE, tables=None) -> HeaDemand | None:
    if dep.aircraft_class is None or dep.seats is None or dep.next_leg_distance_miles is None:
        return None
    if not hp.is_hea_feasible(dep.aircraft_class, cfg, dep.next_leg_distance_miles, tables):
        return None
    b0 = hp.lookup_b0(dep.aircraft_class, cfg, tables)
    energy = hp.leg_energy(hp.passengers_from_seats(dep.seats, load_factor), dep.next_leg_distance_miles, b0)
    return HeaDemand(energy, hp.battery_rate_cap(energy, c_rate))


def parse_schedule(path, grid: TimeGrid, **kwargs) -> ParsedSchedule:
    """Read a schedule CSV and map it onto ``grid`` (see :func:`build_schedule`)."""
    return build_schedule(read_schedule_records(path), grid, **kwargs)


# ---------------------------------------------------------------------------
# flight records for schedule-level analytics


@dataclass(frozen=True)
class FlightRecord:
    """One aircraft turn at the airport: arrival, then departure of the next leg."""

    date: str
    tail: str
    origin: str
    destination: str
    arr_minute: int
    dep_minute: int
    distance: float
    seats: int
    aircraft_class: AircraftClass

    @property
    def dwell_minutes(self) -> int:
        return self.dep_minute - self.arr_minute

    @property
    def overnight(self) -> bool:
        return self.dep_minute >= 1440

    def row(self) -> dict:
        return {"date": self.date, "tail": self.tail, "origin": self.origin, "destination": self.destination,
                "arr_time": format_hhmm(self.arr_minute), "dep_time": format_hhmm(self.dep_minute % 1440),
                "distance": f"{self.distance:g}", "seats": str(self.seats),
                "aircraft_class": self.aircraft_class.value}


def read_flights(path, min_dwell_minutes: float = MIN_HEA_DWELL_MINUTES) -> tuple[list[FlightRecord], int]:
    """Flight records with dwell of at least ``min_dwell_minutes``, plus the count dropped.

    A departure clock time earlier than the arrival is read as next-day.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return [], 0
        missing = [c for c in FLIGHT_COLUMNS if c not in reader.fieldnames and c != "date"]
        if missing:
            raise ParseError(f"missing column(s) {', '.join(missing)}", line=1)
        kept, dropped = [], 0
        for line, row in enumerate(reader, start=2):
            arr = _cell(row, "arr_time", line, parse_hhmm)
            dep = _cell(row, "dep_time", line, parse_hhmm)
            if dep < arr:
                dep += 1440
            dist = _cell(row, "distance", line, float)
            seats = _cell(row, "seats", line, int)
            if dist <= 0:
                raise ParseError("distance must be positive", line, "distance")
            if seats <= 0:
                raise ParseError("seats must be positive", line, "seats")
            rec = FlightRecord((row.get("date") or "").strip(), (row.get("tail") or "").strip(),
                               (row.get("origin") or "").strip(), (row.get("destination") or "").strip(),
                               arr, dep, dist, seats, _cell(row, "aircraft_class", line, AircraftClass.parse))
            if rec.dwell_minutes < min_dwell_minutes:
                dropped += 1
                continue
            kept.append(rec)
    return kept, dropped


def write_flights(records: Iterable[FlightRecord], path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=FLIGHT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for rec in records:
            writer.writerow(rec.row())


# ---------------------------------------------------------------------------
# scenario config


@dataclass
class ScenarioConfig:
    bsed: float = 700
    mf: float = 25
    load_factor: float = hp.DEFAULT_LOAD_FACTOR
    T: int = 180
    dt_minutes: float = 2.0
    start: str = "10:00"
    capacity: int = 45
    window: int = 30
    min_connect_minutes: float = 30.0
    p_max_mw: float = 20.0
    w: float | None = None
    c_rate: float = hp.DEFAULT_C_RATE
    x_max_minutes: float = 20.0
    drop_per_round: int = 1
    switch_reward: float = 1.0
    min_hea_dwell_minutes: float = MIN_HEA_DWELL_MINUTES

    def __post_init__(self):
        positive = ("load_factor", "T", "dt_minutes", "capacity", "window", "c_rate", "drop_per_round")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("min_connect_minutes", "p_max_mw", "x_max_minutes", "switch_reward",
                     "min_hea_dwell_minutes"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.load_factor > 1:
            raise ValueError("load_factor must be <= 1")
        if self.w is not None and self.w < 0:
            raise ValueError("w must be non-negative")
        self.hybrid  # validates the grid point

    @property
    def hybrid(self) -> HybridConfig:
        return HybridConfig(self.bsed, self.mf)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.dt_minutes, parse_hhmm(self.start))

    @property
    def p_max_w(self) -> float:
        return self.p_max_mw * 1e6

    @property
    def weight(self) -> float:
        """Objective weight in 1/W^2; defaults to 1/P**2."""
        if self.w is not None:
            return self.w
        return 1.0 / self.p_max_w ** 2 if self.p_max_w > 0 else 0.0

    @property
    def x_max_intervals(self) -> int:
        return int(math.floor(self.x_max_minutes / self.dt_minutes + 1e-9))


_CONFIG_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


def parse_config(text: str) -> ScenarioConfig:
    """Parse ``key = value`` lines; unknown or repeated keys are errors.

    ``w`` accepts a number (1/W^2) or ``auto`` for 1/P^2.
    """
    values = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", line_no)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_TYPES:
            raise ParseError(f"unknown key {key!r}", line_no, key)
        if key in values:
            raise ParseError(f"repeated key {key!r}", line_no, key)
        values[key] = _convert_config(key, value, line_no)
    try:
        return ScenarioConfig(**values)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def _convert_config(key, value, line_no):
    try:
        if key == "start":
            return format_hhmm(parse_hhmm(value))
        if key == "w":
            return None if value.lower() == "auto" else float(value)
        if key in ("T", "capacity", "window", "drop_per_round"):
            return int(value)
        return float(value)
    except ValueError:
        raise ParseError(f"bad value {value!r}", line_no, key) from None


def load_config(path) -> ScenarioConfig:
    return parse_config(Path(path).read_text())


def dump_config(cfg: ScenarioConfig) -> str:
    lines = []
    for key, value in asdict(cfg).items():
        if key == "w":
            value = "auto" if value is None else repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# synthetic schedules

AIRLINE_CODES = ("AA", "B6", "DL", "UA", "AS", "WN", "NK", "F9", "G4", "HA", "SY", "MQ")
SEATS = {AircraftClass.REGIONAL_JET: (66, 76), AircraftClass.SINGLE_AISLE: (126, 160)}


def generate_synthetic(seed: int, movements: int, hea_fraction: float = 0.5, bank_count: int = 3,
                       grid: TimeGrid | None = None, hea_pairs: int | None = None, airlines: int = 8,
                       pair_share: float = 0.6, cfg: HybridConfig | None = None,
                       min_connect_minutes: float = 30.0, bank_share: float = 0.7,
                       bank_sigma_minutes: float = 14.0) -> list[ScheduleRecord]:
    """Banked arrival/departure waves with a controlled number of HEA-capable connections.

    About ``pair_share`` of the movements form arrival/departure connections;
    ``hea_pairs`` of them (default ``hea_fraction`` of all connections) get a
    next leg within range under ``cfg``, the rest a leg beyond range.  Airlines
    are assigned round-robin over HEA connections so each one operates some.
    Deterministic for a given seed.
    """
    grid = grid or TimeGrid(180, 2.0, 600)
    cfg = cfg or HybridConfig(700, 25)
    rng = np.random.default_rng(seed)
    if movements <= 0:
        return []
    n_pairs = min(int(round(movements * pair_share / 2)), movements // 2)
    n_hea = hea_pairs if hea_pairs is not None else int(round(hea_fraction * n_pairs))
    if n_hea > n_pairs:
        n_pairs = n_hea
        if 2 * n_pairs > movements:
            raise ValueError("not enough movements for the requested HEA pairs")
    n_single = movements - 2 * n_pairs
    codes = [AIRLINE_CODES[k % len(AIRLINE_CODES)] + ("" if k < len(AIRLINE_CODES) else str(k))
             for k in range(max(airlines, 1))]

    t0 = grid.start_minute
    horizon = grid.T * grid.dt_minutes
    centers = t0 + horizon * (np.arange(bank_count) + 0.5) / max(bank_count, 1)
    min_dwell = max(min_connect_minutes, MIN_HEA_DWELL_MINUTES)
    max_dwell = min(min_dwell + 45.0, horizon - 2 * grid.dt_minutes)
    if n_pairs and max_dwell < min_dwell:
        raise ValueError("horizon too short for the minimum connecting time")

    def draw_time(lo, hi):
        for _ in range(1000):
            if bank_count and rng.random() < bank_share:
                t = rng.normal(rng.choice(centers), bank_sigma_minutes)
            else:
                t = rng.uniform(lo, hi)
            if lo <= t < hi:
                return int(t)
        return int(lo)

    def on_grid(minute):
        return int(t0 + math.floor((minute - t0) / grid.dt_minutes) * grid.dt_minutes)

    records = []
    seq = 0
    order = rng.permutation(n_pairs)
    hea_set = set(order[:n_hea].tolist())
    for k in range(n_pairs):
        is_hea = k in hea_set
        if is_hea:
            airline = codes[sorted(hea_set).index(k) % len(codes)]
        else:
            airline = codes[int(rng.integers(len(codes)))]
        ac = AircraftClass.REGIONAL_JET if rng.random() < 0.6 else AircraftClass.SINGLE_AISLE
        seats = int(rng.integers(*SEATS[ac], endpoint=True))
        reach = hp.lookup_range(ac, cfg)
        if is_hea:
            dist = float(round(rng.uniform(0.3 * reach, 0.98 * reach)))
        else:
            dist = float(round(rng.uniform(1.05 * reach, 1.05 * reach + 1200)))
        dwell = float(rng.uniform(min_dwell, max_dwell))
        arr = on_grid(draw_time(t0, t0 + horizon - dwell - grid.dt_minutes))
        dep = on_grid(arr + dwell + grid.dt_minutes - 1e-9)
        dep = max(dep, arr + math.ceil(min_dwell / grid.dt_minutes) * grid.dt_minutes)
        dep = min(dep, t0 + horizon - grid.dt_minutes)
        cid = f"C{k:03d}"
        tail = f"N{100 + k:03d}{airline[:2]}"
        records.append(ScheduleRecord(f"M{seq:04d}", MovementKind.ARRIVAL, airline, tail,
                                      format_hhmm(arr), seats, ac, None, cid))
        records.append(ScheduleRecord(f"M{seq + 1:04d}", MovementKind.DEPARTURE, airline, tail,
                                      format_hhmm(dep), seats, ac, dist, cid))
        seq += 2
    for k in range(n_single):
        kind = MovementKind.ARRIVAL if rng.random() < 0.5 else MovementKind.DEPARTURE
        airline = codes[int(rng.integers(len(codes)))]
        ac = AircraftClass.REGIONAL_JET if rng.random() < 0.6 else AircraftClass.SINGLE_AISLE
        seats = int(rng.integers(*SEATS[ac], endpoint=True))
        minute = on_grid(draw_time(t0, t0 + horizon))
        dist = float(round(rng.uniform(150, 2500))) if kind == MovementKind.DEPARTURE else None
        records.append(ScheduleRecord(f"M{seq:04d}", kind, airline, f"N{900 + k:03d}{airline[:2]}",
                                      format_hhmm(minute), seats, ac, dist, ""))
        seq += 1
    records.sort(key=lambda r: (parse_hhmm(r.requested_hhmm), r.movement_id))
    return records
