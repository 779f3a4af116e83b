"""Hybrid-electric aircraft parameter tables, range feasibility and leg energy.

Battery energy usage ``b0`` (Wh per passenger-mile) and maximum range (statute
miles) are tabulated for two retrofit airframes over a grid of battery specific
energy density (BSED, Wh/kg) and motor factor (MF, percent) values.  Regional
jets use the ERJ-175 rows and single-aisle aircraft the Boeing 737-700 rows.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .errors import MissingEntry, UnknownConfig

BSED_GRID = (500, 700, 1000, 1250, 1500)
MF_GRID = (12.5, 25.0, 50.0)

DEFAULT_LOAD_FACTOR = 0.85
DEFAULT_C_RATE = 10.0


class AircraftClass(str, enum.Enum):
    REGIONAL_JET = "RegionalJet"
    SINGLE_AISLE = "SingleAisle"

    @classmethod
    def parse(cls, text: str) -> "AircraftClass":
        key = text.strip().replace("_", "").replace(" ", "").lower()
        aliases = {"regionaljet": cls.REGIONAL_JET, "rj": cls.REGIONAL_JET,
                   "singleaisle": cls.SINGLE_AISLE, "sa": cls.SINGLE_AISLE}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown aircraft class {text!r}") from None


@dataclass(frozen=True)
class HybridConfig:
    """A (BSED, MF) technology point."""

    bsed: float
    mf: float

    def __post_init__(self):
        if self.bsed not in BSED_GRID or self.mf not in MF_GRID:
            raise UnknownConfig(
                f"(bsed={self.bsed}, mf={self.mf}) is off the tabulated grid "
                f"BSED {BSED_GRID} x MF {MF_GRID}")

    def __str__(self):
        return f"BSED={self.bsed:g}Wh/kg MF={self.mf:g}%"


@dataclass(frozen=True)
class TableEntry:
    b0: float | None
    max_range: float | None


class ParameterTables:
    """Immutable (class, config) -> (b0, range) lookup.

    Missing entries (no hybrid variant) are stored as ``None``.
    """

    def __init__(self, entries: dict[tuple[AircraftClass, float, float], TableEntry]):
        self._entries = dict(entries)

    @classmethod
    def from_csv(cls, source) -> "ParameterTables":
        """Load from a path or an open text stream.

        Columns: class, bsed_wh_per_kg, mf_percent, b0_wh_per_pax_mile,
        range_miles.  Empty cells mark a missing entry.
        """
        if isinstance(source, (str, Path)):
            with open(source, newline="") as fh:
                return cls._read(fh)
        return cls._read(source)

    @classmethod
    def _read(cls, fh) -> "ParameterTables":
        entries = {}
        for row in csv.DictReader(fh):
            ac = AircraftClass.parse(row["class"])
            bsed = float(row["bsed_wh_per_kg"])
            mf = float(row["mf_percent"])
            b0 = row["b0_wh_per_pax_mile"].strip()
            rng = row["range_miles"].strip()
            entries[(ac, bsed, mf)] = TableEntry(
                float(b0) if b0 else None, float(rng) if rng else None)
        return cls(entries)

    def _entry(self, ac: AircraftClass, cfg: HybridConfig) -> TableEntry:
        try:
            return self._entries[(AircraftClass(ac), float(cfg.bsed), float(cfg.mf))]
        except KeyError:
            raise UnknownConfig(f"no table row for {ac.value}, {cfg}") from None

    def b0(self, ac: AircraftClass, cfg: HybridConfig) -> float:
        value = self._entry(ac, cfg).b0
        if value is None:
            raise MissingEntry(f"no hybrid-electric variant for {ac.value}, {cfg}")
        return value

    def max_range(self, ac: AircraftClass, cfg: HybridConfig) -> float:
        value = self._entry(ac, cfg).max_range
        if value is None:
            raise MissingEntry(f"no hybrid-electric variant for {ac.value}, {cfg}")
        return value

    def items(self):
        return sorted(self._entries.items(), key=lambda kv: (kv[0][0].value, kv[0][2], kv[0][1]))


def bundled_csv_text() -> str:
    return resources.files("heasched").joinpath("data/hea_params.csv").read_text()


@lru_cache(maxsize=1)
def default_tables() -> ParameterTables:
    return ParameterTables.from_csv(io.StringIO(bundled_csv_text()))


def lookup_b0(ac: AircraftClass, cfg: HybridConfig, tables: ParameterTables | None = None) -> float:
    """Battery energy usage in Wh per passenger-mile."""
    return (tables or default_tables()).b0(ac, cfg)


def lookup_range(ac: AircraftClass, cfg: HybridConfig, tables: ParameterTables | None = None) -> float:
    """Maximum hybrid-electric range in statute miles."""
    return (tables or default_tables()).max_range(ac, cfg)


def is_hea_feasible(ac: AircraftClass, cfg: HybridConfig, distance: float,
                    tables: ParameterTables | None = None) -> bool:
    if distance < 0:
        raise ValueError("distance must be non-negative")
    try:
        return distance <= lookup_range(ac, cfg, tables)
    except MissingEntry:
        return False


def leg_energy(passengers: float, distance: float, b0: float) -> float:
    """Battery energy in Wh for one leg: passengers x miles x Wh/passenger-mile."""
    if passengers < 0 or distance < 0:
        raise ValueError("passengers and distance must be non-negative")
    if b0 <= 0:
        raise ValueError("b0 must be positive")
    return passengers * distance * b0


def passengers_from_seats(seats: float, load_factor: float = DEFAULT_LOAD_FACTOR) -> float:
    # kept fractional; rounding would shift tabulated energies
    if seats < 0 or not 0.0 <= load_factor <= 1.0:
        raise ValueError("need seats >= 0 and 0 <= load_factor <= 1")
    return seats * load_factor


def battery_rate_cap(energy_wh: float, c_rate: float = DEFAULT_C_RATE) -> float:
    """Charging power limit in W, using the leg energy as the battery capacity."""
    if energy_wh < 0 or c_rate <= 0:
        raise ValueError("need energy >= 0 and c_rate > 0")
    return c_rate * energy_wh
