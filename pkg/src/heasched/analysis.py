"""Fleet-level analytics over flight records: HEA filtering, naive daily
profiles, daily peaks, annual energy and distance histograms."""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import hea_params as hp
from .hea_params import AircraftClass, HybridConfig, ParameterTables
from .ingest import FlightRecord

log = logging.getLogger(__name__)

MINUTES_PER_DAY = 1440
CLASSES = (AircraftClass.REGIONAL_JET, AircraftClass.SINGLE_AISLE)


def filter_hea(flights: Iterable[FlightRecord], cfg: HybridConfig,
               tables: ParameterTables | None = None) -> list[FlightRecord]:
    """Flights whose next leg is within the HEA range of their class under ``cfg``."""
    return [f for f in flights if hp.is_hea_feasible(f.aircraft_class, cfg, f.distance, tables)]


def flight_energy(f: FlightRecord, cfg: HybridConfig, load_factor: float = hp.DEFAULT_LOAD_FACTOR,
                  tables: ParameterTables | None = None) -> float:
    p = hp.passengers_from_seats(f.seats, load_factor)
    return hp.leg_energy(p, f.distance, hp.lookup_b0(f.aircraft_class, cfg, tables))


@dataclass
class DailyProfile:
    """Naive charging power (W) per 1-min interval of one day, split by class."""

    date: str
    by_class: dict[AircraftClass, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for ac in CLASSES:
            self.by_class.setdefault(ac, np.zeros(MINUTES_PER_DAY))

    @property
    def aggregate(self) -> np.ndarray:
        return sum((self.by_class[ac] for ac in CLASSES), np.zeros(MINUTES_PER_DAY))

    @property
    def peak(self) -> float:
        return float(self.aggregate.max())


def daily_naive_profile(flights: Sequence[FlightRecord], cfg: HybridConfig, date: str = "",
                        load_factor: float = hp.DEFAULT_LOAD_FACTOR,
                        tables: ParameterTables | None = None) -> DailyProfile:
    """Uniform-power charging over each dwell, superposed over ``flights``.

    A flight charges during minutes ``arr < t <= dep``.  Windows past midnight
    are cut at the end of the day; the cut energy is not redistributed.
    """
    prof = DailyProfile(date)
    truncated = 0
    for f in flights:
        dwell = f.dwell_minutes
        if dwell <= 0:
            continue
        rate = flight_energy(f, cfg, load_factor, tables) / (dwell / 60.0)
        first, last = f.arr_minute + 1, f.dep_minute
        if last >= MINUTES_PER_DAY:
            truncated += 1
            last = MINUTES_PER_DAY - 1
        if first <= last:
            prof.by_class[f.aircraft_class][first: last + 1] += rate
    if truncated:
        log.warning("%d dwell window(s) on %s truncated at midnight", truncated, date or "<undated>")
    return prof


def by_date(flights: Iterable[FlightRecord]) -> dict[str, list[FlightRecord]]:
    days = defaultdict(list)
    for f in flights:
        days[f.date].append(f)
    return dict(sorted(days.items()))


def daily_profiles(flights: Iterable[FlightRecord], cfg: HybridConfig, **kw) -> list[DailyProfile]:
    """Naive profiles for every date among the HEA-feasible flights."""
    tables = kw.get("tables")
    return [daily_naive_profile(day, cfg, date, **kw) for date, day in by_date(filter_hea(flights, cfg, tables)).items()]


def daily_peaks(profiles: Iterable[DailyProfile]) -> list[float]:
    return [p.peak for p in profiles]


def annual_energy(flights: Iterable[FlightRecord], cfg: HybridConfig, load_factor: float = hp.DEFAULT_LOAD_FACTOR,
                  tables: ParameterTables | None = None) -> float:
    """Total leg energy of ``flights`` in GWh (flights are not filtered here)."""
    return sum(flight_energy(f, cfg, load_factor, tables) for f in flights) / 1e9


def lower_median(values: Sequence[float]) -> float | None:
    if not len(values):
        return None
    s = sorted(values)
    return s[(len(s) - 1) // 2]


@dataclass
class DistanceHistogram:
    bin_miles: float
    edges: np.ndarray
    counts: dict[AircraftClass, np.ndarray]
    medians: dict[AircraftClass, float | None]


def distance_histogram(flights: Sequence[FlightRecord], bin_miles: float = 100.0) -> DistanceHistogram:
    if bin_miles <= 0:
        raise ValueError("bin width must be positive")
    dists = {ac: [f.distance for f in flights if f.aircraft_class == ac] for ac in CLASSES}
    top = max((max(d) for d in dists.values() if d), default=0.0)
    nbins = int(np.floor(top / bin_miles)) + 1
    edges = np.arange(nbins + 1) * bin_miles
    counts = {ac: np.bincount((np.asarray(d) // bin_miles).astype(int), minlength=nbins)
              for ac, d in dists.items()}
    return DistanceHistogram(bin_miles, edges, counts, {ac: lower_median(d) for ac, d in dists.items()})


@dataclass
class AnnualSummary:
    airport: str
    config: HybridConfig
    energy_gwh: float
    switched_flights: int
    daily_peaks_w: list[float]


def annual_summary(flights: Sequence[FlightRecord], cfg: HybridConfig, airport: str = "",
                   load_factor: float = hp.DEFAULT_LOAD_FACTOR,
                   tables: ParameterTables | None = None) -> AnnualSummary:
    hea = filter_hea(flights, cfg, tables)
    profiles = [daily_naive_profile(day, cfg, date, load_factor, tables) for date, day in by_date(hea).items()]
    return AnnualSummary(airport, cfg, annual_energy(hea, cfg, load_factor, tables), len(hea), daily_peaks(profiles))


def write_daily_profile_csv(profile: DailyProfile, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["minute", "clock_time", "aggregate_kw"] + [f"{ac.value}_kw" for ac in CLASSES])
        agg = profile.aggregate
        for t in range(MINUTES_PER_DAY):
            w.writerow([t, f"{t // 60:02d}:{t % 60:02d}", f"{agg[t] / 1e3:.6f}"]
                       + [f"{profile.by_class[ac][t] / 1e3:.6f}" for ac in CLASSES])


def peak_histogram(peaks_w: Sequence[float], bin_mw: float = 5.0) -> list[tuple[float, float, int]]:
    """(lower MW, upper MW, count) rows covering all peaks."""
    if not peaks_w:
        return []
    mw = np.asarray(peaks_w) / 1e6
    nbins = int(mw.max() // bin_mw) + 1
    counts = np.bincount((mw // bin_mw).astype(int), minlength=nbins)
    return [(k * bin_mw, (k + 1) * bin_mw, int(c)) for k, c in enumerate(counts)]


def write_peak_histogram_csv(peaks_w: Sequence[float], path, bin_mw: float = 5.0):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["peak_mw_from", "peak_mw_to", "days"])
        for lo, hi, c in peak_histogram(peaks_w, bin_mw):
            w.writerow([f"{lo:g}", f"{hi:g}", c])


def write_annual_summary_csv(summaries: Iterable[AnnualSummary], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["airport", "bsed", "mf", "energy_gwh", "switched_flights", "days", "max_daily_peak_mw"])
        for s in summaries:
            w.writerow([s.airport, f"{s.config.bsed:g}", f"{s.config.mf:g}", f"{s.energy_gwh:.6f}",
                        s.switched_flights, len(s.daily_peaks_w),
                        f"{max(s.daily_peaks_w, default=0.0) / 1e6:.6f}"])
