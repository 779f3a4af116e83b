"""Peak-flattening charging for a fixed schedule.

Minimizes ``sum_t (sum_n rate[n, t])**2`` subject to each task receiving its
energy inside its window at a rate in ``[0, rate_cap]``.  The solver is cyclic
block-coordinate descent over tasks; each block is an exact water-filling step
against the load of the other tasks.  Optimality is certified by
:func:`kkt_residual`.

Rates are in W, energies in Wh, and ``rate * grid.dt_hours`` is the energy of
one interval.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyWindow, Infeasible
from .schedule import TimeGrid

log = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-6
DEFAULT_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class ChargingTask:
    """Charge ``energy_wh`` during intervals ``start..end`` (both inclusive)."""

    id: str
    start: int
    end: int
    energy_wh: float
    rate_cap_w: float = math.inf

    def __post_init__(self):
        if self.energy_wh < 0:
            raise ValueError("energy must be non-negative")
        if not self.rate_cap_w > 0:
            raise ValueError("rate cap must be positive")

    @property
    def length(self) -> int:
        return max(self.end - self.start + 1, 0)

    def deliverable_wh(self, grid: TimeGrid) -> float:
        return self.rate_cap_w * self.length * grid.dt_hours


@dataclass
class ChargingProfile:
    grid: TimeGrid
    task_ids: tuple[str, ...]
    rates: np.ndarray
    sweeps: int = 0
    converged: bool = True
    kkt: float | None = None
    cap_exceeded: tuple[str, ...] = field(default=())

    @property
    def aggregate(self) -> np.ndarray:
        if not len(self.task_ids):
            return np.zeros(self.grid.T)
        return self.rates.sum(axis=0)

    @property
    def peak(self) -> float:
        return float(self.aggregate.max(initial=0.0))

    @property
    def objective(self) -> float:
        """Sum over intervals of squared aggregate power, in W^2."""
        agg = self.aggregate
        return float(agg @ agg)

    def energy(self) -> dict[str, float]:
        return dict(zip(self.task_ids, (self.rates.sum(axis=1) * self.grid.dt_hours).tolist()))

    def rate(self, task_id: str) -> np.ndarray:
        return self.rates[self.task_ids.index(task_id)]


def _check_window(task: ChargingTask, grid: TimeGrid):
    if task.length <= 0:
        raise EmptyWindow(f"task {task.id!r} has an empty window [{task.start}, {task.end}]")
    if task.start < 0 or task.end >= grid.T:
        raise EmptyWindow(f"task {task.id!r} window [{task.start}, {task.end}] leaves the grid")


def naive_profile(tasks: Sequence[ChargingTask], grid: TimeGrid) -> ChargingProfile:
    """Constant-power delivery over each window; rate caps are only flagged."""
    rates = np.zeros((len(tasks), grid.T))
    exceeded = []
    for k, task in enumerate(tasks):
        _check_window(task, grid)
        rate = task.energy_wh / (task.length * grid.dt_hours)
        rates[k, task.start: task.end + 1] = rate
        if rate > task.rate_cap_w * (1 + 1e-12):
            exceeded.append(task.id)
    if exceeded:
        log.warning("naive rate exceeds the cap for %d task(s)", len(exceeded))
    return ChargingProfile(grid, tuple(t.id for t in tasks), rates, cap_exceeded=tuple(exceeded))


def water_fill(background: np.ndarray, target: float, cap: float = math.inf) -> np.ndarray:
    """Minimize ``sum((background + x)**2)`` s.t. ``sum(x) = target``, ``0 <= x <= cap``.

    Returns ``x = clip(level - background, 0, cap)`` with the level chosen so
    the sum matches ``target`` exactly (up to rounding).
    """
    n = background.size
    if target <= 0:
        return np.zeros(n)
    if target > n * cap * (1 + 1e-12):
        raise Infeasible("water-filling target exceeds capacity")
    if math.isfinite(cap) and target >= n * cap:
        return np.full(n, cap)

    lo_sorted = np.sort(background)
    lo_csum = np.concatenate([[0.0], np.cumsum(lo_sorted)])
    if math.isfinite(cap):
        hi_sorted = lo_sorted + cap
        breaks = np.concatenate([lo_sorted, hi_sorted])
    else:
        hi_sorted = None
        breaks = lo_sorted
    breaks = np.unique(breaks)

    def filled(level):
        k = np.searchsorted(lo_sorted, level, side="right")
        total = k * level - lo_csum[k]
        if hi_sorted is not None:
            j = np.searchsorted(hi_sorted, level, side="right")
            total = total - (j * level - lo_csum[j] - j * cap)
        return total

    values = filled(breaks)
    idx = int(np.searchsorted(values, target, side="left"))
    if idx >= breaks.size:
        # beyond the last breakpoint every slot is open without cap
        k = n
        level = (target + lo_csum[k]) / k
    elif idx == 0:
        level = breaks[0]
    else:
        a, b = breaks[idx - 1], breaks[idx]
        fa, fb = values[idx - 1], values[idx]
        level = a + (target - fa) * (b - a) / (fb - fa)
    return np.clip(level - background, 0.0, cap)


def _validate(tasks: Sequence[ChargingTask], grid: TimeGrid, rtol: float):
    ids = [t.id for t in tasks]
    if len(set(ids)) != len(ids):
        raise ValueError("task ids must be unique")
    for task in tasks:
        if task.energy_wh == 0:
            continue
        _check_window(task, grid)
        if task.energy_wh > task.deliverable_wh(grid) * (1 + rtol):
            raise Infeasible(
                f"task {task.id!r} needs {task.energy_wh:.6g} Wh but at most "
                f"{task.deliverable_wh(grid):.6g} Wh is deliverable", family="battery", task=task.id)


def solve_smart(tasks: Sequence[ChargingTask], grid: TimeGrid, tolerance: float = DEFAULT_TOLERANCE,
                max_sweeps: int = DEFAULT_MAX_SWEEPS, power_cap: float | None = None) -> ChargingProfile:
    """Flattest feasible charging profile.

    ``power_cap`` (W) bounds the aggregate.  The flattest profile also has the
    smallest achievable peak, so the capped problem is feasible iff the
    uncapped optimum respects the cap; otherwise :class:`Infeasible` is raised.
    """
    _validate(tasks, grid, tolerance)
    n = len(tasks)
    rates = np.zeros((n, grid.T))
    dt = grid.dt_hours
    active = [k for k, t in enumerate(tasks) if t.energy_wh > 0]
    for k in active:
        t = tasks[k]
        rates[k, t.start: t.end + 1] = min(t.energy_wh / (t.length * dt), t.rate_cap_w)
    agg = rates.sum(axis=0)

    sweeps, residual = 0, _kkt(rates, agg, tasks) if active else 0.0
    # single-task or disjoint instances are solved by one sweep
    while residual > tolerance and sweeps < max_sweeps:
        for k in active:
            t = tasks[k]
            sl = slice(t.start, t.end + 1)
            background = agg[sl] - rates[k, sl]
            new = water_fill(background, t.energy_wh / dt, t.rate_cap_w)
            agg[sl] = background + new
            rates[k, sl] = new
        sweeps += 1
        if sweeps % 16 == 0 or sweeps < 16:
            agg = rates.sum(axis=0)
            residual = _kkt(rates, agg, tasks)
    if active:
        agg = rates.sum(axis=0)
        residual = _kkt(rates, agg, tasks)
    converged = residual <= tolerance
    if not converged:
        log.warning("smart charging stopped after %d sweeps with KKT residual %.3g", sweeps, residual)

    profile = ChargingProfile(grid, tuple(t.id for t in tasks), rates, sweeps, converged, residual)
    if power_cap is not None and profile.peak > power_cap * (1 + tolerance) + 1e-9:
        raise Infeasible(
            f"flattest profile peaks at {profile.peak:.6g} W above the cap {power_cap:.6g} W",
            family="airport power")
    return profile


def _kkt(rates: np.ndarray, agg: np.ndarray, tasks: Sequence[ChargingTask]) -> float:
    """Largest profitable transfer of one task's charge between two intervals.

    Shifting charge from ``t`` (rate above zero) to ``s`` (rate below cap) lowers
    the objective iff ``agg[t] > agg[s]``.  At a KKT point no such pair exists.
    The result is relative to the mean aggregate power over occupied intervals.
    """
    occupied = agg > 0
    scale = float(agg[occupied].mean()) if occupied.any() else 0.0
    if scale <= 0:
        return 0.0
    eps = 1e-12 * max(scale, 1.0)
    worst = 0.0
    for k, t in enumerate(tasks):
        if t.energy_wh <= 0 or t.length <= 0:
            continue
        sl = slice(t.start, t.end + 1)
        r, a = rates[k, sl], agg[sl]
        can_drop = r > eps
        can_add = r < t.rate_cap_w - max(eps, 1e-12 * t.rate_cap_w) if math.isfinite(t.rate_cap_w) \
            else np.ones_like(can_drop)
        if can_drop.any() and can_add.any():
            worst = max(worst, float(a[can_drop].max() - a[can_add].min()))
    return worst / scale


def check_profile(profile: ChargingProfile, tasks: Sequence[ChargingTask], rtol: float = 1e-6) -> list[str]:
    """Constraint violations of ``profile`` for ``tasks``; empty when feasible."""
    problems = []
    dt = profile.grid.dt_hours
    for k, t in enumerate(tasks):
        r = profile.rates[k]
        outside = np.ones(profile.grid.T, bool)
        if t.length > 0:
            outside[max(t.start, 0): t.end + 1] = False
        scale = max(t.energy_wh, 1.0)
        if (r < -rtol * scale).any():
            problems.append(f"{t.id}: negative rate")
        if np.abs(r[outside]).max(initial=0.0) > rtol * scale:
            problems.append(f"{t.id}: charging outside window")
        if math.isfinite(t.rate_cap_w) and r.max(initial=0.0) > t.rate_cap_w * (1 + rtol):
            problems.append(f"{t.id}: rate cap exceeded")
        if abs(r.sum() * dt - t.energy_wh) > rtol * scale:
            problems.append(f"{t.id}: energy {r.sum() * dt:.9g} Wh != {t.energy_wh:.9g} Wh")
    return problems


def kkt_residual(profile: ChargingProfile, tasks: Sequence[ChargingTask], rtol: float = 1e-6) -> float:
    """Maximum stationarity/complementarity violation of a feasible profile (0 at optimum)."""
    if list(profile.task_ids) != [t.id for t in tasks]:
        raise ValueError("profile rows do not match the task list")
    problems = check_profile(profile, tasks, rtol)
    if problems:
        raise Infeasible("profile is infeasible: " + "; ".join(problems[:3]))
    return _kkt(profile.rates, profile.aggregate, tasks)
