"""Airline/airport mechanisms for switching HEA connections to conventional aircraft.

Three procedures operate on a proposed schedule with HEA-flagged connections:

* :func:`airport_switch_optimize` -- the airport optimizes keep/switch decisions
  jointly with the schedule, rewarding every retained HEA connection;
* :func:`airport_switch_heuristic` -- the airport switches the HEA connection
  with the highest uniform charging rate, one per round, until acceptable;
* :func:`airline_iterative_drop` -- every airline with HEA connections left
  switches its own highest-rate connection(s) each round until acceptable.

A schedule is acceptable when no movement is displaced by more than
``x_max`` intervals.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Mapping

from .errors import Infeasible, ZeroDwell
from .reschedule import RescheduleSolution, Scenario, solve
from .schedule import Connection, Schedule, TimeGrid

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("round", "airline", "connection_id", "action", "max_disp_after", "peak_power_after")


def uniform_rate_w(energy_wh: float, arrival_slot: int, departure_slot: int, grid: TimeGrid) -> float:
    """Constant power delivering ``energy_wh`` over the dwell, in W."""
    dwell = departure_slot - arrival_slot
    if dwell <= 0:
        raise ZeroDwell(f"no dwell between slots {arrival_slot} and {departure_slot}")
    return energy_wh / (dwell * grid.dt_hours)


def uniform_rate(conn: Connection, schedule: Schedule, slots: Mapping[str, int] | None = None) -> float:
    slots = slots or schedule.requested()
    energy = conn.hea.energy_wh if conn.hea else 0.0
    return uniform_rate_w(energy, slots[conn.arrival], slots[conn.departure], schedule.grid)


def rank_by_rate(conns, schedule: Schedule, slots=None) -> list[Connection]:
    """Descending uniform rate; ties by larger energy, then connection id."""
    return sorted(conns, key=lambda c: (-uniform_rate(c, schedule, slots), -c.hea.energy_wh, c.id))


@dataclass
class TraceRow:
    round: int
    airline: str
    connection_id: str
    action: str
    max_disp_after: int
    peak_power_after: float


@dataclass
class SwitchResult:
    keep: dict[str, int]
    solution: RescheduleSolution
    rounds: int = 0
    solver_calls: int = 1
    trace: list[TraceRow] = field(default_factory=list)

    @property
    def switched(self) -> list[str]:
        return sorted(c for c, z in self.keep.items() if not z)

    @property
    def retained(self) -> int:
        return sum(self.keep.values())


@dataclass(frozen=True)
class Proposal:
    """HEA-flagged connections submitted by each airline, with the acceptability threshold."""

    by_airline: dict[str, tuple[Connection, ...]]
    x_max: int

    def __post_init__(self):
        if self.x_max < 0:
            raise ValueError("x_max must be >= 0")

    @classmethod
    def from_schedule(cls, schedule: Schedule, x_max: int) -> "Proposal":
        groups: dict[str, list[Connection]] = {}
        for c in schedule.connections:
            groups.setdefault(c.airline, []).append(c)
        return cls({a: tuple(cs) for a, cs in sorted(groups.items())}, x_max)

    def hea_count(self) -> dict[str, int]:
        return {a: sum(c.is_hea for c in cs) for a, cs in self.by_airline.items()}


def apply_switches(schedule: Schedule, switched: set[str]) -> Schedule:
    return schedule.with_connections(c.conventional() if c.id in switched else c for c in schedule.connections)


def _acceptable(sol: RescheduleSolution, x_max: int) -> bool:
    return sol.max_disp <= x_max


def airport_switch_heuristic(scn: Scenario, x_max: int, **solve_kwargs) -> SwitchResult:
    """Switch the highest-uniform-rate HEA connection until the schedule is acceptable."""
    return _iterate(scn, x_max, per_airline=False, drop_per_round=1, **solve_kwargs)


def airline_iterative_drop(scn: Scenario, x_max: int, drop_per_round: int = 1, **solve_kwargs) -> SwitchResult:
    """Each airline switches its own top ``drop_per_round`` connections per unacceptable round."""
    if drop_per_round < 1:
        raise ValueError("drop_per_round must be >= 1")
    return _iterate(scn, x_max, per_airline=True, drop_per_round=drop_per_round, **solve_kwargs)


def _iterate(scn: Scenario, x_max: int, per_airline: bool, drop_per_round: int, **solve_kwargs) -> SwitchResult:
    base = scn.schedule
    all_hea = base.hea_connections
    switched: set[str] = set()
    trace: list[TraceRow] = []
    sol = solve(scn, **solve_kwargs)
    calls, rnd = 1, 0
    _trace_round(trace, rnd, all_hea, switched, set(), sol)
    while not _acceptable(sol, x_max):
        remaining = [c for c in all_hea if c.id not in switched]
        if not remaining:
            raise Infeasible("schedule is unacceptable even with every HEA connection switched")
        ranked = rank_by_rate(remaining, base)
        if per_airline:
            now = set()
            for airline in sorted({c.airline for c in remaining}):
                own = [c for c in ranked if c.airline == airline]
                now.update(c.id for c in own[:drop_per_round])
        else:
            now = {ranked[0].id}
        switched |= now
        rnd += 1
        sol = solve(scn.with_(schedule=apply_switches(base, switched)), **solve_kwargs)
        calls += 1
        _trace_round(trace, rnd, all_hea, switched, now, sol)
        log.info("round %d: switched %s, max displacement %d", rnd, sorted(now), sol.max_disp)
    keep = {c.id: int(c.id not in switched) for c in all_hea}
    sol.keep = keep
    return SwitchResult(keep, sol, rnd, calls, trace)


def _trace_round(trace, rnd, all_hea, switched, now, sol):
    for c in all_hea:
        if c.id in now:
            action = "switch"
        elif c.id in switched:
            continue
        else:
            action = "keep"
        trace.append(TraceRow(rnd, c.airline, c.id, action, sol.max_disp, sol.peak_power_w))


def airport_switch_optimize(scn: Scenario, switch_reward: float, x_max: int | None,
                            **solve_kwargs) -> SwitchResult:
    """Jointly choose schedule and which HEA connections stay HEA.

    Each retained connection lowers the objective by ``switch_reward``; every
    displacement is bounded by ``x_max`` intervals (None leaves it unbounded).
    Raises :class:`Infeasible` when no schedule meets the bound even with all
    connections switched.
    """
    if not switch_reward > 0:
        raise ValueError("switch_reward must be positive")
    model_scn = scn.with_(switch_reward=switch_reward, max_displacement=x_max)
    sol = solve(model_scn, **solve_kwargs)
    keep = sol.keep or {}
    trace = [TraceRow(0, c.airline, c.id, "keep" if keep.get(c.id, 0) else "switch", sol.max_disp,
                      sol.peak_power_w) for c in scn.schedule.hea_connections]
    return SwitchResult(keep, sol, 0, 1, trace)


def sweep_switch_reward(scn: Scenario, x_max: int, start: float, factor: float = 0.5, min_reward: float = 1e-6,
                        **solve_kwargs) -> SwitchResult:
    """Lower the retention reward geometrically until the unbounded optimum is acceptable."""
    if not 0 < factor < 1:
        raise ValueError("factor must be in (0, 1)")
    reward = start
    calls = 0
    while reward >= min_reward:
        res = airport_switch_optimize(scn, reward, None, **solve_kwargs)
        calls += 1
        if _acceptable(res.solution, x_max):
            res.solver_calls = calls
            return res
        reward *= factor
    raise Infeasible(f"no acceptable schedule for rewards down to {min_reward:g}")


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in trace:
            w.writerow([row.round, row.airline, row.connection_id, row.action, row.max_disp_after,
                        f"{row.peak_power_after:.6g}"])
