"""Deterministic scenario builders shared by the tests."""

from __future__ import annotations

import math

import numpy as np

from heasched import hea_params as hp
from heasched.ingest import ScenarioConfig, build_schedule, generate_synthetic
from heasched.reschedule import Scenario
from heasched.schedule import Connection, HeaDemand, Movement, MovementKind, Schedule, TimeGrid
from heasched.smart_charge import ChargingTask

A, D = MovementKind.ARRIVAL, MovementKind.DEPARTURE


def hea_pair(k, arr_slot, dep_slot, energy, cap, min_connect=0, airline="XX", hea=True):
    mv = (Movement(f"a{k}", A, airline, arr_slot), Movement(f"d{k}", D, airline, dep_slot))
    demand = HeaDemand(energy, cap) if hea else None
    return mv, Connection(f"c{k}", mv[0].id, mv[1].id, min_connect, demand, airline)


def small_scenario(seed: int, switch: bool = False) -> Scenario:
    """Random instance with at most 4 movements, at most 2 HEA connections and T <= 10."""
    rng = np.random.default_rng(seed)
    T = int(rng.integers(5, 11)) if not switch else int(rng.integers(5, 9))
    grid = TimeGrid(T, 60.0)
    shape = int(rng.integers(0, 3))
    movements, conns = [], []

    def pair(k, hea):
        a = int(rng.integers(0, T - 1))
        d = int(rng.integers(a + 1, T))
        energy = float(rng.uniform(0.5, 3.0))
        cap = float(rng.uniform(0.8, 2.5))
        energy = min(energy, 0.9 * cap * (T - 1))
        mv, c = hea_pair(k, a, d, energy, cap, int(rng.integers(0, 3)), airline=f"L{k}", hea=hea)
        movements.extend(mv)
        conns.append(c)

    if shape == 0:
        pair(0, True)
        pair(1, True)
    elif shape == 1:
        pair(0, True)
        pair(1, False)
    else:
        pair(0, True)
        for j in range(int(rng.integers(1, 3))):
            kind = A if rng.random() < 0.5 else D
            movements.append(Movement(f"s{j}", kind, "S", int(rng.integers(0, T))))
    sched = Schedule(grid, tuple(movements), tuple(conns))

    capacity = int(rng.integers(1, 4))
    window = int(rng.integers(1, 4))
    cap_choice = rng.random()
    power_cap = math.inf if cap_choice < 0.3 else float(rng.uniform(0.8, 4.0))
    weight = float(rng.choice([0.0, 0.05, 0.3, 1.0]))
    max_disp = None if rng.random() < 0.7 else int(rng.integers(1, 4))
    reward = float(rng.choice([0.5, 1.5, 4.0])) if switch else None
    return Scenario(sched, capacity, window, power_cap, weight, max_disp, reward)


def smart_instance(seed: int):
    """Up to 5 charging tasks on an hourly grid of at most 12 intervals."""
    rng = np.random.default_rng(seed)
    T = int(rng.integers(2, 13))
    tasks = []
    for k in range(int(rng.integers(1, 6))):
        s = int(rng.integers(0, T))
        e = int(rng.integers(s, T))
        cap = float(rng.uniform(0.5, 3.0)) if rng.random() < 0.5 else math.inf
        energy = float(rng.uniform(0.1, 1.0)) * (e - s + 1) * (cap if math.isfinite(cap) else 2.0)
        tasks.append(ChargingTask(f"t{k}", s, e, energy, cap))
    return tasks, TimeGrid(T, 60.0)


def single_airline_copy(scn: Scenario) -> Scenario:
    s = scn.schedule
    mv = tuple(Movement(m.id, m.kind, "ONE", m.requested_slot) for m in s.movements)
    cs = tuple(Connection(c.id, c.arrival, c.departure, c.min_connect, c.hea, "ONE") for c in s.connections)
    return scn.with_(schedule=Schedule(s.grid, mv, cs))


NEGOTIATION_AIRLINES = ("AA", "B6", "DL", "UA", "AS", "WN", "NK", "F9")


def negotiation_scenario(extra_heavy: bool = True) -> tuple[Scenario, int]:
    """Eight airlines with two HEA connections each, on a 3-hour grid of 2-min intervals.

    One single-aisle connection (airline AA) carries a long next leg with a
    short dwell: under the 4 MW cap its charge cannot be delivered without
    stretching its dwell by far more than the 20-minute acceptability
    threshold.  Every other HEA connection fits at its requested slots.
    Returns the scenario and the threshold in intervals.
    """
    grid = TimeGrid(90, 2.0, 600)
    cfg = hp.HybridConfig(700, 12.5)
    rj, sa = hp.AircraftClass.REGIONAL_JET, hp.AircraftClass.SINGLE_AISLE
    movements, conns = [], []
    k = 0

    def add(airline, arr, dwell, ac, seats, miles, hea=True):
        nonlocal k
        energy = hp.leg_energy(hp.passengers_from_seats(seats), miles, hp.lookup_b0(ac, cfg))
        mv, c = hea_pair(k, arr, arr + dwell, energy, hp.battery_rate_cap(energy), 15, airline, hea)
        movements.extend(mv)
        conns.append(c)
        k += 1

    # two light RJ turns per airline, staggered so their uniform loads barely overlap
    for j, airline in enumerate(NEGOTIATION_AIRLINES):
        add(airline, 2 + 3 * j, 22, rj, 66, 120 + 7 * j)
        add(airline, 28 + 3 * j, 22, rj, 66, 100 + 5 * j)
    if extra_heavy:
        add("AA", 20, 15, sa, 160, 1400)
    # conventional traffic
    for j in range(12):
        add(NEGOTIATION_AIRLINES[j % 8], 1 + 4 * j, 16, rj, 76, 900, hea=False)
    sched = Schedule(grid, tuple(movements), tuple(conns))
    return Scenario(sched, capacity=40, window=30, power_cap_w=4e6, weight=0.0), 10


def jfk_like_scenario(capacity: int = 45, weight: float | None = None, hea: bool = True) -> Scenario:
    """Synthetic airport afternoon: 215 movements, 32 HEA connections, 10:00-16:00 in 2-min intervals."""
    cfg = ScenarioConfig(capacity=capacity)
    recs = generate_synthetic(7, 215, grid=cfg.grid, hea_pairs=32, airlines=8, cfg=cfg.hybrid,
                              min_connect_minutes=cfg.min_connect_minutes)
    parsed = build_schedule(recs, cfg.grid, cfg.min_connect_minutes, cfg.hybrid if hea else None,
                            cfg.load_factor, cfg.c_rate)
    w = cfg.weight if weight is None else weight
    return Scenario(parsed.schedule, cfg.capacity, cfg.window, cfg.p_max_w, w)
