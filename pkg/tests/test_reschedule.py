import math

import highspy
import numpy as np
import pytest

from heasched import reschedule as rs
from heasched import schedule as sch
from heasched.errors import GapNotReached, Infeasible, ModelInfeasiblePrecheck
from heasched.reschedule import RescheduleSolution, Scenario, build_model, solve, verify
from heasched.schedule import Connection, Movement, MovementKind, Schedule, TimeGrid
from heasched.smart_charge import ChargingProfile
from instances import hea_pair, small_scenario
from oracles import enumerate_reschedule

A, D = MovementKind.ARRIVAL, MovementKind.DEPARTURE
HOURS = 60.0


def scenario(movements, connections=(), T=6, capacity=10, window=1, **kw):
    return Scenario(Schedule(TimeGrid(T, HOURS), tuple(movements), tuple(connections)), capacity, window, **kw)


def one_hea(T=6, arr=1, dep=4, energy=3.0, cap=10.0, **kw):
    mv, c = hea_pair(0, arr, dep, energy, cap)
    return scenario(mv, [c], T=T, **kw)


# -- model structure -------------------------------------------------------

def test_model_without_hea():
    model = build_model(scenario([Movement("m", A, "X", 2)]))
    assert model.n_binaries == 6
    assert model.gamma_index.size == 0 and model.p_index.size == 0


def test_model_with_one_hea_connection():
    model = build_model(one_hea())
    assert model.gamma_index.size == 6
    assert model.count_rows("linearization") == 6
    assert model.count_rows("energy") == 1


def test_min_connect_beyond_horizon_fails_precheck():
    mv = (Movement("a", A, "X", 0), Movement("d", D, "X", 5))
    with pytest.raises(ModelInfeasiblePrecheck) as err:
        build_model(scenario(mv, [Connection("c", "a", "d", 7)]))
    assert err.value.family == "connect"


def test_linearization_exact_exhaustive():
    """With Y fixed to any connect-feasible pair, no charge can fall outside the dwell indicator."""
    for T in range(2, 9):
        for min_connect in range(0, 2):
            mv, c = hea_pair(0, 0, T - 1, 1.0, 100.0, min_connect)
            scn = scenario(mv, [c], T=T)
            model = build_model(scn)
            h = rs._highs(model, integer=False)
            n = model.n_cols
            h.changeColsCost(n, np.arange(n, dtype=np.int32), np.zeros(n))
            h.changeObjectiveOffset(0.0)
            for a in range(T):
                for d in range(a + min_connect, T):
                    Y = sch.encode_allocation({"a0": a, "d0": d}, T).Y.astype(float)
                    cols = model.y_index.ravel().astype(np.int32)
                    h.changeColsBounds(cols.size, cols, Y.ravel(), Y.ravel())
                    dwell = Y[1] - Y[0]
                    assert set(dwell.tolist()) <= {0.0, 1.0}
                    outside = model.gamma_index[0][dwell == 0]
                    cost = np.zeros(n)
                    cost[outside] = -1.0
                    h.changeColsCost(n, np.arange(n, dtype=np.int32), cost)
                    h.run()
                    status = h.getModelStatus()
                    if d == a:
                        assert status == highspy.HighsModelStatus.kInfeasible
                        continue
                    assert status == highspy.HighsModelStatus.kOptimal
                    gamma = np.asarray(h.getSolution().col_value)[model.gamma_index[0]]
                    assert np.allclose(dwell * gamma, gamma, atol=1e-9)
                    assert h.getInfo().objective_function_value == pytest.approx(0.0, abs=1e-9)


# -- solve examples --------------------------------------------------------

def test_two_arrivals_same_slot():
    scn = scenario([Movement("a", A, "X", 1), Movement("b", A, "X", 1)], T=4, capacity=1, window=1)
    sol = solve(scn)
    # a window spans L + 1 slots, so the two movements end up two slots apart
    assert (sol.max_disp, sol.total_disp, sol.objective) == (1, 2, 3.0)
    assert enumerate_reschedule(scn)[0] == 3.0
    assert verify(sol, scn).passed


def test_abundant_capacity_keeps_requests():
    mv = [Movement(f"m{k}", A if k % 2 else D, "X", k) for k in range(5)]
    sol = solve(scenario(mv, capacity=5, window=1))
    assert sol.objective == 0 and sol.slots == {m.id: m.requested_slot for m in mv}


def test_single_hea_w0_keeps_request():
    scn = one_hea(power_cap_w=math.inf)
    sol = solve(scn)
    assert sol.objective == 0 and sol.slots == {"a0": 1, "d0": 4}
    assert verify(sol, scn).passed


def test_single_hea_positive_weight_charges_uniformly():
    scn = one_hea(weight=0.01)
    sol = solve(scn)
    assert sol.slots == {"a0": 1, "d0": 4}
    assert sol.profile.rate("c0")[2:5] == pytest.approx([1.0, 1.0, 1.0])
    assert sol.flatten_term == pytest.approx(3.0)


def test_power_cap_stretches_dwell():
    # 3 Wh within 3 hourly intervals needs 1 W; a 0.75 W cap forces a 4-interval dwell
    scn = one_hea(power_cap_w=0.75)
    sol = solve(scn)
    assert sol.total_disp == 1 and sol.peak_power_w <= 0.75 + 1e-9
    assert verify(sol, scn).passed


@pytest.mark.parametrize("seed", range(40))
def test_matches_enumeration(seed):
    switch = seed % 4 == 3
    scn = small_scenario(seed, switch=switch)
    ref = enumerate_reschedule(scn, keep_options=switch)
    if ref is None:
        with pytest.raises(Infeasible):
            solve(scn, gap_tolerance=1e-9)
        return
    sol = solve(scn, gap_tolerance=1e-9)
    assert sol.objective == pytest.approx(ref[0], rel=1e-6, abs=1e-9)
    assert verify(sol, scn).passed
    assert sol.peak_power_w <= scn.power_cap_w * (1 + 1e-6)


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4, 5, 8, 9, 12, 13])
def test_outer_approximation_agrees(seed):
    scn = small_scenario(seed)
    ref = enumerate_reschedule(scn)
    sol = solve(scn, gap_tolerance=1e-7, method="oa")
    assert sol.objective == pytest.approx(ref[0], rel=1e-6, abs=1e-9)
    assert verify(sol, scn).passed


@pytest.mark.parametrize("seed", range(10))
def test_conventional_instances_match_enumeration(seed):
    rng = np.random.default_rng(500 + seed)
    T = int(rng.integers(3, 8))
    mv = [Movement(f"m{k}", A if rng.random() < 0.5 else D, "X", int(rng.integers(0, T)))
          for k in range(int(rng.integers(1, 5)))]
    scn = scenario(mv, T=T, capacity=int(rng.integers(1, 3)), window=int(rng.integers(1, 3)))
    ref = enumerate_reschedule(scn)
    if ref is None:
        with pytest.raises(Infeasible):
            solve(scn)
        return
    assert solve(scn).objective == ref[0]


@pytest.mark.parametrize("seed", range(6))
def test_displacement_non_increasing_in_capacity(seed):
    base = small_scenario(100 + seed).with_(weight=0.0, power_cap_w=math.inf)
    values = []
    for R in range(1, 5):
        try:
            sol = solve(base.with_(capacity=R))
        except Infeasible:
            values.append(math.inf)
            continue
        values.append(sol.max_disp + sol.total_disp)
    assert values == sorted(values, reverse=True)


# -- infeasibility and budgets ---------------------------------------------

def test_diagnose_capacity():
    mv = [Movement(f"m{k}", A, "X", 0) for k in range(3)]
    with pytest.raises(Infeasible) as err:
        solve(scenario(mv, T=2, capacity=1, window=1))
    assert err.value.family == "capacity"


def test_diagnose_battery():
    mv, c = hea_pair(0, 2, 3, 5.0, 1.0)
    with pytest.raises(Infeasible) as err:
        solve(scenario(mv, [c], T=7, max_displacement=1))
    assert err.value.family == "battery"


def test_diagnose_airport_power():
    m0, c0 = hea_pair(0, 0, 2, 2.0, 1.0)
    m1, c1 = hea_pair(1, 0, 2, 2.0, 1.0)
    with pytest.raises(Infeasible) as err:
        solve(scenario(m0 + m1, [c0, c1], T=3, power_cap_w=1.5, max_displacement=0))
    assert err.value.family == "airport power"


def test_zero_power_cap_with_hea_fails_precheck():
    with pytest.raises(ModelInfeasiblePrecheck) as err:
        solve(one_hea(power_cap_w=0.0))
    assert err.value.family == "airport power"


def gap_instance():
    mv = [Movement(f"m{k}", A, "X", 3) for k in range(6)]
    return scenario(mv, T=12, capacity=2, window=2)


ROUGH = {"m0": 0, "m1": 1, "m2": 5, "m3": 6, "m4": 9, "m5": 10}


def test_node_budget_returns_flagged_incumbent():
    scn = gap_instance()
    sol = solve(scn, node_limit=1, initial=ROUGH)
    assert sol.status == "gap_not_reached" and sol.optimality_gap > 1e-6
    assert verify(sol, scn).passed


def test_node_budget_can_raise():
    with pytest.raises(GapNotReached) as err:
        solve(gap_instance(), node_limit=1, initial=ROUGH, raise_on_gap=True)
    assert isinstance(err.value.incumbent, RescheduleSolution)


def test_node_budget_without_incumbent():
    with pytest.raises(GapNotReached) as err:
        solve(gap_instance(), node_limit=1)
    assert err.value.incumbent is None


def test_initial_solution_seeds_incumbent():
    scn = gap_instance()
    first = solve(scn)
    again = solve(scn, initial=first)
    assert again.objective == first.objective


# -- verify ----------------------------------------------------------------

def test_verify_flags_capacity_violation():
    scn = scenario([Movement("a", A, "X", 1), Movement("b", A, "X", 1)], T=4, capacity=1, window=1)
    sol = rs.evaluate(scn.with_(capacity=2), {"a": 1, "b": 1})
    report = verify(sol, scn)
    assert report.failed() == ["capacity"]
    assert "window" in report["capacity"].detail


def test_verify_flags_scaled_charging():
    scn = one_hea(power_cap_w=1.5)
    sol = solve(scn)
    doubled = ChargingProfile(sol.profile.grid, sol.profile.task_ids, sol.profile.rates * 2)
    bad = RescheduleSolution(sol.allocation, doubled, sol.displacements, sol.objective, sol.max_disp,
                             sol.total_disp, sol.flatten_term, 0.0, sol.objective)
    failed = verify(bad, scn).failed()
    assert "energy" in failed and "airport power" in failed


def test_default_weight():
    assert rs.default_weight(20e6) == pytest.approx(1 / 4e14)
