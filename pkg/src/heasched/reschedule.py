"""Joint flight rescheduling and HEA charging.

Decision variables are the step-encoded allocations ``Y``, the per-connection
charging rates ``gamma`` and the aggregate charging power ``P``.  The
objective is

    max_i max(X+_i, X-_i) + sum_i (X+_i + X-_i) + w * sum_t P_t**2

subject to the movement-capacity, connecting-time, energy, airport-power and
battery-rate constraints.  The bilinear terms ``(Y_dep - Y_arr) * gamma`` are
replaced by ``gamma`` together with ``gamma <= Qcap * (Y_dep - Y_arr)``, which
is exact because the dwell indicator is binary.

Two exact solvers share the model:

* ``"bnb"`` -- best-first branch-and-bound over the binaries with convex-QP
  node relaxations;
* ``"oa"`` -- MILP with an outer approximation of the quadratic term, refined
  by tangent cuts until the requested gap is certified.

Both evaluate incumbents exactly by fixing the slots and computing the
flattest charging profile for them.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Mapping

import highspy
import numpy as np
import scipy.sparse as sp

from . import schedule as sch
from .errors import GapNotReached, Infeasible, ModelInfeasiblePrecheck
from .schedule import AllocationMatrix, Connection, Displacement, Schedule
from .smart_charge import ChargingProfile, ChargingTask, check_profile, solve_smart

log = logging.getLogger(__name__)

INT_TOL = 1e-6
BNB_MAX_BINARIES = 600
FAMILIES = ("connect", "capacity", "battery", "airport power")


@dataclass(frozen=True)
class Scenario:
    """Airport capacity ``capacity`` movements per ``window + 1`` intervals, grid cap in W.

    ``weight`` is in 1/W^2.  ``max_displacement`` (intervals) optionally
    bounds every X+ and X-.  ``switch_reward`` enables the HEA-retention
    variant: each HEA connection gets a binary keep decision rewarded by this
    amount in the objective.
    """

    schedule: Schedule
    capacity: int
    window: int
    power_cap_w: float = math.inf
    weight: float = 0.0
    max_displacement: int | None = None
    switch_reward: float | None = None

    def __post_init__(self):
        if self.capacity < 1 or self.window < 1:
            raise ValueError("capacity and window must be >= 1")
        if self.power_cap_w < 0 or self.weight < 0:
            raise ValueError("power cap and weight must be non-negative")
        if self.max_displacement is not None and self.max_displacement < 0:
            raise ValueError("max_displacement must be >= 0")

    @property
    def grid(self):
        return self.schedule.grid

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


def default_weight(power_cap_w: float) -> float:
    """``1 / P**2``: a full-cap interval costs as much as one interval of displacement."""
    return 1.0 / power_cap_w ** 2


@dataclass
class RescheduleSolution:
    allocation: AllocationMatrix
    profile: ChargingProfile
    displacements: dict[str, Displacement]
    objective: float
    max_disp: int
    total_disp: int
    flatten_term: float
    optimality_gap: float
    lower_bound: float
    status: str = "optimal"
    method: str = ""
    nodes: int = 0
    wall_time: float = 0.0
    keep: dict[str, int] | None = None

    @property
    def slots(self) -> dict[str, int]:
        return self.allocation.slots()

    @property
    def peak_power_w(self) -> float:
        return self.profile.peak

    @property
    def gap_reached(self) -> bool:
        return self.status == "optimal"

    def summary(self) -> dict:
        return {
            "objective": self.objective,
            "max_disp": self.max_disp,
            "total_disp": self.total_disp,
            "flatten_term_w2": self.flatten_term,
            "peak_power_w": self.peak_power_w,
            "optimality_gap": self.optimality_gap,
            "lower_bound": self.lower_bound,
            "status": self.status,
            "method": self.method,
            "nodes": self.nodes,
            "wall_time_s": self.wall_time,
            "hea_kept": None if self.keep is None else sum(self.keep.values()),
        }


# ---------------------------------------------------------------------------
# model


@dataclass
class RescheduleModel:
    """Matrix form: minimize ``c x + offset + 0.5 x' diag(q) x`` s.t. ``lo <= A x <= hi``."""

    scenario: Scenario
    n_cols: int
    cost: np.ndarray
    offset: float
    hess_diag: np.ndarray
    col_lo: np.ndarray
    col_hi: np.ndarray
    A: sp.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    binary: np.ndarray
    row_family: list[str]
    power_scale: float
    y_index: np.ndarray
    gamma_index: np.ndarray
    p_index: np.ndarray
    m_index: int
    z_index: np.ndarray
    hea: tuple[Connection, ...]
    rate_caps: np.ndarray
    branch_order: np.ndarray = field(default=None)

    def count_rows(self, family: str) -> int:
        return sum(1 for f in self.row_family if f == family)

    @property
    def n_binaries(self) -> int:
        return int(self.binary.sum())

    @property
    def weight_scaled(self) -> float:
        return self.scenario.weight * self.power_scale ** 2

    def objective_integral(self) -> bool:
        return self.scenario.weight == 0 and len(self.z_index) == 0


def _effective_caps(scn: Scenario, hea) -> np.ndarray:
    dt = scn.grid.dt_hours
    caps = []
    for c in hea:
        caps.append(min(c.hea.rate_cap_w, c.hea.energy_wh / dt, scn.power_cap_w))
    return np.array(caps, dtype=float)


def precheck(scn: Scenario):
    """Raise :class:`ModelInfeasiblePrecheck` for structurally impossible inputs."""
    T = scn.grid.T
    dt = scn.grid.dt_hours
    for c in scn.schedule.connections:
        if c.min_connect > T - 1:
            raise ModelInfeasiblePrecheck(
                f"connection {c.id!r}: minimum connect {c.min_connect} exceeds the horizon", family="connect")
        if c.is_hea and scn.switch_reward is None:
            longest = T - 1
            if c.hea.rate_cap_w * longest * dt < c.hea.energy_wh * (1 - 1e-9):
                raise ModelInfeasiblePrecheck(
                    f"connection {c.id!r}: energy cannot be delivered under the rate cap within the horizon",
                    family="battery")
    if scn.switch_reward is None and scn.power_cap_w <= 0 and scn.schedule.hea_connections:
        raise ModelInfeasiblePrecheck("HEA connections present but the airport power cap is zero",
                                      family="airport power")


def build_model(scn: Scenario) -> RescheduleModel:
    precheck(scn)
    sched = scn.schedule
    T = sched.grid.T
    dt = sched.grid.dt_hours
    n_mov = len(sched.movements)
    hea = sched.hea_connections
    n_hea = len(hea)
    with_z = scn.switch_reward is not None and n_hea > 0

    caps_w = _effective_caps(scn, hea) if n_hea else np.zeros(0)
    # unit of power inside the model; keeps rates and weights near 1
    scale = float(caps_w.max()) if n_hea and caps_w.max() > 0 else 1e6

    col = 0
    y_index = np.arange(n_mov * T).reshape(n_mov, T)
    col += n_mov * T
    gamma_index = (col + np.arange(n_hea * T)).reshape(n_hea, T)
    col += n_hea * T
    p_index = col + np.arange(T) if n_hea else np.zeros(0, dtype=int)
    col += len(p_index)
    m_index = col
    col += 1
    z_index = col + np.arange(n_hea) if with_z else np.zeros(0, dtype=int)
    col += len(z_index)
    n_cols = col

    cost = np.zeros(n_cols)
    hess = np.zeros(n_cols)
    lo = np.zeros(n_cols)
    hi = np.ones(n_cols)
    binary = np.zeros(n_cols, dtype=bool)
    binary[y_index.ravel()] = True
    binary[z_index] = True

    offset = 0.0
    for i, mv in enumerate(sched.movements):
        r = mv.requested_slot
        cost[y_index[i, r + 1:]] = 1.0       # X+ = sum_{t>r} Y
        cost[y_index[i, : r + 1]] = -1.0     # X- = (r+1) - sum_{t<=r} Y
        offset += r + 1
        lo[y_index[i, 0]] = 1.0
        if scn.max_displacement is not None:
            xb = scn.max_displacement
            hi[y_index[i, r + xb + 1:]] = 0.0
            lo[y_index[i, : max(r - xb + 1, 0)]] = 1.0
    cost[m_index] = 1.0
    lo[m_index], hi[m_index] = 0.0, float(T)

    caps = caps_w / scale
    pcap = scn.power_cap_w / scale if math.isfinite(scn.power_cap_w) else np.inf
    for k in range(n_hea):
        lo[gamma_index[k]] = 0.0
        hi[gamma_index[k]] = caps[k]
    if n_hea:
        lo[p_index] = 0.0
        hi[p_index] = pcap
        hess[p_index] = 2.0 * scn.weight * scale ** 2
    if with_z:
        cost[z_index] = -scn.switch_reward

    rows, cols, vals, rlo, rhi, fam = [], [], [], [], [], []
    r_count = 0

    def add_row(cs, vs, low, high, family):
        nonlocal r_count
        rows.extend([r_count] * len(cs))
        cols.extend(cs)
        vals.extend(vs)
        rlo.append(low)
        rhi.append(high)
        fam.append(family)
        r_count += 1

    for i in range(n_mov):
        for t in range(T - 1):
            add_row([y_index[i, t + 1], y_index[i, t]], [1.0, -1.0], -np.inf, 0.0, "Y.def")

    for t in range(T):
        end = min(t + scn.window, T - 1)
        cs, vs = [], []
        for i in range(n_mov):
            cs.append(y_index[i, t])
            vs.append(1.0)
            if end + 1 < T:
                cs.append(y_index[i, end + 1])
                vs.append(-1.0)
        add_row(cs, vs, -np.inf, float(scn.capacity), "capacity")

    for c in sched.connections:
        a, d = sched.position(c.arrival), sched.position(c.departure)
        add_row(list(y_index[d]) + list(y_index[a]), [1.0] * T + [-1.0] * T,
                float(c.min_connect), np.inf, "connect")

    for k, c in enumerate(hea):
        a, d = sched.position(c.arrival), sched.position(c.departure)
        e_scaled = c.hea.energy_wh / scale
        if with_z:
            add_row(list(gamma_index[k]) + [z_index[k]], [dt] * T + [-e_scaled], 0.0, 0.0, "energy")
        else:
            add_row(list(gamma_index[k]), [dt] * T, e_scaled, e_scaled, "energy")
        for t in range(T):
            add_row([gamma_index[k, t], y_index[d, t], y_index[a, t]], [1.0, -caps[k], caps[k]],
                    -np.inf, 0.0, "linearization")
            if with_z:
                add_row([gamma_index[k, t], z_index[k]], [1.0, -caps[k]], -np.inf, 0.0, "switch")
    if n_hea:
        for t in range(T):
            add_row([p_index[t]] + list(gamma_index[:, t]), [1.0] + [-1.0] * n_hea, 0.0, 0.0, "aggregate")

    for i, mv in enumerate(sched.movements):
        r = mv.requested_slot
        late = list(y_index[i, r + 1:])
        if late:
            add_row(late + [m_index], [1.0] * len(late) + [-1.0], -np.inf, 0.0, "epigraph")
        early = list(y_index[i, : r + 1])
        add_row(early + [m_index], [-1.0] * len(early) + [-1.0], -np.inf, -float(r + 1), "epigraph")

    A = sp.csr_matrix((vals, (rows, cols)), shape=(r_count, n_cols))
    # branching priority: movement order, then time; keep decisions last
    order = np.concatenate([y_index.ravel(), z_index]).astype(int)
    return RescheduleModel(scn, n_cols, cost, offset, hess, lo, hi, A, np.array(rlo), np.array(rhi),
                           binary, fam, scale, y_index, gamma_index, p_index, m_index, z_index, hea, caps,
                           branch_order=order)


# ---------------------------------------------------------------------------
# exact evaluation of a fixed allocation


def charging_tasks(scn: Scenario, slots: Mapping[str, int], keep: Mapping[str, int] | None = None):
    tasks = []
    for c in scn.schedule.hea_connections:
        if keep is not None and not keep.get(c.id, 1):
            continue
        first, last = sch.dwell_window(slots[c.arrival], slots[c.departure])
        tasks.append(ChargingTask(c.id, first, last, c.hea.energy_wh, c.hea.rate_cap_w))
    return tasks


def fixed_slot_profile(scn: Scenario, slots: Mapping[str, int], keep=None,
                       tolerance: float = 1e-9) -> ChargingProfile:
    """Flattest charging for fixed slots; raises :class:`Infeasible` if none exists."""
    tasks = charging_tasks(scn, slots, keep)
    for t in tasks:
        if t.length <= 0:
            raise Infeasible(f"connection {t.id!r} has no dwell interval", family="battery", task=t.id)
    cap = scn.power_cap_w if math.isfinite(scn.power_cap_w) else None
    return solve_smart(tasks, scn.grid, tolerance=tolerance, power_cap=cap)


def _displacements(sched: Schedule, slots):
    return {m.id: sch.displacement(m.requested_slot, slots[m.id]) for m in sched.movements}


def evaluate(scn: Scenario, slots: Mapping[str, int], keep=None) -> RescheduleSolution:
    """Exact objective for fixed slots (and keep decisions); raises Infeasible."""
    sched = scn.schedule
    alloc = sch.encode_allocation({m.id: slots[m.id] for m in sched.movements}, sched.grid.T)
    if sch.check_capacity(alloc, scn.capacity, scn.window):
        raise Infeasible("capacity violated", family="capacity")
    for c in sched.connections:
        if not sch.check_connect(alloc, c):
            raise Infeasible(f"connection {c.id!r} violates minimum connect", family="connect")
    disp = _displacements(sched, slots)
    if scn.max_displacement is not None and any(
            max(d.late, d.early) > scn.max_displacement for d in disp.values()):
        raise Infeasible("displacement bound exceeded", family="displacement")
    profile = fixed_slot_profile(scn, slots, keep)
    max_d = max((max(d.late, d.early) for d in disp.values()), default=0)
    total = sum(d.total for d in disp.values())
    flat = profile.objective
    obj = max_d + total + scn.weight * flat
    if keep is not None and scn.switch_reward is not None:
        obj -= scn.switch_reward * sum(keep.values())
    return RescheduleSolution(alloc, profile, disp, obj, max_d, total, flat, 0.0, obj, keep=dict(keep) if keep else keep)


def _relative_gap(ub: float, lb: float) -> float:
    if not math.isfinite(ub):
        return math.inf
    return max(ub - lb, 0.0) / max(abs(ub), 1.0)


def _decode(model: RescheduleModel, x: np.ndarray):
    sched = model.scenario.schedule
    Y = np.rint(x[model.y_index]).astype(int)
    slots = {m.id: int(Y[i].sum()) - 1 for i, m in enumerate(sched.movements)}
    keep = None
    if len(model.z_index):
        z = np.rint(x[model.z_index]).astype(int)
        keep = {c.id: int(z[k]) for k, c in enumerate(model.hea)}
    return slots, keep


def _try_evaluate(scn, slots, keep):
    try:
        return evaluate(scn, slots, keep)
    except Infeasible:
        return None


def _encode_full(model: RescheduleModel, sol: RescheduleSolution) -> np.ndarray:
    """Column vector for an evaluated solution (used to seed HiGHS)."""
    x = np.zeros(model.n_cols)
    sched = model.scenario.schedule
    slots = sol.slots
    for i, m in enumerate(sched.movements):
        x[model.y_index[i, : slots[m.id] + 1]] = 1.0
    x[model.m_index] = sol.max_disp
    ids = list(sol.profile.task_ids)
    for k, c in enumerate(model.hea):
        if c.id in ids:
            x[model.gamma_index[k]] = sol.profile.rates[ids.index(c.id)] / model.power_scale
    if len(model.p_index):
        x[model.p_index] = x[model.gamma_index].sum(axis=0)
    if len(model.z_index):
        for k, c in enumerate(model.hea):
            x[model.z_index[k]] = (sol.keep or {}).get(c.id, 1)
    return x


# ---------------------------------------------------------------------------
# HiGHS plumbing


def _highs(model: RescheduleModel, integer: bool, extra_cols=None, time_limit=None, threads=None):
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("random_seed", 0)
    if threads:
        h.setOptionValue("threads", threads)
    if time_limit is not None:
        h.setOptionValue("time_limit", float(time_limit))
    lp = highspy.HighsLp()
    A = model.A.tocsc()
    n = model.n_cols
    lp.num_col_ = n
    lp.num_row_ = A.shape[0]
    lp.col_cost_ = model.cost.copy()
    lp.col_lower_ = model.col_lo.copy()
    lp.col_upper_ = model.col_hi.copy()
    lp.row_lower_ = np.where(np.isfinite(model.row_lo), model.row_lo, -highspy.kHighsInf)
    lp.row_upper_ = np.where(np.isfinite(model.row_hi), model.row_hi, highspy.kHighsInf)
    lp.col_upper_ = np.where(np.isfinite(lp.col_upper_), lp.col_upper_, highspy.kHighsInf)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = A.indptr.astype(np.int32)
    lp.a_matrix_.index_ = A.indices.astype(np.int32)
    lp.a_matrix_.value_ = A.data.astype(float)
    lp.offset_ = model.offset
    if integer:
        lp.integrality_ = [highspy.HighsVarType.kInteger if b else highspy.HighsVarType.kContinuous
                           for b in model.binary]
        h.passModel(lp)
    else:
        hm = highspy.HighsModel()
        hm.lp_ = lp
        nz = np.flatnonzero(model.hess_diag)
        if nz.size:
            hs = highspy.HighsHessian()
            hs.dim_ = n
            hs.format_ = highspy.HessianFormat.kTriangular
            start = np.zeros(n + 1, dtype=np.int32)
            start[1:] = np.cumsum(model.hess_diag != 0)
            hs.start_ = start
            hs.index_ = nz.astype(np.int32)
            hs.value_ = model.hess_diag[nz]
            hm.hessian_ = hs
        h.passModel(hm)
    return h


# ---------------------------------------------------------------------------
# branch and bound


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    lo: np.ndarray = field(compare=False)
    hi: np.ndarray = field(compare=False)


def _solve_bnb(model: RescheduleModel, gap: float, node_limit: int, time_limit, incumbent):
    scn = model.scenario
    h = _highs(model, integer=False)
    # the active-set QP solver can stall on degenerate nodes; cap its work
    h.setOptionValue("qp_iteration_limit", max(10_000, 20 * model.n_cols))
    bin_idx = np.flatnonzero(model.binary)
    order = model.branch_order
    rank = np.empty(model.n_cols, dtype=int)
    rank[order] = np.arange(order.size)
    T = scn.grid.T
    y_pos = {int(c): (i, t) for (i, t), c in np.ndenumerate(model.y_index)}
    integral_obj = model.objective_integral()

    best = incumbent
    ub = best.objective if best else math.inf
    start = time.perf_counter()
    seq = 0
    heap: list[_Node] = []
    root = _Node(-math.inf, seq, model.col_lo[bin_idx].copy(), model.col_hi[bin_idx].copy())
    heapq.heappush(heap, root)
    nodes = 0
    global_lb = -math.inf
    pos_of = {int(c): k for k, c in enumerate(bin_idx)}
    seen = set()

    while heap:
        global_lb = heap[0].bound
        if _relative_gap(ub, global_lb) <= gap:
            break
        if nodes >= node_limit or (time_limit is not None and time.perf_counter() - start > time_limit):
            break
        node = heapq.heappop(heap)
        if node.bound >= ub - 1e-9:
            continue
        nodes += 1
        h.changeColsBounds(len(bin_idx), bin_idx.astype(np.int32), node.lo, node.hi)
        status = _run_relaxation(h)
        if status == highspy.HighsModelStatus.kInfeasible:
            continue
        if status != highspy.HighsModelStatus.kOptimal:
            # no usable relaxation: keep the parent bound and split on the first free binary
            log.debug("node relaxation failed (%s); branching blind", h.modelStatusToString(status))
            free = np.flatnonzero(node.lo < node.hi)
            if not free.size:
                cand = _try_evaluate(scn, *_decode(model, _fixed_point(model, bin_idx, node.lo)))
                if cand is not None and cand.objective < ub - 1e-12:
                    best, ub = cand, cand.objective
                continue
            col = int(bin_idx[free[np.argmin(rank[bin_idx[free]])]])
            for lo_c, hi_c in _split(model, y_pos, pos_of, node, col):
                seq += 1
                heapq.heappush(heap, _Node(node.bound, seq, lo_c, hi_c))
            continue
        x = np.asarray(h.getSolution().col_value)
        bound = h.getInfo().objective_function_value
        if integral_obj:
            bound = math.ceil(bound - 1e-6)
        bound = max(bound, node.bound)
        if bound >= ub - 1e-9:
            continue

        # rounding heuristic: nearest slot per movement
        xr = x.copy()
        xr[model.y_index] = _round_steps(x[model.y_index])
        if len(model.z_index):
            xr[model.z_index] = np.rint(x[model.z_index])
        key = tuple(np.rint(xr[bin_idx]).astype(np.int8))
        if key not in seen:
            seen.add(key)
            cand = _try_evaluate(scn, *_decode(model, xr))
            if cand is not None and cand.objective < ub - 1e-12:
                best, ub = cand, cand.objective

        vals = x[bin_idx]
        frac = np.abs(vals - np.rint(vals))
        fractional = frac > INT_TOL
        if not fractional.any():
            continue  # integral relaxation: its rounding was evaluated above
        cand_cols = bin_idx[fractional]
        dist = np.abs(x[cand_cols] - 0.5)
        pick = np.lexsort((rank[cand_cols], np.round(dist, 9)))[0]
        col = int(cand_cols[pick])
        for lo_c, hi_c in _split(model, y_pos, pos_of, node, col):
            seq += 1
            heapq.heappush(heap, _Node(bound, seq, lo_c, hi_c))
    if not heap:
        global_lb = ub
    return best, global_lb, nodes


def _run_relaxation(h):
    """Solve the node QP; retry once from a cold start if the warm start stalls."""
    h.run()
    status = h.getModelStatus()
    if status in (highspy.HighsModelStatus.kOptimal, highspy.HighsModelStatus.kInfeasible):
        return status
    h.clearSolver()
    h.run()
    return h.getModelStatus()


def _split(model, y_pos, pos_of, node, col):
    """Children bounds for branching on ``col``; step rows propagate the fixing."""
    k = pos_of[col]
    for value in (0.0, 1.0):
        lo_c, hi_c = node.lo.copy(), node.hi.copy()
        if col in y_pos:
            i, t = y_pos[col]
            row = model.y_index[i]
            ks = [pos_of[int(c)] for c in (row[t:] if value == 0.0 else row[: t + 1])]
            if value == 0.0:
                hi_c[ks] = 0.0
            else:
                lo_c[ks] = 1.0
            if (lo_c[ks] > hi_c[ks]).any():
                continue
        else:
            lo_c[k] = hi_c[k] = value
        yield lo_c, hi_c


def _fixed_point(model, bin_idx, values):
    x = np.zeros(model.n_cols)
    x[bin_idx] = values
    return x


def _round_steps(Y: np.ndarray) -> np.ndarray:
    slots = np.clip(np.rint(Y.sum(axis=1)).astype(int) - 1, 0, Y.shape[1] - 1)
    return (np.arange(Y.shape[1])[None, :] <= slots[:, None]).astype(float)


# ---------------------------------------------------------------------------
# outer approximation


def _solve_oa(model: RescheduleModel, gap: float, time_limit, incumbent, max_rounds: int = 60,
              tangents: int = 16):
    scn = model.scenario
    start = time.perf_counter()
    w = model.weight_scaled
    T = scn.grid.T
    quad = w > 0 and len(model.p_index) > 0

    base = _highs(model, integer=True)
    s_cols = None
    if quad:
        # epigraph columns s_t >= P_t^2 enter with cost w
        s_cols = np.arange(model.n_cols, model.n_cols + T)
        base.addVars(T, np.zeros(T), np.full(T, highspy.kHighsInf))
        base.changeColsCost(T, s_cols.astype(np.int32), np.full(T, w))
        pmax = float(np.nanmin([model.col_hi[model.p_index[0]], model.rate_caps.sum()]))
        if not math.isfinite(pmax) or pmax <= 0:
            pmax = max(float(model.rate_caps.sum()), 1.0)
        points = np.linspace(0.0, pmax, tangents + 1)
        for a in points:
            _add_tangents(base, s_cols, model.p_index, np.full(T, a))
    base.setOptionValue("mip_rel_gap", max(gap * 0.25, 1e-9))

    best = incumbent
    ub = best.objective if best else math.inf
    lb = -math.inf
    rounds = 0
    while True:
        rounds += 1
        if time_limit is not None:
            remaining = time_limit - (time.perf_counter() - start)
            if remaining <= 0:
                break
            base.setOptionValue("time_limit", remaining)
        if best is not None:
            x0 = _encode_full(model, best)
            if quad:
                x0 = np.concatenate([x0, x0[model.p_index] ** 2])
            sol = highspy.HighsSolution()
            sol.col_value = list(x0)
            sol.value_valid = True
            base.setSolution(sol)
        base.run()
        status = base.getModelStatus()
        info = base.getInfo()
        if status == highspy.HighsModelStatus.kInfeasible:
            if best is None:
                return None, math.inf, rounds
            lb = ub
            break
        has_sol = info.primal_solution_status == 2
        bound = info.mip_dual_bound if math.isfinite(info.mip_dual_bound) else -math.inf
        if model.objective_integral():
            bound = math.ceil(bound - 1e-6)
        lb = max(lb, bound)
        if not has_sol:
            break
        x = np.asarray(base.getSolution().col_value)
        cand = _try_evaluate(scn, *_decode(model, x[: model.n_cols]))
        if cand is not None and cand.objective < ub - 1e-12:
            best, ub = cand, cand.objective
        if _relative_gap(ub, lb) <= gap or status != highspy.HighsModelStatus.kOptimal:
            break
        if not quad or rounds >= max_rounds:
            break
        p = x[model.p_index]
        s = x[s_cols]
        points = [p]
        if cand is not None:
            points.append(cand.profile.aggregate / model.power_scale)
        added = 0
        for pt in points:
            mask = s < pt ** 2 - 1e-9 if pt is p else np.ones(T, bool)
            if mask.any():
                _add_tangents(base, s_cols[mask], model.p_index[mask], pt[mask])
                added += int(mask.sum())
        if added == 0:
            break
    return best, lb, rounds


def _add_tangents(h, s_cols, p_cols, at):
    # s >= 2 a P - a^2
    n = len(s_cols)
    starts = np.arange(0, 2 * n, 2, dtype=np.int32)
    idx = np.empty(2 * n, dtype=np.int32)
    idx[0::2] = s_cols
    idx[1::2] = p_cols
    val = np.empty(2 * n)
    val[0::2] = 1.0
    val[1::2] = -2.0 * at
    h.addRows(n, -(at ** 2), np.full(n, highspy.kHighsInf), 2 * n, starts, idx, val)


# ---------------------------------------------------------------------------
# public entry points


def solve(scn: Scenario, gap_tolerance: float = 1e-6, method: str = "auto", node_limit: int = 200_000,
          time_limit: float | None = None, initial: Mapping[str, int] | RescheduleSolution | None = None,
          initial_keep: Mapping[str, int] | None = None, raise_on_gap: bool = False) -> RescheduleSolution:
    """Solve the joint rescheduling and charging problem to ``gap_tolerance``.

    ``initial`` seeds the incumbent with given slots (or a previous solution).
    When the budget runs out the incumbent is returned with ``status``
    ``"gap_not_reached"``; set ``raise_on_gap`` to raise :class:`GapNotReached`
    instead.
    """
    t0 = time.perf_counter()
    model = build_model(scn)
    if method == "auto":
        method = "bnb" if model.n_binaries <= BNB_MAX_BINARIES else "oa"

    incumbent = None
    if initial is not None:
        slots = initial.slots if isinstance(initial, RescheduleSolution) else dict(initial)
        keep = initial_keep
        if keep is None and isinstance(initial, RescheduleSolution):
            keep = initial.keep
        if keep is None and scn.switch_reward is not None:
            keep = {c.id: 1 for c in model.hea}
        if keep is not None and scn.switch_reward is not None:
            keep = {c.id: int(keep.get(c.id, 0)) for c in model.hea}
        incumbent = _try_evaluate(scn, slots, keep)
    if incumbent is None:
        keep = {c.id: 1 for c in model.hea} if scn.switch_reward is not None else None
        incumbent = _try_evaluate(scn, scn.schedule.requested(), keep)

    if method == "bnb":
        best, lb, nodes = _solve_bnb(model, gap_tolerance, node_limit, time_limit, incumbent)
    elif method == "oa":
        best, lb, nodes = _solve_oa(model, gap_tolerance, time_limit, incumbent)
    else:
        raise ValueError(f"unknown method {method!r}")

    if best is None:
        if lb == math.inf:
            raise diagnose_infeasibility(scn)
        raise GapNotReached("no feasible solution found within the search budget")

    best.lower_bound = min(lb, best.objective)
    best.optimality_gap = _relative_gap(best.objective, best.lower_bound)
    best.method = method
    best.nodes = nodes
    best.wall_time = time.perf_counter() - t0
    if best.optimality_gap > gap_tolerance:
        best.status = "gap_not_reached"
        log.warning("gap %.3g above tolerance %.3g after %d nodes/rounds", best.optimality_gap,
                    gap_tolerance, nodes)
        if raise_on_gap:
            raise GapNotReached(f"gap {best.optimality_gap:.3g} > {gap_tolerance:.3g}", incumbent=best)
    return best


def diagnose_infeasibility(scn: Scenario) -> Infeasible:
    """First violated family in the order connect, capacity, battery, airport power."""
    sched = scn.schedule
    T = scn.grid.T
    for c in sched.connections:
        if c.min_connect > T - 1:
            return Infeasible(f"connection {c.id!r} cannot meet its minimum connect", family="connect")
    stages = [
        ("capacity", scn.with_(schedule=sched.with_connections(c.conventional() for c in sched.connections),
                               power_cap_w=math.inf, weight=0.0, switch_reward=None)),
        ("battery", scn.with_(power_cap_w=math.inf, weight=0.0)),
        ("airport power", scn.with_(weight=0.0)),
    ]
    for family, relaxed in stages:
        if not _feasible(relaxed):
            return Infeasible(f"no allocation satisfies the {family} constraints", family=family)
    return Infeasible("rescheduling problem is infeasible")


def _feasible(scn: Scenario) -> bool:
    try:
        model = build_model(scn)
    except ModelInfeasiblePrecheck:
        return False
    h = _highs(model, integer=True)
    h.setOptionValue("mip_rel_gap", 1.0)
    h.setOptionValue("objective_bound", math.inf)
    h.run()
    return h.getInfo().primal_solution_status == 2


# ---------------------------------------------------------------------------
# audit


@dataclass
class FamilyCheck:
    family: str
    passed: bool
    worst: float = 0.0
    detail: str = ""


@dataclass
class VerifyReport:
    checks: list[FamilyCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, family) -> FamilyCheck:
        for c in self.checks:
            if c.family == family:
                return c
        raise KeyError(family)

    def failed(self) -> list[str]:
        return [c.family for c in self.checks if not c.passed]


def verify(sol: RescheduleSolution, scn: Scenario, rtol: float = 1e-6) -> VerifyReport:
    """Independent audit of every constraint family of a solution."""
    sched = scn.schedule
    alloc = sol.allocation
    checks = []

    Y = alloc.Y
    shape_ok = Y.shape == (len(sched.movements), sched.grid.T) and bool((Y[:, 0] == 1).all()) and \
        bool((np.diff(Y, axis=1) <= 0).all())
    checks.append(FamilyCheck("Y.def", shape_ok))

    viol = sch.check_capacity(alloc, scn.capacity, scn.window)
    worst = max((v.count - scn.capacity for v in viol), default=0)
    checks.append(FamilyCheck("capacity", not viol, float(worst),
                              f"window [{viol[0].start}, {viol[0].end}] has {viol[0].count}" if viol else ""))

    bad = [c.id for c in sched.connections if not sch.check_connect(alloc, c)]
    checks.append(FamilyCheck("connect", not bad, float(len(bad)), ", ".join(bad[:5])))

    slots = alloc.slots()
    disp_bad = []
    for m in sched.movements:
        d = sol.displacements.get(m.id)
        ref = sch.displacement_from_steps(sch.request_steps(m.requested_slot, sched.grid.T), alloc.row(m.id))
        if d != ref or slots[m.id] != m.requested_slot + ref.late - ref.early:
            disp_bad.append(m.id)
    checks.append(FamilyCheck("X.def", not disp_bad, float(len(disp_bad)), ", ".join(disp_bad[:5])))
    if scn.max_displacement is not None:
        worst = max((max(d.late, d.early) for d in sol.displacements.values()), default=0)
        checks.append(FamilyCheck("displacement bound", worst <= scn.max_displacement, float(worst)))

    keep = sol.keep
    tasks = charging_tasks(scn, slots, keep)
    prof = sol.profile
    ids = list(prof.task_ids)
    dt = sched.grid.dt_hours
    energy_worst, window_worst, rate_worst = 0.0, 0.0, 0.0
    missing = [t.id for t in tasks if t.id not in ids]
    for t in tasks:
        if t.id not in ids:
            continue
        r = prof.rates[ids.index(t.id)]
        scale = max(t.energy_wh, 1.0)
        energy_worst = max(energy_worst, abs(r.sum() * dt - t.energy_wh) / scale)
        outside = np.ones(sched.grid.T, bool)
        if t.length > 0:
            outside[t.start: t.end + 1] = False
        window_worst = max(window_worst, float(np.abs(r[outside]).max(initial=0.0)) / scale)
        if r.min(initial=0.0) < 0:
            window_worst = max(window_worst, -float(r.min()) / scale)
        rate_worst = max(rate_worst, (float(r.max(initial=0.0)) - t.rate_cap_w) / t.rate_cap_w)
    extra = [i for i in ids if i not in {t.id for t in tasks}]
    checks.append(FamilyCheck("energy", energy_worst <= rtol and not missing and not extra, energy_worst,
                              ", ".join(missing + extra)))
    checks.append(FamilyCheck("charging window", window_worst <= rtol, window_worst))
    checks.append(FamilyCheck("battery power", rate_worst <= rtol, max(rate_worst, 0.0)))
    if math.isfinite(scn.power_cap_w):
        over = (prof.peak - scn.power_cap_w) / max(scn.power_cap_w, 1.0)
        checks.append(FamilyCheck("airport power", over <= rtol, max(over, 0.0)))
    else:
        checks.append(FamilyCheck("airport power", True))

    disp = sol.displacements
    max_d = max((max(d.late, d.early) for d in disp.values()), default=0)
    total = sum(d.total for d in disp.values())
    flat = float(prof.aggregate @ prof.aggregate)
    obj = max_d + total + scn.weight * flat
    if keep is not None and scn.switch_reward is not None:
        obj -= scn.switch_reward * sum(keep.values())
    err = abs(obj - sol.objective) / max(abs(obj), 1.0)
    checks.append(FamilyCheck("objective", err <= rtol and max_d == sol.max_disp and total == sol.total_disp,
                              err))
    return VerifyReport(checks)
