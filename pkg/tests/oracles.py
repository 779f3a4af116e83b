"""Independent reference solvers used by the tests.

Nothing here calls the package's optimizers except where stated: the
smart-charging reference is an accelerated projected-gradient method with its
own bisection projection, and the rescheduling reference enumerates every slot
assignment.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from heasched import schedule as sch
from heasched.smart_charge import ChargingTask, solve_smart
from heasched.errors import Infeasible


def project_box_sum(v, total, cap, mask=None):
    """Row-wise Euclidean projection onto ``{x : 0 <= x <= cap, sum x = total, x = 0 off mask}``.

    Bisection on the per-row shift; ``v`` is 2-D, ``total`` and ``cap`` are per row.
    """
    v = np.atleast_2d(np.asarray(v, float))
    mask = np.ones(v.shape, bool) if mask is None else mask
    total = np.asarray(total, float).reshape(-1, 1)
    cap = np.asarray(cap, float).reshape(-1, 1)
    vm = np.where(mask, v, -np.inf)
    lo = np.where(mask, v, np.inf).min(axis=1, keepdims=True) - total - 1.0
    hi = vm.max(axis=1, keepdims=True) + 1.0
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        s = np.clip(vm - mid, 0.0, cap).sum(axis=1, keepdims=True)
        over = s > total
        lo = np.where(over, mid, lo)
        hi = np.where(over, hi, mid)
    return np.clip(vm - 0.5 * (lo + hi), 0.0, cap)


def _fw_gap(x, tasks, total, cap):
    """Frank-Wolfe gap: an upper bound on ``f(x) - f*`` for the convex objective."""
    g = 2.0 * x.sum(axis=0)
    gap = 0.0
    for k, t in enumerate(tasks):
        gw = g[t.start: t.end + 1]
        order = np.argsort(gw, kind="stable")
        left, best = total[k], 0.0
        for i in order:
            amount = min(left, cap[k])
            best += amount * gw[i]
            left -= amount
            if left <= 0:
                break
        gap += float(gw @ x[k, t.start: t.end + 1]) - best
    return gap


def pg_smart(tasks, grid, iters=20000, rtol=1e-10):
    """FISTA on sum_t (sum_n x[n, t])**2; returns (objective W^2, rates W).

    Stops once the Frank-Wolfe gap certifies ``rtol`` relative accuracy.
    """
    dt = grid.dt_hours
    n = len(tasks)
    t_idx = np.arange(grid.T)
    mask = np.array([(t_idx >= t.start) & (t_idx <= t.end) for t in tasks]).reshape(n, grid.T)
    total = np.array([t.energy_wh / dt for t in tasks])
    cap = np.array([t.rate_cap_w for t in tasks])
    x = project_box_sum(np.zeros((n, grid.T)), total, cap, mask)
    step = 1.0 / (2.0 * max(n, 1))
    y, theta = x.copy(), 1.0
    for it in range(iters):
        g = 2.0 * y.sum(axis=0)
        new = project_box_sum(y - step * g, total, cap, mask)
        theta_next = 0.5 * (1 + math.sqrt(1 + 4 * theta * theta))
        y = new + ((theta - 1) / theta_next) * (new - x)
        x, theta = new, theta_next
        if it % 10 == 9:
            agg = x.sum(axis=0)
            if _fw_gap(x, tasks, total, cap) <= rtol * float(agg @ agg):
                break
    agg = x.sum(axis=0)
    return float(agg @ agg), x


def enumerate_reschedule(scn, keep_options=False):
    """Exhaustive optimum of the joint problem: (objective, slots, keep) or None if infeasible.

    Capacity and connecting time are checked with the plain schedule checkers;
    charging for fixed slots uses the flattest profile under the airport cap.
    """
    sched = scn.schedule
    T = scn.grid.T
    ids = [m.id for m in sched.movements]
    req = [m.requested_slot for m in sched.movements]
    hea = sched.hea_connections
    bound = scn.max_displacement
    ranges = []
    for r in req:
        lo, hi = 0, T - 1
        if bound is not None:
            lo, hi = max(0, r - bound), min(T - 1, r + bound)
        ranges.append(range(lo, hi + 1))
    keeps = [dict(zip([c.id for c in hea], z)) for z in itertools.product((0, 1), repeat=len(hea))] \
        if keep_options else [None]

    cache = {}

    def charging_cost(slots, keep):
        windows = []
        for c in hea:
            if keep is not None and not keep[c.id]:
                continue
            a, d = slots[c.arrival], slots[c.departure]
            windows.append((c.id, a + 1, d, c.hea.energy_wh, c.hea.rate_cap_w))
        key = tuple(windows)
        if key not in cache:
            cache[key] = _flatten_cost(windows, scn)
        return cache[key]

    best = None
    for combo in itertools.product(*ranges):
        slots = dict(zip(ids, combo))
        alloc = sch.encode_allocation(slots, T)
        if sch.check_capacity(alloc, scn.capacity, scn.window):
            continue
        if not all(sch.check_connect(alloc, c) for c in sched.connections):
            continue
        disp = [sch.displacement(r, a) for r, a in zip(req, combo)]
        base = max((max(d.late, d.early) for d in disp), default=0) + sum(d.total for d in disp)
        for keep in keeps:
            flat = charging_cost(slots, keep)
            if flat is None:
                continue
            obj = base + scn.weight * flat
            if keep is not None:
                obj -= scn.switch_reward * sum(keep.values())
            if best is None or obj < best[0] - 1e-12:
                best = (obj, slots, keep)
    return best


def _flatten_cost(windows, scn):
    grid = scn.grid
    tasks = []
    for cid, first, last, energy, cap in windows:
        if first > last:
            return None
        tasks.append(ChargingTask(cid, first, last, energy, cap))
    if not tasks:
        return 0.0 if scn.power_cap_w >= 0 else None
    if any(t.energy_wh > t.deliverable_wh(grid) * (1 + 1e-12) for t in tasks):
        return None
    try:
        prof = solve_smart(tasks, grid, tolerance=1e-11, power_cap=scn.power_cap_w)
    except Infeasible:
        return None
    return prof.objective
