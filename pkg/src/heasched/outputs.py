"""CSV/JSON writers for charging profiles and rescheduling solutions."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .reschedule import RescheduleSolution
from .schedule import Schedule
from .smart_charge import ChargingProfile


def write_profile_csv(profile: ChargingProfile, path):
    grid = profile.grid
    agg = profile.aggregate
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_index", "clock_time", "aggregate_kw", *profile.task_ids])
        for t in range(grid.T):
            w.writerow([t, grid.clock(t), f"{agg[t] / 1e3:.6f}",
                        *(f"{r / 1e3:.6f}" for r in profile.rates[:, t])])


def write_allocation_csv(sol: RescheduleSolution, schedule: Schedule, path):
    slots = sol.slots
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["movement_id", "requested_slot", "allocated_slot", "x_plus", "x_minus"])
        for m in schedule.movements:
            d = sol.displacements[m.id]
            w.writerow([m.id, m.requested_slot, slots[m.id], d.late, d.early])


def write_summary_json(sol: RescheduleSolution, path, **extra):
    record = {**sol.summary(), **extra}
    Path(path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
