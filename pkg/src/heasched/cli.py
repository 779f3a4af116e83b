"""Command-line entry point (``heasched``).

Exit codes: 0 success, 2 infeasible, 3 parse error, 4 optimality gap not reached.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import analysis, hea_params as hp, mechanisms, outputs
from .errors import GapNotReached, InconsistentPair, Infeasible, MissingEntry, ParseError
from .ingest import (ScenarioConfig, build_schedule, generate_synthetic, load_config, read_flights,
                     read_schedule_records, write_schedule_csv)
from .reschedule import Scenario, charging_tasks, solve, verify
from .smart_charge import naive_profile, solve_smart

EXIT_OK, EXIT_INFEASIBLE, EXIT_PARSE, EXIT_GAP = 0, 2, 3, 4

log = logging.getLogger("heasched")


def _scenario(args, cfg: ScenarioConfig) -> Scenario:
    parsed = build_schedule(read_schedule_records(args.schedule), cfg.grid, cfg.min_connect_minutes, cfg.hybrid,
                            cfg.load_factor, cfg.c_rate, min_hea_dwell_minutes=cfg.min_hea_dwell_minutes)
    if parsed.short_dwell:
        log.info("%d connection(s) below the minimum HEA dwell", len(parsed.short_dwell))
    return Scenario(parsed.schedule, cfg.capacity, cfg.window, cfg.p_max_w, cfg.weight)


def _out(args, name) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _write_solution(args, scn, sol, prefix, **extra) -> int:
    outputs.write_allocation_csv(sol, scn.schedule, _out(args, f"{prefix}allocation.csv"))
    outputs.write_profile_csv(sol.profile, _out(args, f"{prefix}profile.csv"))
    outputs.write_summary_json(sol, _out(args, f"{prefix}summary.json"), **extra)
    report = verify(sol, scn)
    if not report.passed:
        log.error("solution fails checks: %s", ", ".join(report.failed()))
    s = sol.summary()
    print(f"objective {s['objective']:.6g}  max disp {s['max_disp']}  total disp {s['total_disp']}  "
          f"peak {s['peak_power_w'] / 1e6:.4g} MW  gap {s['optimality_gap']:.3g}  ({s['status']})")
    return EXIT_OK if sol.gap_reached else EXIT_GAP


def cmd_energy(args, cfg):
    ac = hp.AircraftClass.parse(args.aircraft_class)
    p = hp.passengers_from_seats(args.seats, cfg.load_factor)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["bsed_wh_per_kg", "mf_percent", "energy_mwh", "within_range"])
    for bsed in hp.BSED_GRID:
        for mf in hp.MF_GRID:
            c = hp.HybridConfig(bsed, mf)
            try:
                energy = f"{hp.leg_energy(p, args.distance, hp.lookup_b0(ac, c)) / 1e6:.6f}"
            except MissingEntry:
                energy = ""
            w.writerow([bsed, f"{mf:g}", energy, "yes" if hp.is_hea_feasible(ac, c, args.distance) else "no"])
    return EXIT_OK


def cmd_feasibility(args, cfg):
    flights, dropped = read_flights(args.flights, cfg.min_hea_dwell_minutes)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["bsed_wh_per_kg", "mf_percent", "switched_flights", "of_flights"])
    for bsed in hp.BSED_GRID:
        for mf in hp.MF_GRID:
            w.writerow([bsed, mf, len(analysis.filter_hea(flights, hp.HybridConfig(bsed, mf))), len(flights)])
    if dropped:
        log.info("%d flight(s) dropped for short dwell", dropped)
    return EXIT_OK


def cmd_profile(args, cfg):
    scn = _scenario(args, cfg)
    tasks = charging_tasks(scn, scn.schedule.requested())
    if args.smart:
        prof = solve_smart(tasks, scn.grid, power_cap=None)
    else:
        prof = naive_profile(tasks, scn.grid)
    outputs.write_profile_csv(prof, _out(args, "profile.csv"))
    print(f"{len(tasks)} task(s), peak {prof.peak / 1e6:.4g} MW")
    if prof.peak > cfg.p_max_w:
        log.warning("peak exceeds the airport cap of %g MW", cfg.p_max_mw)
    return EXIT_OK


def cmd_reschedule(args, cfg):
    scn = _scenario(args, cfg)
    sol = solve(scn, gap_tolerance=args.gap, method=args.method, time_limit=args.time_limit)
    return _write_solution(args, scn, sol, "")


def cmd_negotiate(args, cfg):
    scn = _scenario(args, cfg)
    x_max = cfg.x_max_intervals
    kw = dict(gap_tolerance=args.gap, method=args.method, time_limit=args.time_limit)
    if args.mechanism == "airport-opt":
        res = mechanisms.airport_switch_optimize(scn.with_(switch_reward=cfg.switch_reward), cfg.switch_reward,
                                                 x_max, **kw)
        final = scn.with_(switch_reward=cfg.switch_reward, max_displacement=x_max)
    else:
        if args.mechanism == "airport-heuristic":
            res = mechanisms.airport_switch_heuristic(scn, x_max, **kw)
        else:
            res = mechanisms.airline_iterative_drop(scn, x_max, cfg.drop_per_round, **kw)
        final = scn.with_(schedule=mechanisms.apply_switches(scn.schedule, res.switched))
    mechanisms.write_trace_csv(res.trace, _out(args, "trace.csv"))
    print(f"{args.mechanism}: switched {len(res.switched)} of {len(res.keep)} HEA connection(s) "
          f"in {res.rounds} round(s), {res.solver_calls} solve(s)")
    return _write_solution(args, final, res.solution, "", mechanism=args.mechanism, switched=res.switched)


def cmd_annual(args, cfg):
    flights, _ = read_flights(args.flights, cfg.min_hea_dwell_minutes)
    configs = [cfg.hybrid] if not args.all_configs else \
        [hp.HybridConfig(b, m) for b in hp.BSED_GRID for m in hp.MF_GRID]
    summaries = [analysis.annual_summary(flights, c, args.airport, cfg.load_factor) for c in configs]
    analysis.write_annual_summary_csv(summaries, _out(args, "annual_summary.csv"))
    analysis.write_peak_histogram_csv(summaries[0].daily_peaks_w, _out(args, "peak_histogram.csv"))
    if args.daily_profiles:
        hea = analysis.filter_hea(flights, cfg.hybrid)
        for date, day in analysis.by_date(hea).items():
            prof = analysis.daily_naive_profile(day, cfg.hybrid, date, cfg.load_factor)
            analysis.write_daily_profile_csv(prof, _out(args, f"profile_{date or 'undated'}.csv"))
    for s in summaries:
        print(f"{s.config}: {s.energy_gwh:.4f} GWh over {s.switched_flights} flight(s)")
    return EXIT_OK


def cmd_synth(args, cfg):
    grid = cfg.grid
    recs = generate_synthetic(args.seed, args.movements, grid=grid, hea_pairs=args.hea_pairs,
                              airlines=args.airlines, cfg=cfg.hybrid, min_connect_minutes=cfg.min_connect_minutes)
    path = _out(args, args.output)
    write_schedule_csv(recs, path)
    print(f"wrote {len(recs)} movement(s) to {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heasched", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="scenario config file (key = value lines)")
    p.add_argument("--out-dir", default=".", help="directory for output files")
    p.add_argument("--gap", type=float, default=1e-3, help="relative optimality gap")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("energy", help="leg energy over the BSED x MF grid")
    s.add_argument("--class", dest="aircraft_class", required=True)
    s.add_argument("--seats", type=int, required=True)
    s.add_argument("--distance", type=float, required=True, help="miles")
    s.set_defaults(func=cmd_energy)

    s = sub.add_parser("feasibility", help="HEA switch counts per configuration")
    s.add_argument("flights")
    s.set_defaults(func=cmd_feasibility)

    s = sub.add_parser("profile", help="charging profile at the requested slots")
    s.add_argument("schedule")
    mode = s.add_mutually_exclusive_group()
    mode.add_argument("--naive", action="store_true", default=True)
    mode.add_argument("--smart", action="store_true")
    s.set_defaults(func=cmd_profile)

    for name, func, helptext in (("reschedule", cmd_reschedule, "joint rescheduling and charging"),
                                 ("negotiate", cmd_negotiate, "HEA switching mechanisms")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("schedule")
        s.add_argument("--method", choices=("auto", "bnb", "oa"), default="auto")
        s.add_argument("--time-limit", type=float, default=None, help="seconds per solve")
        if name == "negotiate":
            s.add_argument("--mechanism", required=True,
                           choices=("airport-opt", "airport-heuristic", "airline-drop"))
        s.set_defaults(func=func)

    s = sub.add_parser("annual", help="annual energy and daily peaks from flight records")
    s.add_argument("flights")
    s.add_argument("--airport", default="")
    s.add_argument("--all-configs", action="store_true")
    s.add_argument("--daily-profiles", action="store_true")
    s.set_defaults(func=cmd_annual)

    s = sub.add_parser("synth", help="write a synthetic banked schedule")
    s.add_argument("--movements", type=int, default=215)
    s.add_argument("--hea-pairs", type=int, default=32)
    s.add_argument("--airlines", type=int, default=8)
    s.add_argument("--output", default="schedule.csv")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else ScenarioConfig()
        return args.func(args, cfg)
    except (ParseError, InconsistentPair) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except Infeasible as exc:
        family = f" [{exc.family}]" if exc.family else ""
        print(f"infeasible{family}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except GapNotReached as exc:
        print(f"gap not reached: {exc}", file=sys.stderr)
        return EXIT_GAP


if __name__ == "__main__":
    sys.exit(main())
