import csv
import json

import pytest

from heasched import cli

CONFIG = """\
# small afternoon: one hour in 2-minute intervals
bsed = 700
mf = 12.5
T = 30
start = 10:00
capacity = 6
window = 5
min_connect_minutes = 20
p_max_mw = 8
x_max_minutes = 6
"""


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "scenario.cfg").write_text(CONFIG)
    return tmp_path


def run(workdir, *argv):
    return cli.main(["--config", str(workdir / "scenario.cfg"), "--out-dir", str(workdir), *argv])


@pytest.fixture
def schedule(workdir):
    assert run(workdir, "--seed", "3", "synth", "--movements", "24", "--hea-pairs", "4", "--airlines", "2",
               "--output", "sched.csv") == 0
    return str(workdir / "sched.csv")


def test_energy_table(capsys):
    assert cli.main(["energy", "--class", "RJ", "--seats", "66", "--distance", "599"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    cell = next(r for r in rows if r["bsed_wh_per_kg"] == "500" and r["mf_percent"] == "12.5")
    assert float(cell["energy_mwh"]) == pytest.approx(1.045081, abs=1e-6) and cell["within_range"] == "yes"
    cell = next(r for r in rows if r["bsed_wh_per_kg"] == "500" and r["mf_percent"] == "25")
    assert cell["within_range"] == "no"


def test_feasibility_and_annual(workdir, capsys):
    flights = workdir / "flights.csv"
    flights.write_text("date,tail,origin,destination,arr_time,dep_time,distance,seats,aircraft_class\n"
                       "2019-06-01,N178SY,LAX,SLC,17:02,17:53,599,66,RegionalJet\n"
                       "2019-06-02,N2,SFO,JFK,08:00,09:10,2586,160,SingleAisle\n")
    assert cli.main(["feasibility", str(flights)]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    counts = {(r["bsed_wh_per_kg"], r["mf_percent"]): int(r["switched_flights"]) for r in rows}
    assert counts[("500", "12.5")] == 1 and counts[("500", "25.0")] == 0

    assert run(workdir, "annual", str(flights), "--airport", "SFO", "--all-configs", "--daily-profiles") == 0
    summary = list(csv.DictReader((workdir / "annual_summary.csv").open()))
    assert len(summary) == 15 and (workdir / "peak_histogram.csv").exists()
    assert (workdir / "profile_2019-06-01.csv").exists()


def test_profile_modes(workdir, schedule, capsys):
    assert run(workdir, "profile", schedule, "--naive") == 0
    naive = float(capsys.readouterr().out.split("peak ")[1].split()[0])
    assert run(workdir, "profile", schedule, "--smart") == 0
    smart = float(capsys.readouterr().out.split("peak ")[1].split()[0])
    assert smart <= naive
    header = (workdir / "profile.csv").read_text().splitlines()[0].split(",")
    assert header[:3] == ["t_index", "clock_time", "aggregate_kw"]


def test_reschedule_writes_outputs(workdir, schedule):
    assert run(workdir, "reschedule", schedule) == 0
    summary = json.loads((workdir / "summary.json").read_text())
    assert summary["status"] == "optimal"
    rows = list(csv.DictReader((workdir / "allocation.csv").open()))
    assert len(rows) == 24
    for r in rows:
        disp = int(r["allocated_slot"]) - int(r["requested_slot"])
        assert disp == int(r["x_plus"]) - int(r["x_minus"])


@pytest.mark.parametrize("mechanism", ["airport-opt", "airport-heuristic", "airline-drop"])
def test_negotiate(workdir, schedule, mechanism):
    assert run(workdir, "negotiate", schedule, "--mechanism", mechanism) == 0
    trace = list(csv.DictReader((workdir / "trace.csv").open()))
    assert trace and {r["action"] for r in trace} <= {"keep", "switch"}
    summary = json.loads((workdir / "summary.json").read_text())
    assert summary["mechanism"] == mechanism and summary["max_disp"] <= 3


def test_exit_code_infeasible(workdir, schedule):
    (workdir / "scenario.cfg").write_text(CONFIG.replace("capacity = 6", "capacity = 1").replace("window = 5",
                                                                                                "window = 20"))
    assert run(workdir, "reschedule", schedule) == 2


def test_exit_code_parse_error(workdir, capsys):
    bad = workdir / "bad.csv"
    bad.write_text("movement_id,kind\nM1,A\n")
    assert run(workdir, "reschedule", str(bad)) == 3
    (workdir / "scenario.cfg").write_text("runway = 2\n")
    assert run(workdir, "energy", "--class", "RJ", "--seats", "66", "--distance", "1") == 3
    assert "unknown key" in capsys.readouterr().err


def test_exit_code_gap_not_reached(workdir, schedule):
    (workdir / "scenario.cfg").write_text(CONFIG.replace("capacity = 6", "capacity = 2"))
    assert run(workdir, "--gap", "0", "reschedule", schedule, "--method", "bnb", "--time-limit", "0") == 4
