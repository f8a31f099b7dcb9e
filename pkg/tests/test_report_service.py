import csv
import json
import math

import numpy as np
import pytest

from src.models.scenario import load_scenario, parse_scenario
from src.services.report_service import (
    FIG1_PATTERN,
    reproduce,
    run_scenario,
    sweep_penalty,
    trajectory_summary,
)
from src.utils.formatters import QFUNCTION_COLUMNS, emit, trajectory_columns

from conftest import SCENARIO_DIR, radial_data


def _short_radial(make_radial):
    return make_radial(horizon=2.0, dt=0.05, initial_states={"points": [[-6.0, 0.0], [8.0, 0.5]]})


def test_radial_analysis_report(radial):
    report = run_scenario(radial.scenario, compat=False, simulate_runs=False)
    assert report.ok
    data = report.data
    assert data["assumptions"]["clf_minimum_safe"]
    assert data["assumptions"]["disjoint_barriers"]
    assert data["feasibility"]["covered"]

    (summary,) = data["barriers"]
    assert summary["name"] == "h1"
    assert summary["qfunction"]["q0"] == pytest.approx(9.0)
    assert summary["qfunction"]["lambda_max"] == pytest.approx(10.0)
    (row,) = summary["equilibria"]
    assert row["lambda_e"] == pytest.approx(4.0)
    assert row["verdict"] == "Unstable"
    assert row["jacobian_error"] < 1e-3
    assert row["jacobian_eigenvalues_real"] == pytest.approx([-1.0, 3.0], abs=1e-8)
    assert summary["compatible"]
    assert summary["compatibility_barrier"]["value"] == pytest.approx(0.0, abs=1e-8)
    assert len(data["interior_equilibria"]) == 1


def test_compat_stage_keeps_compatible_references(radial):
    report = run_scenario(radial.scenario, compat=True, simulate_runs=False)
    (entry,) = report.data["compatibilization"]
    assert entry["status"] == "reference"
    assert entry["objective"] == 0.0


def test_simulation_summary(make_radial):
    report = run_scenario(_short_radial(make_radial), compat=False, simulate_runs=True)
    sim = report.data["simulation"]
    assert sim["runs"] == 2
    assert [r["file"] for r in sim["trajectories"]] == ["trajectory_000.csv", "trajectory_001.csv"]
    assert sim["trajectories"][0]["start"] == [-6.0, 0.0]
    assert sim["dt"] == 0.05
    assert sum(sim["terminations"].values()) == 2
    assert sim["min_barrier"] > 0


def test_trajectory_summary_without_runs():
    summary = trajectory_summary([])
    assert summary["runs"] == 0
    assert summary["min_barrier"] == math.inf


def test_emitted_files(make_radial, tmp_path):
    report = run_scenario(_short_radial(make_radial), compat=False, simulate_runs=True)
    written = emit(report, tmp_path / "out")
    names = [p.name for p in written]
    assert names[0] == "report.json"
    assert {"equilibria_1.csv", "qfunction_1.csv", "trajectory_000.csv", "trajectory_001.csv"} <= set(names)

    data = json.loads((tmp_path / "out" / "report.json").read_text(encoding="utf-8"))
    assert data["scenario"] == "radial"

    with (tmp_path / "out" / "trajectory_000.csv").open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == trajectory_columns(2, 2, 1)
    assert len(rows) - 1 == len(report.trajectories[0].times)

    with (tmp_path / "out" / "qfunction_1.csv").open(encoding="utf-8", newline="") as fh:
        q_rows = list(csv.reader(fh))
    assert q_rows[0] == QFUNCTION_COLUMNS
    assert len(q_rows) > 100

    raw = (tmp_path / "out" / "equilibria_1.csv").read_bytes()
    assert b"\r\n" not in raw
    line = raw.splitlines()[1]
    assert line.startswith(b"4,4,")
    assert b",Unstable,true," in line


def test_reports_are_byte_identical(make_radial, tmp_path):
    for name in ("a", "b"):
        emit(run_scenario(_short_radial(make_radial), compat=False, simulate_runs=True), tmp_path / name)
    for path in sorted((tmp_path / "a").iterdir()):
        assert path.read_bytes() == (tmp_path / "b" / path.name).read_bytes(), path.name


def test_penalty_sweep_rows(fig1):
    rows = sweep_penalty(fig1.plant, fig1.clf, fig1.barrier, fig1.cfg, [0.5, 1.0, 2.0])
    assert [r["p"] for r in rows] == [0.5, 1.0, 2.0]
    for r in rows:
        assert set(r) == {"p", "roots", "verdicts", "crossing", "score"}
        assert len(r["roots"]) == len(r["verdicts"])
    at_one = rows[1]
    assert at_one["roots"] == pytest.approx([35.3169], abs=1e-3)
    # one root cannot match the three-root reference
    assert at_one["score"] == math.inf
    assert len(FIG1_PATTERN["roots"]) == 3


def test_fig1_reproduction_reports_the_mismatch():
    report = reproduce("fig1")
    repro = report.data["reproduction"]
    assert repro["figure"] == "fig1"
    assert 20 <= len(repro["sweep"]) <= 25
    assert repro["pattern_reproduced"] is False
    assert report.data["barriers"][0]["qfunction"]["q0"] == pytest.approx(140.4)


def test_unknown_figure():
    with pytest.raises(ValueError):
        reproduce("fig9")


@pytest.mark.slow
@pytest.mark.parametrize(
    "figure, trap, trapped_barrier",
    [("fig2", [6.0, 0.0], "right"), ("fig3", [0.0, 6.0], "top")],
)
def test_adaptation_recipe_escapes_the_trap(figure, trap, trapped_barrier):
    report = reproduce(figure)
    repro = report.data["reproduction"]
    assert repro["stable_boundary_points"] == [pytest.approx(trap)]

    # static runs stall on the stable boundary point
    assert repro["static_stuck"] >= 1
    static = report.data["static_simulation"]["trajectories"]
    stuck = [r for r in static if r["termination"] != "Converged"]
    assert any(np.linalg.norm(np.array(r["final_state"]) - trap) <= 1e-2 for r in stuck)

    # adaptive runs from the same starts all reach the CLF minimum with the shape back at H_ref
    assert repro["adaptive_runs"] >= 16
    assert repro["adaptive_converged"] == repro["adaptive_runs"]
    assert report.data["simulation"]["terminations"] == {"Converged": repro["adaptive_runs"]}
    assert repro["min_barrier"] >= -1e-4
    assert repro["max_shape_error"] <= 1e-2

    entries = {e["name"]: e for e in report.data["compatibilization"]}
    assert entries[trapped_barrier]["status"] == "compatibilized"


@pytest.mark.slow
@pytest.mark.parametrize("path", sorted(SCENARIO_DIR.glob("*.toml")), ids=lambda p: p.stem)
def test_simulated_neighbourhoods_agree_with_every_verdict(path):
    report = run_scenario(load_scenario(path), compat=False, simulate_runs=False, probes=True)
    rows = [row for summary in report.data["barriers"] for row in summary["equilibria"] if "probe" in row]
    assert rows
    for row in rows:
        assert row["probe"]["consistent"], row


def test_seed_reaches_the_disjointness_search(radial, monkeypatch):
    seen = []

    def record(barriers, seed=0):
        seen.append(seed)
        return True

    monkeypatch.setattr("src.services.report_service.check_assumption2", record)
    report = run_scenario(radial.scenario, compat=False, simulate_runs=False, seed=5)
    assert report.data["seed"] == 5
    assert seen == [5]


def test_complex_asymptotes_keep_their_imaginary_part():
    data = radial_data()
    # N = I - A has eigenvalues 3 +- 3i
    data["plant"] = {"kind": "lti", "drift": [[-2.0, 3.0], [-3.0, -2.0]], "input": [[1.0, 0.0], [0.0, 1.0]]}
    report = run_scenario(parse_scenario(data), compat=False, simulate_runs=False)
    (summary,) = report.data["barriers"]
    assert summary["pencil"]["asymptotes"] == [pytest.approx([3.0, -3.0]), pytest.approx([3.0, 3.0])]
    json.dumps(report.data)


def test_feasibility_sweep_includes_the_simulated_states(make_radial):
    scenario = _short_radial(make_radial)
    static = run_scenario(scenario, compat=False, simulate_runs=False).data["feasibility"]
    simulated = run_scenario(scenario, compat=False, simulate_runs=True).data["feasibility"]
    assert static["trajectory_states"] == 0
    # 2 runs of 40 steps, every 10th state
    assert simulated["trajectory_states"] >= 2
    assert simulated["checked"] == static["checked"] + simulated["trajectory_states"]
    assert simulated["infeasible"] == []
