"""Command-line interface: subcommands, exit codes, report schemas, and
byte-level determinism of written reports."""

import json

import numpy as np
import pytest

from lqpencil import BoundarySpec, LqProblem, PopovTriple, save_problem
from lqpencil.cli import (
    EXIT_BAD_INPUT,
    EXIT_INFEASIBLE,
    EXIT_NO_RICCATI,
    EXIT_OK,
    main,
)
from lqpencil.fixtures import bundled_problem_path


@pytest.fixture(scope="module")
def problem_path():
    return str(bundled_problem_path())


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr().out
    return code, out


def last_json(out):
    return json.loads(out)


def test_solve_bundled_problem(problem_path, capsys):
    code, out = run_cli(["solve", "--problem", problem_path], capsys)
    assert code == EXIT_OK
    doc = last_json(out)
    assert doc["status"] == "ok"
    assert doc["solution"]["cost"] == pytest.approx(8.0 / 3.0, abs=1e-9)
    np.testing.assert_allclose(doc["solution"]["x"][0], [1.0, 4.0 / 3.0],
                               atol=1e-9)
    np.testing.assert_allclose(doc["solution"]["x"][-1],
                               doc["solution"]["x"][0], atol=1e-9)
    assert doc["stationarity"]["passed"] is True
    assert doc["riccati"]["source"] == "iterated"
    assert doc["decomposition"] == {"r": 1, "m1": 1, "m2": 1}
    assert doc["solution"]["free_boundary_dim"] == 0
    assert doc["solution"]["free_control_dim"] == 2


def test_solve_with_riccati_file(problem_path, tmp_path, capsys):
    xfile = tmp_path / "X.json"
    xfile.write_text(json.dumps({"X": [[0.0, 0.0], [0.0, 1.0]]}))
    code, out = run_cli(["solve", "--problem", problem_path,
                         "--riccati", str(xfile)], capsys)
    assert code == EXIT_OK
    doc = last_json(out)
    assert doc["riccati"]["source"] == "file"
    assert doc["solution"]["cost"] == pytest.approx(8.0 / 3.0, abs=1e-9)


def test_analyze_pencil_report(problem_path, capsys):
    code, out = run_cli(["analyze-pencil", "--problem", problem_path], capsys)
    assert code == EXIT_OK
    doc = last_json(out)
    assert doc["normal_rank"] == 5
    assert doc["expected_normal_rank"] == 5
    assert len(doc["finite_eigenvalues"]) == 1
    ev = doc["finite_eigenvalues"][0]
    assert abs(complex(*ev["value"])) <= 1e-9
    assert ev["multiplicity"] == 1
    assert ev["rank_at_value"] == 4
    assert doc["infinite"] == {"algebraic": 2, "geometric": 1,
                               "refined_algebraic": 1, "refined_geometric": 1}
    assert len(doc["rank_probes"]) == 7
    assert all(p["rank"] == 5 for p in doc["rank_probes"])


def test_verify_riccati_accepts_solution(problem_path, tmp_path, capsys):
    xfile = tmp_path / "X.json"
    xfile.write_text(json.dumps({"X": [[0.0, 0.0], [0.0, 1.0]]}))
    code, out = run_cli(["verify-riccati", "--problem", problem_path,
                         "--riccati", str(xfile)], capsys)
    assert code == EXIT_OK
    doc = last_json(out)
    assert doc["accepted"] is True
    assert doc["gdare_residual_norm"] <= 1e-10
    assert doc["kernel_violation"] <= 1e-10
    np.testing.assert_allclose(doc["derived"]["R_X"],
                               [[1.0, 1.0], [1.0, 1.0]])
    np.testing.assert_allclose(doc["derived"]["A_X"],
                               [[1.0, 0.0], [0.0, 0.0]], atol=1e-14)


def test_verify_riccati_rejects_zero(problem_path, tmp_path, capsys):
    xfile = tmp_path / "X.json"
    xfile.write_text(json.dumps({"X": [[0.0, 0.0], [0.0, 0.0]]}))
    code, out = run_cli(["verify-riccati", "--problem", problem_path,
                         "--riccati", str(xfile)], capsys)
    assert code == EXIT_NO_RICCATI
    doc = last_json(out)
    assert doc["accepted"] is False
    np.testing.assert_allclose(doc["gdare_residual_matrix"],
                               [[0.0, 0.0], [0.0, -1.0]], atol=1e-14)


def test_oracle_subcommand(problem_path, capsys):
    code, out = run_cli(["oracle", "--problem", problem_path], capsys)
    assert code == EXIT_OK
    doc = last_json(out)
    assert doc["feasible"] is True
    assert doc["cost"] == pytest.approx(8.0 / 3.0, abs=1e-9)
    assert doc["projected_gradient_norm"] <= 1e-9
    assert len(doc["u"]) == 3


def test_selftest(capsys):
    code, out = run_cli(["selftest"], capsys)
    assert code == EXIT_OK
    doc = last_json(out)
    assert doc["all_passed"] is True
    names = [c["name"] for c in doc["checks"]]
    assert names == ["riccati-certificate", "pencil-structure",
                     "solve-vs-oracle"]
    assert all(c["passed"] for c in doc["checks"])


def test_reports_are_byte_identical(problem_path, tmp_path, capsys):
    for cmd in (["solve", "--problem", problem_path],
                ["analyze-pencil", "--problem", problem_path],
                ["oracle", "--problem", problem_path]):
        out_a = tmp_path / "a.json"
        out_b = tmp_path / "b.json"
        assert main(cmd + ["--out", str(out_a)]) == EXIT_OK
        assert main(cmd + ["--out", str(out_b)]) == EXIT_OK
        capsys.readouterr()
        assert out_a.read_bytes() == out_b.read_bytes()


def test_analyze_seed_changes_probes_not_rank(problem_path, capsys):
    _, out_a = run_cli(["analyze-pencil", "--problem", problem_path], capsys)
    _, out_b = run_cli(["analyze-pencil", "--problem", problem_path,
                        "--seed", "7"], capsys)
    doc_a, doc_b = last_json(out_a), last_json(out_b)
    assert doc_a["rank_probes"] != doc_b["rank_probes"]
    assert doc_a["normal_rank"] == doc_b["normal_rank"]


def test_infeasible_problem_exit_code(tmp_path, capsys):
    triple = PopovTriple([[0.5]], [[0.0]], [[1.0]], [[0.0]], [[1.0]])
    bd = BoundarySpec(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]),
                      np.array([0.0, 1.0]), np.zeros((2, 2)),
                      np.zeros(1), np.zeros(1))
    path = tmp_path / "infeasible.json"
    save_problem(LqProblem(triple, 3, bd), path)
    code, out = run_cli(["solve", "--problem", str(path)], capsys)
    assert code == EXIT_INFEASIBLE
    assert last_json(out)["status"] == "infeasible"


def test_horizon_too_short_exit_code(tmp_path, capsys):
    triple = PopovTriple(np.array([[1.0, 1.0], [0.0, 1.0]]),
                         np.array([[0.0], [1.0]]), np.zeros((2, 2)),
                         np.zeros((2, 1)), np.zeros((1, 1)))
    bd = BoundarySpec(np.eye(2), -np.eye(2), np.zeros(2), np.zeros((4, 4)),
                      np.zeros(2), np.zeros(2))
    path = tmp_path / "short.json"
    save_problem(LqProblem(triple, 1, bd), path)
    code, out = run_cli(["solve", "--problem", str(path)], capsys)
    assert code == EXIT_INFEASIBLE
    assert last_json(out)["status"] == "horizon-too-short"


def test_riccati_failure_exit_code(tmp_path, capsys):
    # B = 0 with unstable A: the fixed-point iteration diverges
    triple = PopovTriple([[2.0]], [[0.0]], [[1.0]], [[0.0]], [[1.0]])
    path = tmp_path / "divergent.json"
    save_problem(LqProblem(triple, 2, BoundarySpec.unconstrained(1)), path)
    code, out = run_cli(["solve", "--problem", str(path)], capsys)
    assert code == EXIT_NO_RICCATI
    assert last_json(out)["status"] == "riccati-failed"


def test_bad_input_exit_codes(tmp_path, capsys):
    code, _ = run_cli(["solve", "--problem", str(tmp_path / "missing.json")],
                      capsys)
    assert code == EXIT_BAD_INPUT

    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    code, _ = run_cli(["solve", "--problem", str(broken)], capsys)
    assert code == EXIT_BAD_INPUT

    code, _ = run_cli(["solve"], capsys)  # --problem is required
    assert code == EXIT_BAD_INPUT

    code, _ = run_cli(["verify-riccati", "--problem",
                       str(bundled_problem_path())], capsys)
    assert code == EXIT_BAD_INPUT  # --riccati is required here

    bad_x = tmp_path / "badx.json"
    bad_x.write_text(json.dumps({"X": [[1.0]]}))  # wrong shape
    code, _ = run_cli(["verify-riccati", "--problem",
                       str(bundled_problem_path()), "--riccati", str(bad_x)],
                      capsys)
    assert code == EXIT_BAD_INPUT


def test_custom_tolerances_accepted(problem_path, capsys):
    code, out = run_cli(["solve", "--problem", problem_path,
                         "--rank-tol", "1e-9", "--residual-tol", "1e-7"],
                        capsys)
    assert code == EXIT_OK
    doc = last_json(out)
    assert doc["tolerances"]["rank_rel_tol"] == pytest.approx(1e-9)
    assert doc["tolerances"]["residual_tol"] == pytest.approx(1e-7)
