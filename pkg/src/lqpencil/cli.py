"""Command-line interface.

Subcommands
-----------
solve           Solve a problem file end to end and report the
                trajectory, multipliers, and optimal-set dimensions.
analyze-pencil  Report the generalized eigenstructure of the problem's
                extended symplectic pencil.
verify-riccati  Certify (or reject) a candidate Riccati solution.
oracle          Solve the problem by the flat-QP oracle instead of the
                decomposition.
selftest        Run the bundled closed-form checks.

Exit codes: 0 success, 1 selftest failure, 2 infeasible problem (or a
horizon too short to decide feasibility), 3 no Riccati solution found
or candidate rejected, 4 bad input.

Reports are JSON with a fixed key order, so identical inputs and seed
produce byte-identical output.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

import numpy as np

from .fixtures import bundled_problem_path, singular_riccati_solution, singular_triple
from .linalg import TolerancePolicy
from .lqsolve import (
    HorizonTooShortError,
    InfeasibleProblemError,
    solve_with_decomposition,
)
from .model import (
    LqProblem,
    ProblemFormatError,
    ValidationError,
    load_problem,
    validate,
)
from .oracle import OracleSizeError, flatten, projected_gradient_norm, solve_flat
from .pencil import (
    DEFAULT_SEED,
    generalized_spectrum,
    reachability_decomposition,
)
from .riccati import (
    NotRiccatiSolutionError,
    RiccatiIterationError,
    certify,
    gdare_residual,
    kernel_condition_violation,
    split_inputs,
)

EXIT_OK = 0
EXIT_SELFTEST_FAILED = 1
EXIT_INFEASIBLE = 2
EXIT_NO_RICCATI = 3
EXIT_BAD_INPUT = 4


@dataclass(frozen=True)
class RunConfig:
    """One CLI invocation; seed defaults to a fixed constant so repeated
    runs are reproducible."""

    command: str
    problem: str | None = None
    riccati: str | None = None
    out: str | None = None
    rank_tol: float | None = None
    residual_tol: float | None = None
    seed: int = DEFAULT_SEED


class _CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _policy(cfg: RunConfig) -> TolerancePolicy:
    kwargs = {}
    if cfg.rank_tol is not None:
        kwargs["rank_rel_tol"] = cfg.rank_tol
    if cfg.residual_tol is not None:
        kwargs["residual_tol"] = cfg.residual_tol
    try:
        return TolerancePolicy(**kwargs)
    except ValueError as exc:
        raise _CliError(str(exc), EXIT_BAD_INPUT) from exc


def _load_problem(cfg: RunConfig) -> LqProblem:
    if not cfg.problem:
        raise _CliError("this command requires --problem", EXIT_BAD_INPUT)
    try:
        return load_problem(cfg.problem)
    except (OSError, ProblemFormatError) as exc:
        raise _CliError(f"cannot load problem: {exc}", EXIT_BAD_INPUT) from exc


def _load_riccati_matrix(path: str) -> np.ndarray:
    try:
        with open(path) as fh:
            doc = json.load(fh)
        X = np.array(doc["X"], dtype=float)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise _CliError(f"cannot load Riccati candidate: {exc}", EXIT_BAD_INPUT) from exc
    return X


def _certificate(cfg: RunConfig, problem: LqProblem, pol: TolerancePolicy):
    """Certificate from --riccati when given, else from the fixed-point
    iteration.  Returns (certificate, source string)."""
    from .riccati import iterate_grde

    if cfg.riccati:
        X = _load_riccati_matrix(cfg.riccati)
        try:
            return certify(problem.triple, X, pol), "file"
        except (NotRiccatiSolutionError, ValueError) as exc:
            raise _CliError(f"candidate rejected: {exc}", EXIT_NO_RICCATI) from exc
    try:
        return iterate_grde(problem.triple, pol=pol), "iterated"
    except RiccatiIterationError as exc:
        raise _CliError(f"no Riccati solution found: {exc}", EXIT_NO_RICCATI) from exc


def _mat(M) -> list:
    return np.asarray(M, dtype=float).tolist()


def _complex_pair(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def _tolerances(pol: TolerancePolicy) -> dict:
    return {"rank_rel_tol": pol.rank_rel_tol,
            "residual_tol": pol.residual_tol,
            "eig_match_tol": pol.eig_match_tol}


def _cmd_solve(cfg: RunConfig):
    pol = _policy(cfg)
    problem = _load_problem(cfg)
    try:
        validate(problem, pol)
    except ValidationError as exc:
        raise _CliError(f"invalid problem: {exc}", EXIT_BAD_INPUT) from exc
    cert, source = _certificate(cfg, problem, pol)
    dec = reachability_decomposition(cert, split_inputs(cert, pol), pol)
    report = {
        "command": "solve",
        "seed": cfg.seed,
        "tolerances": _tolerances(pol),
        "problem": {"n": problem.triple.n, "m": problem.triple.m,
                    "q": problem.boundary.q, "T": problem.horizon},
        "riccati": {"source": source, "X": _mat(cert.X),
                    "gdare_residual": cert.gdare_residual,
                    "kernel_violation": cert.kernel_violation},
        "decomposition": {"r": dec.r, "m1": dec.m1, "m2": dec.m2},
    }
    try:
        sol = solve_with_decomposition(problem, dec, pol)
    except InfeasibleProblemError as exc:
        report["status"] = "infeasible"
        report["detail"] = str(exc)
        return report, EXIT_INFEASIBLE
    except HorizonTooShortError as exc:
        report["status"] = "horizon-too-short"
        report["detail"] = str(exc)
        return report, EXIT_INFEASIBLE
    report["status"] = "ok"
    report["solution"] = {
        "cost": sol.cost,
        "x": _mat(sol.x),
        "u": _mat(sol.u),
        "costate": _mat(sol.costate),
        "chi": _mat(np.atleast_2d(sol.chi))[0],
        "free_boundary_dim": int(sol.free_boundary.shape[1]),
        "free_control_dim": int(sol.free_control.shape[1]),
        "free_boundary": _mat(sol.free_boundary),
        "free_control": _mat(sol.free_control),
    }
    rep = sol.residuals
    report["stationarity"] = {
        "dynamics": rep.dynamics_residual,
        "constraint": rep.constraint_residual,
        "costate": rep.costate_residual,
        "input": rep.input_residual,
        "transversality": rep.transversality_residual,
        "passed": rep.passed,
    }
    return report, EXIT_OK


def _cmd_analyze_pencil(cfg: RunConfig):
    pol = _policy(cfg)
    problem = _load_problem(cfg)
    try:
        validate(problem, pol)
    except ValidationError as exc:
        raise _CliError(f"invalid problem: {exc}", EXIT_BAD_INPUT) from exc
    cert, source = _certificate(cfg, problem, pol)
    dec = reachability_decomposition(cert, split_inputs(cert, pol), pol)
    spec = generalized_spectrum(dec, pol, seed=cfg.seed)
    report = {
        "command": "analyze-pencil",
        "seed": cfg.seed,
        "tolerances": _tolerances(pol),
        "problem": {"n": problem.triple.n, "m": problem.triple.m,
                    "q": problem.boundary.q, "T": problem.horizon},
        "riccati": {"source": source,
                    "gdare_residual": cert.gdare_residual,
                    "kernel_violation": cert.kernel_violation},
        "decomposition": {"r": dec.r, "m1": dec.m1, "m2": dec.m2},
        "normal_rank": spec.normal_rank,
        "expected_normal_rank": 2 * dec.n + dec.m1,
        "finite_eigenvalues": [
            {"value": _complex_pair(f.value),
             "multiplicity": f.multiplicity,
             "rank_at_value": f.rank_at_value}
            for f in spec.finite_eigenvalues
        ],
        "infinite": {"algebraic": spec.infinite_algebraic,
                     "geometric": spec.infinite_geometric,
                     "refined_algebraic": spec.refined_algebraic,
                     "refined_geometric": spec.refined_geometric},
        "rank_probes": [
            {"z": _complex_pair(z), "rank": rk} for z, rk in spec.probes
        ],
        "status": "ok",
    }
    return report, EXIT_OK


def _cmd_verify_riccati(cfg: RunConfig):
    pol = _policy(cfg)
    problem = _load_problem(cfg)
    if not cfg.riccati:
        raise _CliError("verify-riccati requires --riccati", EXIT_BAD_INPUT)
    X = _load_riccati_matrix(cfg.riccati)
    sigma = problem.triple
    report = {
        "command": "verify-riccati",
        "seed": cfg.seed,
        "tolerances": _tolerances(pol),
        "problem": {"n": sigma.n, "m": sigma.m},
    }
    try:
        residual_matrix = gdare_residual(sigma, X, pol)
        violation = kernel_condition_violation(sigma, X, pol)
    except ValueError as exc:
        raise _CliError(f"invalid candidate: {exc}", EXIT_BAD_INPUT) from exc
    report["gdare_residual_matrix"] = _mat(residual_matrix)
    report["gdare_residual_norm"] = float(np.linalg.norm(residual_matrix, 2)) \
        if residual_matrix.size else 0.0
    report["kernel_violation"] = float(violation)
    try:
        cert = certify(sigma, X, pol)
    except NotRiccatiSolutionError:
        report["accepted"] = False
        report["status"] = "rejected"
        return report, EXIT_NO_RICCATI
    report["accepted"] = True
    report["status"] = "ok"
    report["derived"] = {"R_X": _mat(cert.R_X), "K_X": _mat(cert.K_X),
                         "A_X": _mat(cert.A_X), "G_X": _mat(cert.G_X)}
    return report, EXIT_OK


def _cmd_oracle(cfg: RunConfig):
    pol = _policy(cfg)
    problem = _load_problem(cfg)
    try:
        validate(problem, pol)
        qp = flatten(problem)
    except (ValidationError, OracleSizeError) as exc:
        raise _CliError(str(exc), EXIT_BAD_INPUT) from exc
    z, cost, feasible = solve_flat(qp, pol)
    report = {
        "command": "oracle",
        "seed": cfg.seed,
        "tolerances": _tolerances(pol),
        "problem": {"n": problem.triple.n, "m": problem.triple.m,
                    "q": problem.boundary.q, "T": problem.horizon},
        "status": "ok" if feasible else "infeasible",
        "feasible": bool(feasible),
        "cost": float(cost),
        "x0": _mat(np.atleast_2d(z[:qp.n]))[0],
        "u": _mat(qp.controls(z)),
        "projected_gradient_norm": projected_gradient_norm(qp, z, pol),
    }
    return report, EXIT_OK if feasible else EXIT_INFEASIBLE


def _selftest_checks(pol: TolerancePolicy, seed: int):
    sigma = singular_triple()
    X = singular_riccati_solution()
    checks = []

    def record(name, passed, detail):
        checks.append({"name": name, "passed": bool(passed), "detail": detail})

    cert = certify(sigma, X, pol)
    record("riccati-certificate",
           cert.gdare_residual <= 1e-10 and cert.kernel_violation <= 1e-10,
           f"residual {cert.gdare_residual:.2e}, "
           f"violation {cert.kernel_violation:.2e}")

    dec = reachability_decomposition(cert, split_inputs(cert, pol), pol)
    spec = generalized_spectrum(dec, pol, seed=seed)
    finite_ok = (len(spec.finite_eigenvalues) == 1
                 and abs(spec.finite_eigenvalues[0].value) <= pol.eig_match_tol
                 and spec.finite_eigenvalues[0].multiplicity == 1)
    record("pencil-structure",
           spec.normal_rank == 5 and finite_ok
           and spec.infinite_algebraic == 2 and spec.infinite_geometric == 1,
           f"normal rank {spec.normal_rank}, "
           f"{len(spec.finite_eigenvalues)} finite eigenvalue(s), "
           f"infinity ({spec.infinite_algebraic}, {spec.infinite_geometric})")

    problem = load_problem(bundled_problem_path())
    sol = solve_with_decomposition(problem, dec, pol)
    qp = flatten(problem)
    _, oracle_cost, feasible = solve_flat(qp, pol)
    cost_ok = feasible and abs(sol.cost - oracle_cost) <= 1e-8 * (1.0 + abs(oracle_cost))
    record("solve-vs-oracle", cost_ok and sol.residuals.passed,
           f"cost {sol.cost:.12g} vs oracle {oracle_cost:.12g}, "
           f"stationarity {'passed' if sol.residuals.passed else 'failed'}")
    return checks


def _cmd_selftest(cfg: RunConfig):
    pol = _policy(cfg)
    checks = _selftest_checks(pol, cfg.seed)
    all_passed = all(c["passed"] for c in checks)
    report = {
        "command": "selftest",
        "seed": cfg.seed,
        "tolerances": _tolerances(pol),
        "checks": checks,
        "all_passed": all_passed,
        "status": "ok" if all_passed else "failed",
    }
    return report, EXIT_OK if all_passed else EXIT_SELFTEST_FAILED


_COMMANDS = {
    "solve": _cmd_solve,
    "analyze-pencil": _cmd_analyze_pencil,
    "verify-riccati": _cmd_verify_riccati,
    "oracle": _cmd_oracle,
    "selftest": _cmd_selftest,
}


def run(cfg: RunConfig) -> int:
    """Execute one configuration; writes the JSON report to cfg.out (or
    stdout) and returns the exit code."""
    try:
        handler = _COMMANDS[cfg.command]
    except KeyError:
        _emit({"command": cfg.command, "status": "error",
               "error": f"unknown command {cfg.command!r}"}, cfg)
        return EXIT_BAD_INPUT
    try:
        report, code = handler(cfg)
    except _CliError as exc:
        status = {EXIT_NO_RICCATI: "riccati-failed",
                  EXIT_BAD_INPUT: "bad-input"}.get(exc.code, "error")
        report = {"command": cfg.command, "status": status,
                  "error": str(exc)}
        code = exc.code
    _emit(report, cfg)
    return code


def _emit(report: dict, cfg: RunConfig) -> None:
    text = json.dumps(report, indent=2) + "\n"
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
        status = report.get("status", "?")
        line = f"{cfg.command}: {status}"
        if "cost" in report.get("solution", {}):
            line += f", cost {report['solution']['cost']:.12g}"
        elif "cost" in report:
            line += f", cost {report['cost']:.12g}"
        print(line + f" (report: {cfg.out})")
    else:
        sys.stdout.write(text)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lqpencil",
        description="Finite-horizon LQ control via symplectic-pencil "
                    "decomposition, with an independent QP oracle.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("solve", "solve a problem file"),
            ("analyze-pencil", "report the pencil eigenstructure"),
            ("verify-riccati", "certify a candidate Riccati solution"),
            ("oracle", "solve via the flat-QP oracle"),
            ("selftest", "run bundled closed-form checks")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--problem", help="problem JSON file")
        p.add_argument("--riccati", help="candidate Riccati JSON file "
                                         "(object with key 'X')")
        p.add_argument("--out", help="write the JSON report here")
        p.add_argument("--rank-tol", type=float, default=None,
                       help="relative rank cutoff (default 1e-10)")
        p.add_argument("--residual-tol", type=float, default=None,
                       help="residual tolerance (default 1e-8)")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                       help="seed for rank-probe sampling")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    cfg = RunConfig(command=args.command, problem=args.problem,
                    riccati=args.riccati, out=args.out,
                    rank_tol=args.rank_tol, residual_tol=args.residual_tol,
                    seed=args.seed)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
