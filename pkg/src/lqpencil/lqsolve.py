"""Finite-horizon LQ solves via the pencil decomposition.

In the decomposition coordinates (reachable part x1 of dimension r,
unreachable part x2 of dimension n - r, regular inputs u1 of dimension
m1, free inputs u2 of dimension m2), every stationary trajectory is
generated by a finite-dimensional parameter

    chi = (x1(0), x1(T), x2(0), l2T)

together with the stacked free inputs.  Here l2T is the terminal value
of the second block of the *decomposed* costate

    lhat(t) = X x(t) - lambda(t)           (in U-coordinates),

whose first block vanishes identically and whose second block runs the
backward recursion lhat2(t) = A_X22'^(T-t) l2T.  The closed-form pieces
are

    u1(t)  = R_X0^{-1} B12' A_X22'^(T-t-1) l2T
    x2(t)  = A_X22^t x2(0) + sum_{j<t} A_X22^(t-1-j) B12 u1(j)
    x2(T)  = A_X22^T x2(0) + P l2T,   P = sum_j A_X22^j W A_X22'^j  (PSD)

with W = B12 R_X0^{-1} B12'.  The reachable block x1 is steered by the
free inputs through the reachability matrix of (A_X11, B21); its
endpoints are decision variables.  Boundary and transversality
conditions close the system: a square linear system in chi whose
solution set, combined with the null space of the reachability matrix,
parameterizes *all* optimal trajectories.

Original coordinates are recovered by x = U [x1; x2],
lambda = X x - U [0; lhat2], u = T1 u1 + T2 u2 - K_X x.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import (
    DEFAULT_POLICY,
    MixedSpectrumError,
    TolerancePolicy,
    _as_vector,
    discrete_lyapunov,
    kernel_basis,
    matrix_norm,
    pseudo_inverse,
    rank_of,
    solve_affine,
)
from .model import LqProblem, evaluate_cost, validate
from .pencil import DecompositionError, PencilDecomposition, reachability_decomposition
from .riccati import RiccatiCertificate, split_inputs


class LqSolveError(RuntimeError):
    """Base class for solve-stage failures."""


class InfeasibleProblemError(LqSolveError):
    """The boundary constraints admit no stationary trajectory (and the
    problem, being convex with value bounded below, admits no optimum)."""


class HorizonTooShortError(LqSolveError):
    """The horizon is shorter than the controllability index of the
    reachable block, so the endpoint map is rank-deficient and
    solvability of the boundary system no longer decides feasibility."""


def _powers(A: np.ndarray, k: int):
    """[I, A, A^2, ..., A^k]."""
    d = A.shape[0]
    out = [np.eye(d)]
    for _ in range(k):
        out.append(A @ out[-1])
    return out


def controllability_index(A, B, pol: TolerancePolicy = DEFAULT_POLICY) -> int:
    """Smallest k with rank [B, AB, ..., A^(k-1)B] equal to its limit.

    For a reachable pair this is the usual controllability index; the
    pair (A_X11, B21) produced by the decomposition is reachable by
    construction.
    """
    d = A.shape[0]
    if d == 0:
        return 0
    blocks = []
    prev = 0
    mat = B
    for k in range(1, d + 1):
        blocks.append(mat)
        rk = rank_of(np.hstack(blocks), pol)
        if rk == prev:
            return k - 1
        if rk == d:
            return k
        prev = rk
        mat = A @ mat
    return d


def costate2(dec: PencilDecomposition, horizon: int, lambda2_T, t: int) -> np.ndarray:
    """Second costate block lhat2(t) = A_X22'^(T-t) lambda2_T, 0 <= t <= T."""
    if not 0 <= t <= horizon:
        raise ValueError(f"t={t} outside 0..{horizon}")
    l2T = _as_vector(lambda2_T, "lambda2_T")
    return np.linalg.matrix_power(dec.A_X22.T, horizon - t) @ l2T


def control_reg(dec: PencilDecomposition, horizon: int, lambda2_T, t: int) -> np.ndarray:
    """Regular input u1(t) = R_X0^{-1} B12' A_X22'^(T-t-1) lambda2_T."""
    if not 0 <= t <= horizon - 1:
        raise ValueError(f"t={t} outside 0..{horizon - 1}")
    l2T = _as_vector(lambda2_T, "lambda2_T")
    rhs = dec.B12.T @ np.linalg.matrix_power(dec.A_X22.T, horizon - t - 1) @ l2T
    if dec.m1 == 0:
        return np.zeros(0)
    return np.linalg.solve(dec.split.R_X0, rhs)


def state_sing(dec: PencilDecomposition, horizon: int, x2_0, lambda2_T, t: int) -> np.ndarray:
    """Unreachable state block driven by the regular inputs."""
    if not 0 <= t <= horizon:
        raise ValueError(f"t={t} outside 0..{horizon}")
    x2 = _as_vector(x2_0, "x2_0")
    for j in range(t):
        x2 = dec.A_X22 @ x2 + dec.B12 @ control_reg(dec, horizon, lambda2_T, j)
    return x2


def endpoint_gramian(dec: PencilDecomposition, horizon: int,
                     pol: TolerancePolicy = DEFAULT_POLICY) -> np.ndarray:
    """P = sum_{j=0}^{T-1} A_X22^j B12 R_X0^{-1} B12' A_X22'^j (PSD).

    Satisfies P - A22 P A22' = W - A22^T W A22'^T with
    W = B12 R_X0^{-1} B12'; when A_X22 has unmixed spectrum this is
    cross-checked against the discrete Lyapunov solver.
    """
    A22 = dec.A_X22
    d = A22.shape[0]
    if d == 0:
        return np.zeros((0, 0))
    if dec.m1 == 0:
        return np.zeros((d, d))
    W = dec.B12 @ np.linalg.solve(dec.split.R_X0, dec.B12.T)
    W = 0.5 * (W + W.T)
    P = np.zeros((d, d))
    term = W
    for _ in range(horizon):
        P += term
        term = A22 @ term @ A22.T
    P = 0.5 * (P + P.T)
    # term now holds A22^T W A22'^T
    try:
        P_lyap = discrete_lyapunov(A22, W - term, pol)
    except MixedSpectrumError:
        return P
    if matrix_norm(P - P_lyap) > pol.residual_tol * (1.0 + matrix_norm(P)) * 10:
        raise DecompositionError("endpoint gramian failed Lyapunov cross-check")
    return P


@dataclass(frozen=True)
class TrajectoryParam:
    """Stacked operators for the reachable block over the horizon.

    With time-reversed stacking Ustack = [u2(T-1); ...; u2(0)] and
    Xi = [xi(T-1); ...; xi(0)] (xi(t) = A_X12 x2(t) + B11 u1(t)),

        x1(T) = A_X11^T x1(0) + R1 Ustack + R2 Xi,

    R1 = [B21 | A11 B21 | ... | A11^(T-1) B21],
    R2 = [I | A11 | ... | A11^(T-1)].
    """

    dec: PencilDecomposition
    horizon: int
    gramian: np.ndarray
    R1: np.ndarray
    R2: np.ndarray


def trajectory_param(dec: PencilDecomposition, horizon: int,
                     pol: TolerancePolicy = DEFAULT_POLICY) -> TrajectoryParam:
    """Assemble the endpoint gramian and stacked reachability operators."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    r, m2 = dec.r, dec.m2
    pows = _powers(dec.A_X11, horizon - 1)
    if r:
        R1 = np.hstack([pows[k] @ dec.B21 for k in range(horizon)]) if m2 else \
            np.zeros((r, 0))
        R2 = np.hstack(pows[:horizon])
    else:
        R1 = np.zeros((0, horizon * m2))
        R2 = np.zeros((0, 0))
    return TrajectoryParam(dec=dec, horizon=horizon,
                           gramian=endpoint_gramian(dec, horizon, pol),
                           R1=R1, R2=R2)


def control_free_param(dec: PencilDecomposition, horizon: int, x1_0, x1_T,
                       xi_seq, pol: TolerancePolicy = DEFAULT_POLICY):
    """Minimum-norm stacked free inputs steering x1(0) to x1(T).

    Parameters
    ----------
    xi_seq : (T, r) array
        Forward-time drift terms xi(0), ..., xi(T-1).

    Returns
    -------
    u_stack : ndarray, shape (T * m2,)
        Time-reversed stack [u2(T-1); ...; u2(0)], the minimum-norm
        particular choice.
    nullspace : ndarray
        Orthonormal basis of ker R1; adding any combination leaves the
        whole optimal trajectory's cost unchanged.
    reachable : bool
        Whether the required endpoint displacement lies in im R1.
    """
    tp = trajectory_param(dec, horizon, pol)
    x1_0 = _as_vector(x1_0, "x1_0")
    x1_T = _as_vector(x1_T, "x1_T")
    xi = np.asarray(xi_seq, dtype=float).reshape(horizon, dec.r)
    xi_stack = xi[::-1].reshape(-1)
    target = x1_T - np.linalg.matrix_power(dec.A_X11, horizon) @ x1_0 \
        - (tp.R2 @ xi_stack if dec.r else np.zeros(0))
    u_stack = pseudo_inverse(tp.R1, pol) @ target
    residual = np.linalg.norm(tp.R1 @ u_stack - target) if dec.r else 0.0
    reachable = bool(residual <= pol.residual_tol * (1.0 + np.linalg.norm(target)))
    return u_stack, kernel_basis(tp.R1, pol), reachable


@dataclass(frozen=True)
class BoundarySystem:
    """Square linear system F chi = g in chi = (x1(0), x1(T), x2(0), l2T).

    The first q rows impose the affine endpoint constraint; the
    remaining 2n - q rows impose transversality of the endpoint
    penalty, projected onto the orthogonal complement of the constraint
    rows (which is where the multiplier cannot absorb it).
    """

    F: np.ndarray
    g: np.ndarray
    r: int
    n: int
    horizon: int


def assemble_boundary(problem: LqProblem, dec: PencilDecomposition,
                      pol: TolerancePolicy = DEFAULT_POLICY) -> BoundarySystem:
    """Build the 2n x 2n boundary/transversality system.

    Endpoint states, in decomposition coordinates, are affine in chi:
    x2(T) = A_X22^T x2(0) + P l2T with P the endpoint gramian, while
    x1(0), x1(T) are chi entries themselves.  Original costates at the
    endpoints are X x - U [0; lhat2] with lhat2(0) = A_X22'^T l2T and
    lhat2(T) = l2T, so both rows of the transversality condition are
    affine in chi as well.
    """
    T_h = problem.horizon
    cert = dec.cert
    n, r = dec.n, dec.r
    nr = n - r
    U = dec.U
    bd = problem.boundary

    A22_pow = np.linalg.matrix_power(dec.A_X22, T_h)
    P_g = endpoint_gramian(dec, T_h, pol)

    # chi layout: [x1(0) | x1(T) | x2(0) | l2T]
    c_x10, c_x1T, c_x20, c_l2T = 0, r, 2 * r, 2 * r + nr

    E_x = np.zeros((2 * n, 2 * n))
    E_x[0:r, c_x10:c_x10 + r] = np.eye(r)
    E_x[r:n, c_x20:c_x20 + nr] = np.eye(nr)
    E_x[n:n + r, c_x1T:c_x1T + r] = np.eye(r)
    E_x[n + r:2 * n, c_x20:c_x20 + nr] = A22_pow
    E_x[n + r:2 * n, c_l2T:c_l2T + nr] = P_g

    E_lhat = np.zeros((2 * n, 2 * n))
    E_lhat[r:n, c_l2T:c_l2T + nr] = np.linalg.matrix_power(dec.A_X22.T, T_h)
    E_lhat[n + r:2 * n, c_l2T:c_l2T + nr] = np.eye(nr)

    Xt = U.T @ cert.X @ U
    Xd = np.zeros((2 * n, 2 * n))
    Xd[:n, :n] = Xt
    Xd[n:, n:] = Xt
    Lam = Xd @ E_x - E_lhat

    Ud = np.zeros((2 * n, 2 * n))
    Ud[:n, :n] = U
    Ud[n:, n:] = U
    Vt = bd.V @ Ud
    Ht = Ud.T @ bd.H @ Ud
    ht = Ud.T @ np.concatenate([bd.h0, bd.hT])

    K_V = kernel_basis(Vt, pol)
    J = np.zeros((2 * n, 2 * n))
    J[:n, :n] = np.eye(n)
    J[n:, n:] = -np.eye(n)

    F = np.vstack([Vt @ E_x, K_V.T @ (Ht @ E_x + J @ Lam)])
    g = np.concatenate([bd.v, K_V.T @ Ht @ ht])
    return BoundarySystem(F=F, g=g, r=r, n=n, horizon=T_h)


@dataclass(frozen=True)
class StationarityReport:
    """Max-norm residuals of the first-order optimality system.

    ``transversality_residual`` is measured after fitting the
    constraint multiplier by least squares; ``eta`` is that fit.
    """

    dynamics_residual: float
    constraint_residual: float
    costate_residual: float
    input_residual: float
    transversality_residual: float
    eta: np.ndarray
    scale: float
    passed: bool


@dataclass(frozen=True)
class LqSolution:
    """An optimal trajectory plus the complete optimal-set description.

    ``free_boundary`` spans the directions in chi space along which the
    boundary system stays satisfied; ``free_control`` spans the
    cost-neutral stacked free inputs.  ``costate`` holds the Lagrange
    multipliers of the dynamics.
    """

    x: np.ndarray
    u: np.ndarray
    costate: np.ndarray
    cost: float
    chi: np.ndarray
    free_boundary: np.ndarray
    free_control: np.ndarray
    residuals: StationarityReport
    r: int
    m1: int
    m2: int


def free_control_for_chi(problem: LqProblem, dec: PencilDecomposition, chi,
                         pol: TolerancePolicy = DEFAULT_POLICY):
    """Minimum-norm stacked free inputs consistent with a boundary
    parameter chi; returns (u_stack, nullspace, reachable) as in
    :func:`control_free_param`."""
    T_h = problem.horizon
    r, nr = dec.r, dec.n - dec.r
    chi = _as_vector(chi, "chi")
    x1_0, x1_T = chi[0:r], chi[r:2 * r]
    x2_0, l2T = chi[2 * r:2 * r + nr], chi[2 * r + nr:]
    xi = np.empty((T_h, r))
    for t in range(T_h):
        xi[t] = dec.A_X12 @ state_sing(dec, T_h, x2_0, l2T, t) \
            + dec.B11 @ control_reg(dec, T_h, l2T, t)
    return control_free_param(dec, T_h, x1_0, x1_T, xi, pol)


def reconstruct_trajectories(problem: LqProblem, dec: PencilDecomposition,
                             chi, u_free_stack,
                             pol: TolerancePolicy = DEFAULT_POLICY):
    """Rebuild (x, u, costate) arrays from (chi, stacked free inputs).

    ``u_free_stack`` follows the time-reversed convention of
    :func:`control_free_param`.  Returns arrays of shapes (T+1, n),
    (T, m), (T+1, n).
    """
    T_h = problem.horizon
    cert, split = dec.cert, dec.split
    n, r, m1, m2 = dec.n, dec.r, dec.m1, dec.m2
    nr = n - r
    chi = _as_vector(chi, "chi")
    x1_0, x2_0 = chi[0:r], chi[2 * r:2 * r + nr]
    l2T = chi[2 * r + nr:]
    u_free_stack = _as_vector(u_free_stack, "u_free_stack") if m2 else np.zeros(0)

    lhat2 = np.array([costate2(dec, T_h, l2T, t) for t in range(T_h + 1)])
    u1 = np.array([control_reg(dec, T_h, l2T, t) for t in range(T_h)]).reshape(T_h, m1)
    x2 = np.empty((T_h + 1, nr))
    x2[0] = x2_0
    for t in range(T_h):
        x2[t + 1] = dec.A_X22 @ x2[t] + dec.B12 @ u1[t]

    u2 = np.empty((T_h, m2))
    for t in range(T_h):
        u2[t] = u_free_stack[(T_h - 1 - t) * m2:(T_h - t) * m2]

    x1 = np.empty((T_h + 1, r))
    x1[0] = x1_0
    for t in range(T_h):
        xi_t = dec.A_X12 @ x2[t] + dec.B11 @ u1[t]
        x1[t + 1] = dec.A_X11 @ x1[t] + dec.B21 @ u2[t] + xi_t

    xs = np.empty((T_h + 1, n))
    lams = np.empty((T_h + 1, n))
    for t in range(T_h + 1):
        xt = dec.U @ np.concatenate([x1[t], x2[t]])
        xs[t] = xt
        lams[t] = cert.X @ xt - dec.U @ np.concatenate([np.zeros(r), lhat2[t]])
    us = np.empty((T_h, problem.triple.m))
    for t in range(T_h):
        us[t] = split.T1 @ u1[t] + split.T2 @ u2[t] - cert.K_X @ xs[t]
    return xs, us, lams


def _stationarity(problem: LqProblem, xs, us, lams, pol) -> StationarityReport:
    tr, bd = problem.triple, problem.boundary
    T_h = problem.horizon
    dyn = max((np.linalg.norm(xs[t + 1] - tr.A @ xs[t] - tr.B @ us[t])
               for t in range(T_h)), default=0.0)
    con = np.linalg.norm(bd.V0 @ xs[0] + bd.VT @ xs[T_h] - bd.v) if bd.q else 0.0
    cos = max((np.linalg.norm(lams[t] - tr.Q @ xs[t] - tr.A.T @ lams[t + 1]
                              - tr.S @ us[t]) for t in range(T_h)), default=0.0)
    inp = max((np.linalg.norm(tr.S.T @ xs[t] + tr.B.T @ lams[t + 1] + tr.R @ us[t])
               for t in range(T_h)), default=0.0)
    e = np.concatenate([xs[0] - bd.h0, xs[T_h] - bd.hT])
    rhs = np.concatenate([-lams[0], lams[T_h]]) - bd.H @ e
    if bd.q:
        eta, *_ = np.linalg.lstsq(bd.V.T, rhs, rcond=None)
        tv = float(np.linalg.norm(bd.V.T @ eta - rhs))
    else:
        eta = np.zeros(0)
        tv = float(np.linalg.norm(rhs))
    data_scale = 1.0 + max(matrix_norm(tr.A), matrix_norm(tr.B),
                           matrix_norm(tr.pi), matrix_norm(bd.H),
                           matrix_norm(bd.V) if bd.q else 0.0)
    traj_scale = 1.0 + max(np.max(np.abs(xs)), np.max(np.abs(lams)),
                           np.max(np.abs(us)) if us.size else 0.0)
    scale = data_scale * traj_scale
    worst = max(dyn, con, cos, inp, tv)
    return StationarityReport(
        dynamics_residual=float(dyn), constraint_residual=float(con),
        costate_residual=float(cos), input_residual=float(inp),
        transversality_residual=tv, eta=eta, scale=float(scale),
        passed=bool(worst <= pol.residual_tol * scale))


def verify_stationarity(problem: LqProblem, sol: LqSolution,
                        pol: TolerancePolicy = DEFAULT_POLICY) -> StationarityReport:
    """Residuals of the discrete first-order optimality system:
    dynamics, endpoint constraint, costate recursion, input
    stationarity, and endpoint transversality (multiplier fitted by
    least squares).  ``passed`` compares the worst residual against
    ``residual_tol`` scaled by the data and trajectory norms."""
    return _stationarity(problem, sol.x, sol.u, sol.costate, pol)


def solve_problem(problem: LqProblem, cert: RiccatiCertificate,
                  pol: TolerancePolicy = DEFAULT_POLICY) -> LqSolution:
    """Solve the constrained LQ problem given a CGDARE certificate.

    Raises
    ------
    InfeasibleProblemError
        The boundary system has no solution (no optimum exists).
    HorizonTooShortError
        The horizon is below the controllability index of the
        reachable block, where the boundary system stops being a
        faithful feasibility test.
    """
    validate(problem, pol)
    dec = reachability_decomposition(cert, split_inputs(cert, pol), pol)
    return solve_with_decomposition(problem, dec, pol)


def solve_with_decomposition(problem: LqProblem, dec: PencilDecomposition,
                             pol: TolerancePolicy = DEFAULT_POLICY) -> LqSolution:
    """Solve with a pre-computed decomposition (see :func:`solve_problem`)."""
    T_h = problem.horizon
    r = dec.r

    idx = controllability_index(dec.A_X11, dec.B21, pol)
    if T_h < idx:
        raise HorizonTooShortError(
            f"horizon {T_h} is below the controllability index {idx}")

    bs = assemble_boundary(problem, dec, pol)
    chi, free_boundary, feasible = solve_affine(bs.F, bs.g, pol)
    if not feasible:
        raise InfeasibleProblemError("boundary/transversality system is infeasible")

    x1_T = chi[r:2 * r]
    u_free, free_control, reachable = free_control_for_chi(problem, dec, chi, pol)
    if not reachable:
        raise HorizonTooShortError(
            "required endpoint displacement is outside the horizon's reach")

    xs, us, lams = reconstruct_trajectories(problem, dec, chi, u_free, pol)
    if r and np.linalg.norm(dec.U[:, :r].T @ xs[T_h] - x1_T) > \
            pol.residual_tol * (1.0 + np.linalg.norm(x1_T)) * 100:
        raise DecompositionError("reconstructed x1(T) misses its target")

    report = _stationarity(problem, xs, us, lams, pol)
    return LqSolution(
        x=xs, u=us, costate=lams, cost=evaluate_cost(problem, xs, us),
        chi=chi, free_boundary=free_boundary, free_control=free_control,
        residuals=report, r=r, m1=dec.m1, m2=dec.m2)
