"""Constrained generalized discrete algebraic Riccati equation (CGDARE).

For a Popov triple (A, B; Q, S, R) a symmetric X solves the CGDARE when

    X = A' X A - S_X R_X^+ S_X' + Q      with      ker R_X <= ker S_X,

where  S_X = A' X B + S  and  R_X = R + B' X B.  R_X may be singular;
the kernel condition makes the pseudo-inverse term basis-independent.
Derived from a solution X are the closed-loop quantities

    K_X = R_X^+ S_X',   A_X = A - B K_X,   G_X = I - R_X^+ R_X,
    C_X = C - D K_X     (with Pi = [C D]' [C D]),

G_X being the orthogonal projector onto ker R_X.  These drive the
pencil decomposition and the trajectory parameterization downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import (
    DEFAULT_POLICY,
    DimensionMismatchError,
    TolerancePolicy,
    _as_matrix,
    image_basis,
    kernel_basis,
    matrix_norm,
    pseudo_inverse,
    subspace_distance,
)
from .model import PopovTriple, factor_cost


class NotSymmetricError(ValueError):
    """A candidate X is not symmetric."""


class NotRiccatiSolutionError(ValueError):
    """A candidate X fails the CGDARE residual or kernel condition."""

    def __init__(self, message, gdare_residual=None, kernel_violation=None):
        super().__init__(message)
        self.gdare_residual = gdare_residual
        self.kernel_violation = kernel_violation


class RiccatiIterationError(RuntimeError):
    """Base class for fixed-point iteration failures."""


class RiccatiDivergenceError(RiccatiIterationError):
    """Iterates grew without bound."""


class RiccatiNoConvergenceError(RiccatiIterationError):
    """Successive differences did not settle within max_iters."""


class RiccatiKernelConditionError(RiccatiIterationError):
    """The iteration limit violates ker R_X <= ker S_X."""


def _check_candidate(sigma: PopovTriple, X, pol) -> np.ndarray:
    X = _as_matrix(X, "X")
    n = sigma.n
    if X.shape != (n, n):
        raise DimensionMismatchError(f"X must be {n} x {n}")
    if matrix_norm(X - X.T) > pol.residual_tol * (1.0 + matrix_norm(X)):
        raise NotSymmetricError("X is not symmetric")
    return 0.5 * (X + X.T)


def _derived(sigma: PopovTriple, X, pol):
    S_X = sigma.A.T @ X @ sigma.B + sigma.S
    R_X = sigma.R + sigma.B.T @ X @ sigma.B
    R_X = 0.5 * (R_X + R_X.T)
    Rp = pseudo_inverse(R_X, pol)
    K_X = Rp @ S_X.T
    G_X = np.eye(sigma.m) - Rp @ R_X
    return S_X, R_X, Rp, K_X, G_X


def gdare_residual(sigma: PopovTriple, X, pol: TolerancePolicy = DEFAULT_POLICY) -> np.ndarray:
    """Residual matrix X - A'XA + S_X R_X^+ S_X' - Q of a symmetric candidate."""
    X = _check_candidate(sigma, X, pol)
    S_X, _, Rp, _, _ = _derived(sigma, X, pol)
    return X - sigma.A.T @ X @ sigma.A + S_X @ Rp @ S_X.T - sigma.Q


def kernel_condition_violation(sigma: PopovTriple, X,
                               pol: TolerancePolicy = DEFAULT_POLICY) -> float:
    """Spectral norm of S_X G_X; zero iff ker R_X <= ker S_X."""
    X = _check_candidate(sigma, X, pol)
    S_X, _, _, _, G_X = _derived(sigma, X, pol)
    return matrix_norm(S_X @ G_X)


@dataclass(frozen=True)
class RiccatiCertificate:
    """A CGDARE solution X together with its derived closed-loop data
    and the residual norms that certified it."""

    sigma: PopovTriple
    X: np.ndarray
    S_X: np.ndarray
    R_X: np.ndarray
    G_X: np.ndarray
    K_X: np.ndarray
    A_X: np.ndarray
    C_X: np.ndarray
    gdare_residual: float
    kernel_violation: float


def certify(sigma: PopovTriple, X, pol: TolerancePolicy = DEFAULT_POLICY) -> RiccatiCertificate:
    """Verify a candidate X and package the derived quantities.

    Accepts X when both the CGDARE residual norm and the kernel-condition
    violation are at most ``residual_tol * (1 + ||Pi|| + ||X||)``.

    Raises
    ------
    NotRiccatiSolutionError
        Carrying both residual norms, when either check fails.
    """
    Xs = _check_candidate(sigma, X, pol)
    S_X, R_X, Rp, K_X, G_X = _derived(sigma, Xs, pol)
    res = Xs - sigma.A.T @ Xs @ sigma.A + S_X @ Rp @ S_X.T - sigma.Q
    res_norm = matrix_norm(res)
    viol = matrix_norm(S_X @ G_X)
    threshold = pol.residual_tol * (1.0 + matrix_norm(sigma.pi) + matrix_norm(Xs))
    if res_norm > threshold or viol > threshold:
        raise NotRiccatiSolutionError(
            f"X is not a CGDARE solution (residual {res_norm:.3e}, "
            f"kernel violation {viol:.3e}, threshold {threshold:.3e})",
            gdare_residual=res_norm, kernel_violation=viol)
    C, D = factor_cost(sigma, pol)
    return RiccatiCertificate(
        sigma=sigma, X=Xs, S_X=S_X, R_X=R_X, G_X=G_X, K_X=K_X,
        A_X=sigma.A - sigma.B @ K_X, C_X=C - D @ K_X,
        gdare_residual=float(res_norm), kernel_violation=float(viol))


@dataclass(frozen=True)
class InputSplit:
    """Orthogonal input coordinates adapted to R_X.

    T1 spans im R_X (m1 columns), T2 spans ker R_X (m2 = m - m1
    columns); [T1 T2] is orthogonal.  R_X0 = T1' R_X T1 is the
    invertible regular block, B1 = B T1, B2 = B T2.
    """

    T1: np.ndarray
    T2: np.ndarray
    R_X0: np.ndarray
    B1: np.ndarray
    B2: np.ndarray

    @property
    def m1(self) -> int:
        return self.T1.shape[1]

    @property
    def m2(self) -> int:
        return self.T2.shape[1]


def split_inputs(cert: RiccatiCertificate, pol: TolerancePolicy = DEFAULT_POLICY) -> InputSplit:
    """Split input space along im R_X (regular) and ker R_X (free).

    R_X is symmetric PSD here, so the two spans are orthogonal
    complements and [T1 T2] is orthogonal by construction.
    """
    R_X = cert.R_X
    T1 = image_basis(R_X, pol)
    T2 = kernel_basis(R_X, pol)
    R_X0 = T1.T @ R_X @ T1
    return InputSplit(T1=T1, T2=T2, R_X0=0.5 * (R_X0 + R_X0.T),
                      B1=cert.sigma.B @ T1, B2=cert.sigma.B @ T2)


def iterate_grde(sigma: PopovTriple, X0=None, max_iters: int = 5000,
                 pol: TolerancePolicy = DEFAULT_POLICY) -> RiccatiCertificate:
    """Run the Riccati difference iteration X <- A'XA - S_X R_X^+ S_X' + Q
    to a fixed point and certify the limit.

    Starts from X0 (default 0).  Convergence is declared when the
    successive difference drops below ``residual_tol * (1 + ||X||) * 1e-3``
    (tighter than the certification threshold so the limit certifies).

    Raises
    ------
    RiccatiDivergenceError
        Iterate norm exceeded 1e12 * (1 + ||Q||).
    RiccatiNoConvergenceError
        No fixed point within max_iters.
    RiccatiKernelConditionError
        The limit solves the GDARE but violates ker R_X <= ker S_X.
    """
    n = sigma.n
    X = np.zeros((n, n)) if X0 is None else _check_candidate(sigma, X0, pol)
    bound = 1e12 * (1.0 + matrix_norm(sigma.Q))
    tol_scale = 1e-3 * pol.residual_tol
    for _ in range(max_iters):
        S_X, R_X, Rp, _, _ = _derived(sigma, X, pol)
        X_next = sigma.A.T @ X @ sigma.A - S_X @ Rp @ S_X.T + sigma.Q
        X_next = 0.5 * (X_next + X_next.T)
        if matrix_norm(X_next) > bound:
            raise RiccatiDivergenceError("Riccati iterates diverged")
        step = matrix_norm(X_next - X)
        X = X_next
        if step <= tol_scale * (1.0 + matrix_norm(X)):
            break
    else:
        raise RiccatiNoConvergenceError(
            f"no fixed point within {max_iters} iterations")
    try:
        return certify(sigma, X, pol)
    except NotRiccatiSolutionError as exc:
        threshold = pol.residual_tol * (1.0 + matrix_norm(sigma.pi) + matrix_norm(X))
        if exc.kernel_violation is not None and exc.kernel_violation > threshold:
            raise RiccatiKernelConditionError(
                f"iteration limit violates the kernel condition "
                f"(||S_X G_X|| = {exc.kernel_violation:.3e})") from exc
        raise RiccatiNoConvergenceError(
            f"iteration limit fails certification: {exc}") from exc


@dataclass(frozen=True)
class SolutionPairReport:
    """Invariants shared by any two CGDARE solutions of one triple.

    All entries are distances/residuals; ``passed`` is their comparison
    against eig_match_tol.  For any two solutions X, Y: ker R_X = ker R_Y,
    the closed-loop reachable subspaces coincide, and A_X, A_Y agree on
    that subspace.  Additionally ker R_X = ker(X B) ∩ ker R and the
    reachable subspace lies in ker C_X.
    """

    kernel_distance: float
    reachable_distance: float
    restriction_residual: float
    output_nulling_residual: float
    kernel_intersection_distance: float
    passed: bool


def check_solution_pair_invariants(c1: RiccatiCertificate, c2: RiccatiCertificate,
                                   pol: TolerancePolicy = DEFAULT_POLICY) -> SolutionPairReport:
    """Check the solution-independent structure shared by two certificates.

    Raises
    ------
    DimensionMismatchError
        When the certificates come from different Popov triples.
    """
    s1, s2 = c1.sigma, c2.sigma
    same = all(np.array_equal(getattr(s1, k), getattr(s2, k))
               for k in ("A", "B", "Q", "S", "R"))
    if not same:
        raise DimensionMismatchError("certificates come from different triples")

    from .pencil import reachability_decomposition  # local: avoids module cycle

    ker1 = kernel_basis(c1.R_X, pol)
    ker2 = kernel_basis(c2.R_X, pol)
    kernel_distance = subspace_distance(ker1, ker2)

    d1 = reachability_decomposition(c1, split_inputs(c1, pol), pol)
    d2 = reachability_decomposition(c2, split_inputs(c2, pol), pol)
    W1 = d1.U[:, :d1.r]
    W2 = d2.U[:, :d2.r]
    reachable_distance = subspace_distance(W1, W2)

    scale = 1.0 + matrix_norm(c1.A_X) + matrix_norm(c2.A_X)
    restriction_residual = matrix_norm((c1.A_X - c2.A_X) @ W1) / scale

    output_nulling_residual = max(matrix_norm(c1.C_X @ W1), matrix_norm(c2.C_X @ W2))

    inter1 = kernel_basis(np.vstack([c1.X @ s1.B, s1.R]), pol)
    kernel_intersection_distance = subspace_distance(ker1, inter1)

    passed = all(val <= pol.eig_match_tol for val in (
        kernel_distance, reachable_distance, restriction_residual,
        output_nulling_residual, kernel_intersection_distance))
    return SolutionPairReport(
        kernel_distance=float(kernel_distance),
        reachable_distance=float(reachable_distance),
        restriction_residual=float(restriction_residual),
        output_nulling_residual=float(output_nulling_residual),
        kernel_intersection_distance=float(kernel_intersection_distance),
        passed=passed)
