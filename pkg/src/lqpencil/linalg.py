"""Rank-revealing linear algebra with a single shared tolerance policy.

Every rank decision in this package (pseudo-inverses, kernel and image
bases, feasibility of affine systems) goes through the routines in this
module so that one `TolerancePolicy` controls them all.  Rank cutoffs
follow the usual SVD convention::

    cutoff = rank_rel_tol * max(rows, cols) * sigma_max

Orthonormal bases returned by :func:`kernel_basis` and :func:`image_basis`
are made deterministic by a sign convention: each basis column is flipped
so that its entry of largest magnitude (first such entry on ties) is
positive.  Repeated calls on identical input therefore produce identical
output, which the reporting layer relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NonFiniteMatrixError(ValueError):
    """A matrix argument contains NaN or Inf entries."""


class DimensionMismatchError(ValueError):
    """Matrix/vector arguments have inconsistent shapes."""


class MixedSpectrumError(ValueError):
    """The Stein operator P - A P A^T is singular (eigenvalue pair with
    lambda_i * lambda_j = 1), so the discrete Lyapunov equation has no
    unique solution."""


@dataclass(frozen=True)
class TolerancePolicy:
    """Shared numerical tolerances.

    Parameters
    ----------
    rank_rel_tol : float
        Relative singular-value cutoff for all rank decisions.
    residual_tol : float
        Base tolerance for residual checks; call sites scale it by
        the norms of their inputs.
    eig_match_tol : float
        Radius used to cluster eigenvalues and match reciprocals.
    """

    rank_rel_tol: float = 1e-10
    residual_tol: float = 1e-8
    eig_match_tol: float = 1e-7

    def __post_init__(self):
        for name in ("rank_rel_tol", "residual_tol", "eig_match_tol"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")


DEFAULT_POLICY = TolerancePolicy()


def _as_matrix(M, name="matrix"):
    """Coerce to a 2-D ndarray and reject non-finite entries."""
    A = np.atleast_2d(np.asarray(M))
    if A.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D, got ndim={A.ndim}")
    if A.size and not np.all(np.isfinite(A)):
        raise NonFiniteMatrixError(f"{name} contains NaN or Inf")
    return A


def _as_vector(v, name="vector"):
    a = np.asarray(v)
    if a.ndim == 2 and 1 in a.shape:
        a = a.ravel()
    if a.ndim != 1:
        raise DimensionMismatchError(f"{name} must be 1-D, got ndim={a.ndim}")
    if a.size and not np.all(np.isfinite(a)):
        raise NonFiniteMatrixError(f"{name} contains NaN or Inf")
    return a


def _svd_cutoff(s, shape, pol):
    smax = s[0] if len(s) else 0.0
    return pol.rank_rel_tol * max(shape) * smax


def _fix_signs(B):
    """Flip basis columns so the largest-magnitude entry is positive.

    Ties resolve to the first occurrence; makes SVD-derived bases
    deterministic across repeated runs.
    """
    B = np.array(B)
    for j in range(B.shape[1]):
        col = B[:, j]
        k = int(np.argmax(np.abs(col)))
        if col[k] < 0:
            B[:, j] = -col
    return B


def rank_of(M, pol: TolerancePolicy = DEFAULT_POLICY) -> int:
    """Numerical rank via SVD with the policy's relative cutoff.

    Accepts real or complex matrices (rank probes of matrix pencils
    evaluate at complex points).
    """
    A = _as_matrix(M)
    if 0 in A.shape:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > _svd_cutoff(s, A.shape, pol)))


def pseudo_inverse(M, pol: TolerancePolicy = DEFAULT_POLICY) -> np.ndarray:
    """Moore-Penrose pseudo-inverse with policy-controlled rank cutoff.

    Singular values at or below ``rank_rel_tol * max(shape) * sigma_max``
    are treated as zero, so the result is the pseudo-inverse of the
    nearest rank-truncated matrix.
    """
    A = _as_matrix(M)
    if 0 in A.shape:
        return np.zeros((A.shape[1], A.shape[0]))
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    cutoff = _svd_cutoff(s, A.shape, pol)
    s_inv = np.where(s > cutoff, np.divide(1.0, s, where=s > cutoff), 0.0)
    return (Vt.T * s_inv) @ U.T


def kernel_basis(M, pol: TolerancePolicy = DEFAULT_POLICY) -> np.ndarray:
    """Orthonormal basis of the (right) null space, deterministic signs.

    Returns an ``(cols, k)`` array; ``k == cols - rank_of(M)``.  A matrix
    with zero rows has full kernel and returns the identity.
    """
    A = _as_matrix(M)
    n = A.shape[1]
    if A.shape[0] == 0 or n == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(A)
    cutoff = _svd_cutoff(s, A.shape, pol)
    r = int(np.sum(s > cutoff))
    return _fix_signs(Vt[r:].T)


def image_basis(M, pol: TolerancePolicy = DEFAULT_POLICY) -> np.ndarray:
    """Orthonormal basis of the column space, deterministic signs.

    Returns an ``(rows, r)`` array with ``r == rank_of(M)``.
    """
    A = _as_matrix(M)
    if 0 in A.shape:
        return np.zeros((A.shape[0], 0))
    U, s, _ = np.linalg.svd(A)
    cutoff = _svd_cutoff(s, A.shape, pol)
    r = int(np.sum(s > cutoff))
    return _fix_signs(U[:, :r])


def orthonormal_complement(B, dim: int, pol: TolerancePolicy = DEFAULT_POLICY) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``im B`` in R^dim."""
    A = _as_matrix(B)
    if A.shape[0] != dim:
        raise DimensionMismatchError("basis rows do not match ambient dimension")
    if A.shape[1] == 0:
        return np.eye(dim)
    return kernel_basis(A.T, pol)


def solve_affine(F, g, pol: TolerancePolicy = DEFAULT_POLICY):
    """Solve ``F x = g`` in the least-squares sense, with feasibility flag.

    Returns
    -------
    particular : ndarray
        Minimum-norm least-squares solution ``F^+ g``.
    nullspace : ndarray
        Orthonormal basis of ``ker F`` (deterministic signs); the full
        solution set, when feasible, is ``particular + nullspace @ w``.
    feasible : bool
        True when ``||F @ particular - g|| <= residual_tol * (1 + ||g||)``.
    """
    A = _as_matrix(F, "F")
    b = _as_vector(g, "g")
    if A.shape[0] != b.shape[0]:
        raise DimensionMismatchError(
            f"F has {A.shape[0]} rows but g has {b.shape[0]} entries")
    particular = pseudo_inverse(A, pol) @ b
    residual = np.linalg.norm(A @ particular - b) if A.shape[0] else 0.0
    feasible = bool(residual <= pol.residual_tol * (1.0 + np.linalg.norm(b)))
    return particular, kernel_basis(A, pol), feasible


def discrete_lyapunov(A, W, pol: TolerancePolicy = DEFAULT_POLICY) -> np.ndarray:
    """Solve ``P - A P A^T = W`` for the unique solution P.

    Solves the vectorized system ``(I - A (x) A) vec(P) = vec(W)`` directly;
    raises :class:`MixedSpectrumError` when that operator is singular, i.e.
    when A has an eigenvalue pair with ``lambda_i * lambda_j = 1`` (a mixed
    spectrum straddling the unit circle, or eigenvalues on it).
    """
    A = _as_matrix(A, "A")
    W = _as_matrix(W, "W")
    n = A.shape[0]
    if A.shape != (n, n) or W.shape != (n, n):
        raise DimensionMismatchError("A and W must be square of the same size")
    if n == 0:
        return np.zeros((0, 0))
    op = np.eye(n * n) - np.kron(A, A)
    s = np.linalg.svd(op, compute_uv=False)
    if s[-1] <= _svd_cutoff(s, op.shape, pol):
        raise MixedSpectrumError(
            "mixed spectrum: A has an eigenvalue pair with product 1")
    P = np.linalg.solve(op, W.reshape(-1)).reshape(n, n)
    residual = np.linalg.norm(P - A @ P @ A.T - W)
    if residual > pol.residual_tol * (1.0 + np.linalg.norm(W)):
        raise MixedSpectrumError(
            f"discrete Lyapunov solve failed residual check ({residual:.3e})")
    return P


def matrix_norm(M) -> float:
    """Spectral norm, with the empty matrix mapped to 0."""
    A = np.atleast_2d(np.asarray(M))
    if 0 in A.shape:
        return 0.0
    return float(np.linalg.norm(A, 2))


def subspace_distance(B1, B2) -> float:
    """Distance between subspaces given orthonormal bases: the spectral
    norm of the difference of orthogonal projectors."""
    B1 = _as_matrix(B1)
    B2 = _as_matrix(B2)
    if B1.shape[0] != B2.shape[0]:
        raise DimensionMismatchError("bases live in different ambient spaces")
    P1 = B1 @ B1.T
    P2 = B2 @ B2.T
    return matrix_norm(P1 - P2)
