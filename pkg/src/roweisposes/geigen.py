"""Dense symmetric linear algebra: centering and the symmetric-definite
generalized eigenproblem ``A u = lambda B u``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import IndefiniteConstraintError, InvalidDimensionError

# Relative eigenvalue gap below which eigenpairs are treated as one cluster.
CLUSTER_RTOL = 1e-10
# Decimals kept when comparing eigenvectors lexicographically inside a cluster.
_KEY_DECIMALS = 9


@dataclass(frozen=True)
class GeneralizedEigenResult:
    """Leading eigenpairs of a symmetric-definite pencil.

    Attributes
    ----------
    eigenvalues : ndarray of shape (p,)
        Sorted non-increasing.
    eigenvectors : ndarray of shape (d, p)
        Columns are B-orthonormal generalized eigenvectors.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def centering_matrix(n: int) -> np.ndarray:
    """Return ``I - (1/n) 1 1^T`` of size ``n``."""
    if int(n) != n or n < 1:
        raise InvalidDimensionError(f"centering matrix needs n >= 1, got {n}")
    n = int(n)
    return np.eye(n) - np.full((n, n), 1.0 / n)


def center_columns(X) -> np.ndarray:
    """Return ``X H``: subtract the row means of a d x n matrix.

    H is never materialized.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.size == 0:
        raise InvalidDimensionError(f"expected a non-empty 2-D matrix, got shape {X.shape}")
    return X - X.mean(axis=1, keepdims=True)


def regularize(B, eps: float) -> np.ndarray:
    """Return ``B + eps I``."""
    if eps < 0:
        raise InvalidDimensionError(f"eps must be nonnegative, got {eps}")
    B = np.asarray(B, dtype=np.float64)
    return B + eps * np.eye(B.shape[0])


def _symmetric(M, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise InvalidDimensionError(f"{name} must be a non-empty square matrix, got shape {M.shape}")
    return 0.5 * (M + M.T)


def _failing_pivot(B: np.ndarray) -> tuple[int, float]:
    # Unblocked outer-product Cholesky, used only to report where factorization breaks.
    S = np.array(B, dtype=np.float64)
    d = S.shape[0]
    pivots = np.empty(d)
    for k in range(d):
        pivot = S[k, k]
        pivots[k] = pivot
        if not pivot > 0.0:
            return k, float(pivot)
        col = S[k + 1 :, k] / np.sqrt(pivot)
        S[k + 1 :, k + 1 :] -= np.outer(col, col)
    # LAPACK rejected a borderline matrix that this pass accepted.
    k = int(np.argmin(pivots))
    return k, float(pivots[k])


def cholesky_lower(B) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises
    ------
    IndefiniteConstraintError
        If ``B`` is not positive definite. The error names the first
        pivot that is not strictly positive.
    """
    B = _symmetric(B, "B")
    if not np.all(np.isfinite(B)):
        raise IndefiniteConstraintError(0, float("nan"))
    try:
        return np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        index, value = _failing_pivot(B)
        raise IndefiniteConstraintError(index, value) from None


def is_positive_definite(B) -> bool:
    try:
        cholesky_lower(B)
    except IndefiniteConstraintError:
        return False
    return True


def _canonical_signs(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _lex_key(v: np.ndarray) -> tuple:
    scale = np.max(np.abs(v))
    nz = np.flatnonzero(np.abs(v) > 1e-12 * scale) if scale > 0 else []
    if len(nz) and v[nz[0]] < 0:
        v = -v
    return tuple(np.round(v / scale if scale > 0 else v, _KEY_DECIMALS))


def _order_clusters(w: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reorder columns inside clusters of numerically equal eigenvalues."""
    scale = np.max(np.abs(w)) if w.size else 0.0
    order = np.arange(w.size)
    start = 0
    for k in range(1, w.size + 1):
        if k == w.size or abs(w[k - 1] - w[k]) > CLUSTER_RTOL * scale:
            if k - start > 1:
                members = list(range(start, k))
                members.sort(key=lambda j: _lex_key(V[:, j]))
                order[start:k] = members
            start = k
    return w[order], V[:, order]


def solve_generalized_eig(A, B, p: int) -> GeneralizedEigenResult:
    """Top-``p`` eigenpairs of the symmetric-definite pencil ``(A, B)``.

    The pencil is reduced with ``B = L L^T`` to the standard symmetric
    problem on ``L^-1 A L^-T``; the eigenvectors are mapped back with
    ``L^-T``, which makes them B-orthonormal by construction.

    Eigenvalues are returned in non-increasing order. Inside a cluster of
    numerically equal eigenvalues, columns are ordered lexicographically
    (each compared with its first nonzero entry made positive). Every
    returned column is then flipped so its largest-magnitude entry is
    positive.

    Raises
    ------
    InvalidDimensionError
        On mismatched shapes or ``p`` outside ``[1, d]``.
    IndefiniteConstraintError
        If ``B`` is not positive definite.
    """
    A = _symmetric(A, "A")
    B = _symmetric(B, "B")
    d = A.shape[0]
    if B.shape != A.shape:
        raise InvalidDimensionError(f"pencil shapes differ: {A.shape} vs {B.shape}")
    if int(p) != p or not 1 <= p <= d:
        raise InvalidDimensionError(f"p must be in [1, {d}], got {p}")
    p = int(p)

    L = cholesky_lower(B)
    C = solve_triangular(L, A, lower=True)
    C = solve_triangular(L, C.T, lower=True)
    C = 0.5 * (C + C.T)
    w, Y = np.linalg.eigh(C)
    U = solve_triangular(L.T, Y, lower=False)

    desc = np.argsort(-w, kind="stable")
    w, U = w[desc], U[:, desc]
    w, U = _order_clusters(w, U)
    U = _canonical_signs(U[:, :p])
    return GeneralizedEigenResult(eigenvalues=w[:p].copy(), eigenvectors=U)


def pencil_residuals(A, B, result: GeneralizedEigenResult) -> np.ndarray:
    """Per-column residual ``||A u - lambda B u|| / (||A||_F + |lambda| ||B||_F)``."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    U, w = result.eigenvectors, result.eigenvalues
    R = A @ U - (B @ U) * w
    scale = np.linalg.norm(A) + np.abs(w) * np.linalg.norm(B)
    scale = np.where(scale > 0, scale, 1.0)
    return np.linalg.norm(R, axis=0) / scale
