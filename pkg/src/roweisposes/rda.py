"""Roweis discriminant analysis.

The subspace is spanned by the leading generalized eigenvectors of the
pencil ``(R1, R2)`` with

    R1 = X H P H X^T,   P  = r1 K_y + (1 - r1) I
    R2 = r2 S_W + (1 - r2) I

where ``X`` is ``d x n`` (one sample per column), ``H`` is the centering
matrix and ``K_y`` a kernel over the labels. The corners of the factor
square ``(r1, r2)`` are PCA ``(0, 0)``, FDA ``(0, 1)``, SPCA ``(1, 0)``
and DSDA ``(1, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, FitError, IndefiniteConstraintError, InvalidDimensionError
from .geigen import center_columns, is_positive_definite, regularize, solve_generalized_eig

KERNEL_KINDS = ("delta", "linear", "rbf")
# Ridge scale relative to trace(R2)/d, used only when R2 fails to factor.
RIDGE_RELATIVE = 1e-8


@dataclass(frozen=True)
class RoweisFactors:
    r1: float
    r2: float

    def __post_init__(self):
        for name in ("r1", "r2"):
            v = float(getattr(self, name))
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"Roweis factor {name} must lie in [0, 1], got {v}")
            object.__setattr__(self, name, v)

    @property
    def supervision_level(self) -> float:
        return supervision_level(self)


def supervision_level(factors: RoweisFactors) -> float:
    """Mean of the two Roweis factors."""
    return (factors.r1 + factors.r2) / 2.0


@dataclass(frozen=True, eq=False)
class LabeledMatrix:
    """Samples as columns of ``X`` (``d x n``) with one label per column."""

    X: np.ndarray
    labels: tuple

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise InvalidDimensionError(f"X must be 2-D (d x n), got shape {X.shape}")
        labels = tuple(self.labels)
        if len(labels) != X.shape[1]:
            raise InvalidDimensionError(f"{len(labels)} labels for {X.shape[1]} samples")
        if X.shape[1] < 2 or X.shape[0] < 1:
            raise InvalidDimensionError(f"need d >= 1 and n >= 2, got shape {X.shape}")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", labels)

    @property
    def d(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def classes(self) -> tuple:
        return tuple(sorted(set(self.labels)))


@dataclass(frozen=True, eq=False)
class LabelKernel:
    kind: str
    matrix: np.ndarray
    gamma: Optional[float] = None


def _class_index(labels, classes) -> np.ndarray:
    lookup = {c: i for i, c in enumerate(classes)}
    return np.array([lookup[l] for l in labels], dtype=np.intp)


def _one_hot(labels, classes) -> np.ndarray:
    Y = np.zeros((len(labels), len(classes)))
    Y[np.arange(len(labels)), _class_index(labels, classes)] = 1.0
    return Y


def _check_kernel(kind: str, gamma) -> None:
    if kind not in KERNEL_KINDS:
        raise ConfigError(f"unknown label kernel {kind!r}; expected one of {KERNEL_KINDS}")
    if kind == "rbf" and not (gamma is not None and gamma > 0):
        raise ConfigError(f"rbf label kernel needs gamma > 0, got {gamma}")


def label_kernel(labels, kind: str = "delta", gamma: float = 1.0) -> LabelKernel:
    """Kernel matrix over categorical labels.

    ``delta`` is the label-equality indicator, ``linear`` the inner product
    of one-hot encodings (identical to ``delta``) and ``rbf`` is
    ``exp(-gamma ||e_a - e_b||^2)`` on one-hot encodings.
    """
    _check_kernel(kind, gamma)
    labels = tuple(labels)
    if not labels:
        raise InvalidDimensionError("label kernel needs at least one label")
    classes = tuple(sorted(set(labels)))
    Y = _one_hot(labels, classes)
    if kind == "delta":
        idx = _class_index(labels, classes)
        K = (idx[:, None] == idx[None, :]).astype(np.float64)
    elif kind == "linear":
        K = Y @ Y.T
    else:
        sq = np.sum((Y[:, None, :] - Y[None, :, :]) ** 2, axis=-1)
        K = np.exp(-gamma * sq)
    return LabelKernel(kind, K, gamma if kind == "rbf" else None)


def _kernel_factor(labels, classes, kind: str, gamma) -> np.ndarray:
    """``F`` with ``H K_y H = H F F^T H`` for the supported label kernels.

    Every supported kernel is ``a 11^T + b Y Y^T`` on the one-hot matrix
    ``Y``, and the ``11^T`` part vanishes between centering matrices.
    """
    Y = _one_hot(labels, classes)
    if kind in ("delta", "linear"):
        return Y
    return np.sqrt(1.0 - np.exp(-2.0 * gamma)) * Y


def _as_matrix(data) -> np.ndarray:
    return data.X if isinstance(data, LabeledMatrix) else np.asarray(data, dtype=np.float64)


def between_scatter(data: LabeledMatrix) -> np.ndarray:
    """``sum_j n_j (mu_j - mu)(mu_j - mu)^T``."""
    X, classes = data.X, data.classes
    idx = _class_index(data.labels, classes)
    counts = np.bincount(idx, minlength=len(classes)).astype(np.float64)
    sums = np.zeros((data.d, len(classes)))
    np.add.at(sums.T, idx, X.T)
    M = sums / counts - X.mean(axis=1, keepdims=True)
    S = (M * counts) @ M.T
    return 0.5 * (S + S.T)


def class_means(data: LabeledMatrix, classes=None) -> np.ndarray:
    """Per-class input-space means as columns, shape ``(d, c)``."""
    classes = data.classes if classes is None else tuple(classes)
    idx = _class_index(data.labels, classes)
    counts = np.bincount(idx, minlength=len(classes)).astype(np.float64)
    if np.any(counts == 0):
        missing = [c for c, k in zip(classes, counts) if k == 0]
        raise InvalidDimensionError(f"classes without samples: {missing}")
    sums = np.zeros((data.d, len(classes)))
    np.add.at(sums.T, idx, data.X.T)
    return sums / counts


def within_scatter(data: LabeledMatrix) -> np.ndarray:
    """``sum_j sum_i (x_i - mu_j)(x_i - mu_j)^T`` over class members."""
    means = class_means(data)
    D = data.X - means[:, _class_index(data.labels, data.classes)]
    S = D @ D.T
    return 0.5 * (S + S.T)


def total_scatter(data) -> np.ndarray:
    """``X H X^T``, the scatter about the overall mean."""
    Xc = center_columns(_as_matrix(data))
    S = Xc @ Xc.T
    return 0.5 * (S + S.T)


def _check_factor(value: float, name: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {value}")
    return value


def roweis_P(K_y, r1: float) -> np.ndarray:
    """``r1 K_y + (1 - r1) I``."""
    r1 = _check_factor(r1, "r1")
    K = K_y.matrix if isinstance(K_y, LabelKernel) else np.asarray(K_y, dtype=np.float64)
    return r1 * K + (1.0 - r1) * np.eye(K.shape[0])


def roweis_R1(X, P) -> np.ndarray:
    """``X H P H X^T`` for a ``d x n`` matrix ``X`` and ``n x n`` matrix ``P``."""
    Xc = center_columns(_as_matrix(X))
    P = np.asarray(P, dtype=np.float64)
    if P.shape != (Xc.shape[1], Xc.shape[1]):
        raise InvalidDimensionError(f"P has shape {P.shape}, expected {(Xc.shape[1],) * 2}")
    R = Xc @ P @ Xc.T
    return 0.5 * (R + R.T)


def default_ridge(R2) -> float:
    d = R2.shape[0]
    tr = float(np.trace(R2))
    return RIDGE_RELATIVE * tr / d if tr > 0 else RIDGE_RELATIVE


def _roweis_R2(S_W, r2: float, eps: Optional[float]) -> tuple:
    r2 = _check_factor(r2, "r2")
    S_W = np.asarray(S_W, dtype=np.float64)
    R2 = r2 * S_W + (1.0 - r2) * np.eye(S_W.shape[0])
    if is_positive_definite(R2):
        return R2, 0.0
    ridge = default_ridge(R2) if eps is None else float(eps)
    return regularize(R2, ridge), ridge


def roweis_R2(S_W, r2: float, eps: Optional[float] = None) -> np.ndarray:
    """``r2 S_W + (1 - r2) I``, ridged by ``eps`` only if it fails to factor.

    With ``eps=None`` the ridge is ``1e-8 trace(R2) / d``.
    """
    return _roweis_R2(S_W, r2, eps)[0]


@dataclass(frozen=True, eq=False)
class RdaModel:
    """A fitted pose subspace.

    Attributes
    ----------
    U : ndarray of shape (d, p)
        Projection matrix; columns are R2-orthonormal.
    eigenvalues : ndarray of shape (p,)
    pose_alphabet : tuple
        Class labels, in the row order of ``class_means``.
    class_means : ndarray of shape (c, p)
        Mean of the projected training samples of each class.
    train_mean : ndarray of shape (d,)
    input_class_means : ndarray of shape (c, d)
    ridge : float
        Ridge added to R2 at fit time (0 when none was needed).
    """

    U: np.ndarray
    eigenvalues: np.ndarray
    pose_alphabet: tuple
    class_means: np.ndarray
    train_mean: np.ndarray
    input_class_means: np.ndarray
    factors: RoweisFactors
    kernel: str = "delta"
    gamma: Optional[float] = None
    ridge: float = 0.0
    preprocessing_fingerprint: str = ""

    def __post_init__(self):
        for name in ("U", "eigenvalues", "class_means", "train_mean", "input_class_means"):
            a = np.array(getattr(self, name), dtype=np.float64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        object.__setattr__(self, "pose_alphabet", tuple(self.pose_alphabet))
        if self.U.ndim != 2 or not 1 <= self.U.shape[1] <= self.U.shape[0]:
            raise InvalidDimensionError(f"projection matrix has invalid shape {self.U.shape}")
        if self.class_means.shape != (len(self.pose_alphabet), self.p):
            raise InvalidDimensionError(
                f"class_means shape {self.class_means.shape} does not match "
                f"{len(self.pose_alphabet)} classes and p={self.p}"
            )

    @property
    def d(self) -> int:
        return self.U.shape[0]

    @property
    def p(self) -> int:
        return self.U.shape[1]

    def project(self, x) -> np.ndarray:
        return project(self, x)


def project(model: RdaModel, x) -> np.ndarray:
    """``U^T x`` for a d-vector, or column-wise for a ``d x n`` matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != model.d:
        raise InvalidDimensionError(f"expected {model.d} input dimensions, got {x.shape[0]}")
    return model.U.T @ x


def default_dims(n_classes: int, d: int) -> int:
    return max(1, min(n_classes - 1, d))


def fit(
    data: LabeledMatrix,
    factors: RoweisFactors,
    p: Optional[int] = None,
    kernel: str = "delta",
    eps: Optional[float] = None,
    gamma: float = 1.0,
    alphabet=None,
    preprocessing_fingerprint: str = "",
) -> RdaModel:
    """Fit the RDA subspace of ``data`` at the given Roweis factors.

    Parameters
    ----------
    data : LabeledMatrix
    factors : RoweisFactors
    p : int, optional
        Subspace dimensionality; defaults to ``c - 1`` capped to ``[1, d]``.
    kernel : {"delta", "linear", "rbf"}
    eps : float, optional
        Ridge for R2 if it is not positive definite. Defaults to
        ``1e-8 trace(R2) / d``.
    gamma : float
        Bandwidth of the rbf label kernel.
    alphabet : sequence, optional
        Order of the pose classes; defaults to sorted labels. Every entry
        must have at least one sample.

    Raises
    ------
    ConfigError
        Bad ``p`` or kernel.
    FitError
        R2 is still indefinite after regularization.
    """
    if not isinstance(factors, RoweisFactors):
        factors = RoweisFactors(*factors)
    _check_kernel(kernel, gamma)
    classes = data.classes if alphabet is None else tuple(alphabet)
    unknown = set(data.labels) - set(classes)
    if unknown:
        raise ConfigError(f"labels {sorted(map(str, unknown))} are not in the pose alphabet")
    d = data.d
    if p is None:
        p = default_dims(len(classes), d)
    if int(p) != p or not 1 <= p <= d:
        raise ConfigError(f"subspace dimensionality must be in [1, {d}], got {p}")
    p = int(p)

    Xc = center_columns(data.X)
    R1 = (1.0 - factors.r1) * (Xc @ Xc.T)
    if factors.r1 > 0:
        G = Xc @ _kernel_factor(data.labels, classes, kernel, gamma)
        R1 = R1 + factors.r1 * (G @ G.T)
    R1 = 0.5 * (R1 + R1.T)
    R2, ridge = _roweis_R2(within_scatter(data), factors.r2, eps)
    try:
        result = solve_generalized_eig(R1, R2, p)
    except IndefiniteConstraintError as exc:
        raise FitError(f"RDA fit failed at (r1={factors.r1}, r2={factors.r2}): {exc}") from exc

    U = result.eigenvectors
    means_in = class_means(data, classes)
    idx = _class_index(data.labels, classes)
    projected = U.T @ data.X
    counts = np.bincount(idx, minlength=len(classes)).astype(np.float64)
    sums = np.zeros((len(classes), p))
    np.add.at(sums, idx, projected.T)
    return RdaModel(
        U=U,
        eigenvalues=result.eigenvalues,
        pose_alphabet=classes,
        class_means=sums / counts[:, None],
        train_mean=data.X.mean(axis=1),
        input_class_means=means_in.T,
        factors=factors,
        kernel=kernel,
        gamma=gamma if kernel == "rbf" else None,
        ridge=ridge,
        preprocessing_fingerprint=preprocessing_fingerprint,
    )


def roweis_matrices(data: LabeledMatrix, factors: RoweisFactors, kernel: str = "delta", gamma: float = 1.0, eps=None):
    """``(R1, R2)`` built with explicit n x n matrices, for inspection and checks."""
    K = label_kernel(data.labels, kernel, gamma)
    R1 = roweis_R1(data.X, roweis_P(K, factors.r1))
    R2 = roweis_R2(within_scatter(data), factors.r2, eps)
    return R1, R2
