"""Low-rank subspaces of a contour matrix: truncated SVD and Fast Median Subspace.

FMS minimizes the sum of (unsquared) Euclidean residual norms over all
orthonormal 2N x M frames. It is solved by iteratively reweighted least
squares, each step being an exact weighted PCA.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Contour, canonicalize


class SubspaceError(ValueError):
    """Invalid shapes, dimensions or weights."""


class NumericalError(ArithmeticError):
    """A fit produced non-finite values."""


@dataclass(frozen=True)
class Canonicalization:
    center: bool = True
    normalize_scale: bool = False

    def to_dict(self) -> dict:
        return {"center": self.center, "normalize_scale": self.normalize_scale}


@dataclass(frozen=True, eq=False)
class ContourMatrix:
    data: np.ndarray
    canon: Canonicalization = Canonicalization()

    def __post_init__(self):
        a = np.array(self.data, dtype=float)
        if a.ndim != 2 or a.shape[0] % 2 or a.shape[1] < 1:
            raise SubspaceError(f"contour matrix must be 2N x L with L >= 1, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise SubspaceError("contour matrix has non-finite entries")
        a.flags.writeable = False
        object.__setattr__(self, "data", a)

    @property
    def n_vertices(self) -> int:
        return self.data.shape[0] // 2

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class Basis:
    u: np.ndarray
    fit_method: str = "svd"
    canon: Canonicalization = Canonicalization()

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.ndim != 2 or not 1 <= u.shape[1] <= u.shape[0]:
            raise SubspaceError(f"basis must be 2N x M with 1 <= M <= 2N, got {u.shape}")
        u.flags.writeable = False
        object.__setattr__(self, "u", u)

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def dim(self) -> int:
        return self.u.shape[0]

    def orthonormality_error(self) -> float:
        return float(np.max(np.abs(self.u.T @ self.u - np.eye(self.m))))


@dataclass(frozen=True)
class FmsParams:
    max_iterations: int = 100
    tolerance: float = 1e-9
    weight_floor: float = 1e-10

    def __post_init__(self):
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise SubspaceError("max_iterations must be a positive integer")
        for name in ("tolerance", "weight_floor"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise SubspaceError(f"{name} must be positive and finite, got {v}")

    def to_dict(self) -> dict:
        return {"max_iterations": self.max_iterations, "tolerance": self.tolerance, "weight_floor": self.weight_floor}


@dataclass
class FmsTrace:
    """Per-iteration record of an FMS fit; row k describes U^(k)."""

    objective: list[float] = field(default_factory=list)
    step_distance: list[float] = field(default_factory=list)
    orthonormality: list[float] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.objective) - 1

    def to_csv(self) -> str:
        lines = ["iteration,objective,step_distance"]
        for k, (obj, d) in enumerate(zip(self.objective, self.step_distance)):
            lines.append(f"{k},{obj!r},{d!r}")
        return "\n".join(lines) + "\n"


def build_matrix(contours, canon: Canonicalization = Canonicalization()) -> ContourMatrix:
    contours = list(contours)
    if not contours:
        raise SubspaceError("need at least one contour")
    n = contours[0].n
    cols = []
    for i, c in enumerate(contours):
        if c.n != n:
            raise SubspaceError(f"contour {i} has {c.n} vertices, expected {n}")
        cols.append(canonicalize(c, canon.center, canon.normalize_scale)[0].flat())
    return ContourMatrix(np.stack(cols, axis=1), canon)


def _as_array(a) -> np.ndarray:
    return a.data if isinstance(a, ContourMatrix) else np.asarray(a, dtype=float)


def fix_signs(u: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive.

    np.argmax returns the first maximum, which breaks ties by lowest index.
    """
    u = np.array(u, dtype=float)
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.where(u[idx, np.arange(u.shape[1])] < 0, -1.0, 1.0)
    return u * signs


def _check_m(a: np.ndarray, m: int):
    if int(m) != m or not 1 <= m <= min(a.shape):
        raise SubspaceError(f"m must satisfy 1 <= m <= min(2N, L) = {min(a.shape)}, got {m}")


def _top_left_singular(a: np.ndarray, m: int) -> np.ndarray:
    u, _, _ = np.linalg.svd(a, full_matrices=False)
    return fix_signs(u[:, :m])


def svd_subspace(a, m: int) -> Basis:
    """Top-m left singular vectors of the contour matrix."""
    data = _as_array(a)
    _check_m(data, m)
    canon = a.canon if isinstance(a, ContourMatrix) else Canonicalization()
    return Basis(_top_left_singular(data, m), "svd", canon)


def weighted_pca_step(a, weights, m: int) -> Basis:
    """Exact minimizer of sum_j w_j ||(I - UU^T) p_j||^2 over orthonormal U."""
    data = _as_array(a)
    w = np.asarray(weights, dtype=float)
    if w.shape != (data.shape[1],):
        raise SubspaceError(f"expected {data.shape[1]} weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise SubspaceError("weights must be finite and positive")
    _check_m(data, m)
    canon = a.canon if isinstance(a, ContourMatrix) else Canonicalization()
    return Basis(_top_left_singular(data * np.sqrt(w), m), "weighted", canon)


def residual_norms(a, u) -> np.ndarray:
    data = _as_array(a)
    uu = u.u if isinstance(u, Basis) else np.asarray(u, dtype=float)
    if uu.shape[0] != data.shape[0]:
        raise SubspaceError(f"basis has {uu.shape[0]} rows, matrix has {data.shape[0]}")
    r = data - uu @ (uu.T @ data)
    return np.linalg.norm(r, axis=0)


def l12_objective(a, u) -> float:
    """Sum over columns of the Euclidean residual to span(u)."""
    # fsum: exact, order-independent reduction
    return math.fsum(residual_norms(a, u).tolist())


def subspace_distance(u1, u2) -> float:
    """Frobenius norm of the difference of the two orthogonal projectors."""
    a = u1.u if isinstance(u1, Basis) else np.asarray(u1, dtype=float)
    b = u2.u if isinstance(u2, Basis) else np.asarray(u2, dtype=float)
    if a.shape != b.shape:
        raise SubspaceError(f"basis shapes differ: {a.shape} vs {b.shape}")
    # ||P1 - P2||_F^2 = 2M - 2||U1^T U2||_F^2, but that loses precision near 0
    return float(np.linalg.norm(a @ a.T - b @ b.T))


def fms_subspace(a, m: int, params: FmsParams = FmsParams(), trace: FmsTrace | None = None) -> Basis:
    """Robust M-dimensional subspace by Fast Median Subspace IRLS.

    Starts from the SVD subspace. Each iteration weights column j by
    1 / max(||r_j||, weight_floor) and solves the weighted PCA exactly; it
    stops after ``max_iterations`` or once consecutive iterates are closer
    than ``tolerance`` in projector distance. Pass an FmsTrace to record
    objective and step size per iteration.
    """
    data = _as_array(a)
    _check_m(data, m)
    canon = a.canon if isinstance(a, ContourMatrix) else Canonicalization()
    u = _top_left_singular(data, m)
    if trace is not None:
        trace.objective.append(l12_objective(data, u))
        trace.step_distance.append(float("nan"))
        trace.orthonormality.append(float(np.max(np.abs(u.T @ u - np.eye(m)))))
    k = 0
    while True:
        k += 1
        r = residual_norms(data, u)
        w = 1.0 / np.maximum(r, params.weight_floor)
        u_next = _top_left_singular(data * np.sqrt(w), m)
        if not np.all(np.isfinite(u_next)):
            raise NumericalError(f"non-finite basis at FMS iteration {k}")
        step = subspace_distance(u_next, u)
        u = u_next
        if trace is not None:
            trace.objective.append(l12_objective(data, u))
            trace.step_distance.append(step)
            trace.orthonormality.append(float(np.max(np.abs(u.T @ u - np.eye(m)))))
        if k >= params.max_iterations or step < params.tolerance:
            break
    return Basis(u, "fms", canon)


def fit_subspace(a, m: int, method: str = "fms", params: FmsParams = FmsParams(), trace: FmsTrace | None = None) -> Basis:
    if method == "svd":
        return svd_subspace(a, m)
    if method == "fms":
        return fms_subspace(a, m, params, trace)
    raise SubspaceError(f"unknown fit method {method!r}; expected 'svd' or 'fms'")


def explained_variance(a, u) -> np.ndarray:
    """Sample variance (ddof=1) of each orthanchor's projection coefficients."""
    data = _as_array(a)
    if data.shape[1] < 2:
        raise SubspaceError("explained variance needs at least 2 columns")
    uu = u.u if isinstance(u, Basis) else np.asarray(u, dtype=float)
    # shift by the first column: variance is unchanged and repeated columns project to exact zeros
    return np.var(uu.T @ (data - data[:, :1]), axis=1, ddof=1)


def squared_reconstruction_error(a, u) -> float:
    return float(np.sum(residual_norms(a, u) ** 2))
