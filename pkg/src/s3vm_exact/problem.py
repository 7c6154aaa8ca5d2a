"""Instance data for the S3VM QCQP and the primitives shared by every other module.

The model is

    min  x' C x
    s.t. y_i x_i >= 1            (labeled i)
         x_i^2   >= 1            (unlabeled i)
         mean(x_unlabeled) = r   (optional balancing row)

with ``C = 0.5 * inv(gram + D)`` and ``D`` the diagonal of per-point penalties.
Labeled points always occupy the first ``l`` positions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

FEAS_TOL = 1e-6


class AssemblyError(ValueError):
    """Raised when ``gram + D`` cannot be factorized."""


def _as_labels(labels) -> np.ndarray:
    y = np.asarray(labels, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("at least one labeled point is required")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    return y


@dataclass(frozen=True)
class Labeling:
    """A full +/-1 label vector; the first ``labeled_count`` entries are given labels."""

    values: np.ndarray
    labeled_count: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isin(v, (-1.0, 1.0))):
            raise ValueError("labeling entries must be -1 or +1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def unlabeled(self) -> np.ndarray:
        return self.values[self.labeled_count:]

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class ProblemData:
    n: int
    l: int
    cost: np.ndarray
    labels: np.ndarray
    balancing_rhs: float
    balancing_enabled: bool
    penalties: tuple
    # Kept for the supervised warm start; None when the instance was built from a cost matrix.
    gram: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if not 1 <= self.l <= self.n:
            raise ValueError(f"need 1 <= l <= n, got l={self.l}, n={self.n}")
        if self.cost.shape != (self.n, self.n):
            raise ValueError("cost must be n x n")
        if self.balancing_enabled and not -1.0 <= self.balancing_rhs <= 1.0:
            raise ValueError("balancing_rhs must lie in [-1, 1]")
        for arr in (self.cost, self.labels):
            arr.setflags(write=False)

    @property
    def n_unlabeled(self) -> int:
        return self.n - self.l

    @property
    def unlabeled(self) -> np.ndarray:
        return np.arange(self.l, self.n)

    @property
    def balancing_active(self) -> bool:
        """Balancing is meaningful only when some point is unlabeled."""
        return self.balancing_enabled and self.n > self.l

    def balancing_row(self) -> tuple[np.ndarray, float]:
        """Coefficients ``a`` and rhs ``r`` of ``a' x = r``."""
        a = np.zeros(self.n)
        a[self.l:] = 1.0 / self.n_unlabeled
        return a, self.balancing_rhs

    def label_bounds(self):
        """Boxes carrying only the given labels (the root of the search)."""
        from .boxes import BoxBounds

        return BoxBounds.from_labels(self.n, self.labels)


def _cholesky_inverse_half(K: np.ndarray) -> np.ndarray:
    """Return 0.5 * inv(K) via Cholesky, with one jittered retry."""
    n = K.shape[0]
    try:
        c, low = scipy.linalg.cho_factor(K, lower=True)
    except np.linalg.LinAlgError:
        jitter = 1e-10 * np.trace(K) / n
        try:
            c, low = scipy.linalg.cho_factor(K + jitter * np.eye(n), lower=True)
        except np.linalg.LinAlgError as exc:
            raise AssemblyError(
                "gram + D is not positive definite (is the gram matrix PSD?)"
            ) from exc
    cost = scipy.linalg.cho_solve((c, low), 0.5 * np.eye(n))
    return 0.5 * (cost + cost.T)


def assemble_problem(gram, labels, C_l: float, C_u: float, balancing: bool = True) -> ProblemData:
    """Build the QCQP data from a gram matrix whose first ``len(labels)`` rows are labeled."""
    gram = np.asarray(gram, dtype=float)
    y = _as_labels(labels)
    n = gram.shape[0]
    l = y.size
    if gram.shape != (n, n):
        raise ValueError("gram must be square")
    if l > n:
        raise ValueError("more labels than points")
    if not np.allclose(gram, gram.T, atol=1e-10):
        raise ValueError("gram must be symmetric")
    if C_l <= 0 or C_u <= 0:
        raise ValueError("penalties must be positive")
    d = np.empty(n)
    d[:l] = 1.0 / (2.0 * C_l)
    d[l:] = 1.0 / (2.0 * C_u)
    K = gram + np.diag(d)
    cost = _cholesky_inverse_half(K)
    gram = gram.copy()
    gram.setflags(write=False)
    return ProblemData(
        n=n,
        l=l,
        cost=cost,
        labels=y,
        balancing_rhs=float(y.mean()),
        balancing_enabled=bool(balancing),
        penalties=(float(C_l), float(C_u)),
        gram=gram,
    )


def objective(p: ProblemData, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (p.n,):
        raise ValueError(f"expected a vector of length {p.n}, got shape {x.shape}")
    return float(x @ p.cost @ x)


def check_feasible(p: ProblemData, x, tol: float = FEAS_TOL) -> bool:
    x = np.asarray(x, dtype=float)
    if x.shape != (p.n,) or not np.all(np.isfinite(x)):
        return False
    if np.any(p.labels * x[: p.l] < 1.0 - tol):
        return False
    if np.any(x[p.l:] ** 2 < 1.0 - tol):
        return False
    if p.balancing_active:
        if abs(x[p.l:].mean() - p.balancing_rhs) > tol:
            return False
    return True


def percentage_gap(UB: float, LB: float) -> float:
    if not UB > 0:
        raise ValueError("gap is undefined for a non-positive upper bound")
    if LB == np.inf:
        return 0.0
    return max(0.0, (UB - LB) / UB * 100.0)


@dataclass(frozen=True)
class Incumbent:
    point: np.ndarray
    labeling: Labeling
    objective: float

    @classmethod
    def from_point(cls, p: ProblemData, x) -> "Incumbent":
        x = np.array(x, dtype=float)
        signs = np.where(x >= 0, 1.0, -1.0)
        signs[: p.l] = p.labels
        x.setflags(write=False)
        return cls(point=x, labeling=Labeling(signs, p.l), objective=objective(p, x))
