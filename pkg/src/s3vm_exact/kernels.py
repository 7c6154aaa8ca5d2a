"""Gram matrices for the linear, RBF and ideal kernels."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

KINDS = ("linear", "rbf", "ideal")


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: Optional[float] = None
    ideal_truth: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel {self.kind!r}; expected one of {KINDS}")
        if self.kind == "rbf" and (self.gamma is None or not self.gamma > 0):
            raise ValueError("rbf kernel needs gamma > 0")
        if self.kind == "ideal":
            if self.ideal_truth is None:
                raise ValueError("ideal kernel needs the ground-truth vector")
            _check_signs(self.ideal_truth)


def _check_signs(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    if not np.all(np.isin(v, (-1.0, 1.0))):
        raise ValueError("entries must be -1 or +1")
    return v


def default_gamma(d: int) -> float:
    if d <= 0:
        raise ValueError("feature dimension must be positive")
    return 1.0 / d


def squared_distances(A: np.ndarray, B: np.ndarray | None = None) -> np.ndarray:
    B = A if B is None else B
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    if B is A:
        np.fill_diagonal(sq, 0.0)
    return sq


def ideal_gram(truth) -> np.ndarray:
    t = _check_signs(truth)
    return np.outer(t, t)


def cross_kernel(A, B, spec: KernelSpec) -> np.ndarray:
    """Kernel values between the rows of ``A`` and the rows of ``B``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if spec.kind == "linear":
        return A @ B.T
    if spec.kind == "rbf":
        return np.exp(-spec.gamma * squared_distances(A, B))
    raise ValueError("the ideal kernel has no feature-space evaluation")


def gram_matrix(features, spec: KernelSpec) -> np.ndarray:
    X = np.atleast_2d(np.asarray(features, dtype=float))
    if X.size == 0:
        raise ValueError("features must be non-empty")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain non-finite values")
    if spec.kind == "ideal":
        if len(spec.ideal_truth) != X.shape[0]:
            raise ValueError("ground truth length does not match the number of points")
        return ideal_gram(spec.ideal_truth)
    if spec.kind == "linear":
        G = X @ X.T
    else:
        G = np.exp(-spec.gamma * squared_distances(X))
    return 0.5 * (G + G.T)
