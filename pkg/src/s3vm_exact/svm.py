"""Supervised L2-loss SVM trained through its dual, with zero bias."""
from __future__ import annotations

import numpy as np

from .solvers.qp import OPTIMAL, QpModel, solve_qp


def fit_dual(gram_ll: np.ndarray, y, C_l: float) -> np.ndarray:
    """Maximize ``e'a - 1/2 a'((K + I/(2C_l)) * yy')a`` over ``a >= 0``."""
    y = np.asarray(y, dtype=float)
    if C_l <= 0:
        raise ValueError("C_l must be positive")
    H = (gram_ll + np.eye(y.size) / (2.0 * C_l)) * np.outer(y, y)
    sol = solve_qp(QpModel(P=0.5 * H, q=-np.ones(y.size), lower=np.zeros(y.size)))
    if sol.status != OPTIMAL:
        raise RuntimeError(f"SVM dual failed: {sol.status}")
    return np.maximum(sol.point, 0.0)


def decision_values(gram_lx: np.ndarray, alpha, y) -> np.ndarray:
    """``sum_j a_j y_j k(x_j, x)`` for each column of ``gram_lx`` (labeled rows, query columns)."""
    return (np.asarray(alpha) * np.asarray(y)) @ gram_lx


def predict(gram_lx: np.ndarray, alpha, y) -> np.ndarray:
    return np.where(decision_values(gram_lx, alpha, y) >= 0, 1.0, -1.0)


def supervised_labeling(gram: np.ndarray, labels, C_l: float) -> np.ndarray:
    """Full label vector: given labels first, SVM predictions for the remaining points."""
    y = np.asarray(labels, dtype=float)
    l = y.size
    alpha = fit_dual(gram[:l, :l], y, C_l)
    out = np.empty(gram.shape[0])
    out[:l] = y
    out[l:] = predict(gram[:l, l:], alpha, y)
    return out
