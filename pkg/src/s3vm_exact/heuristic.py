"""Upper bounds: sign rounding, the labeling-restricted convex QP and two-opt local search."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .problem import Incumbent, Labeling, ProblemData
from .solvers.qp import OPTIMAL, QpModel, QpSolution, solve_qp

log = logging.getLogger(__name__)


def signs(v) -> np.ndarray:
    """Elementwise sign with sign(0) = +1."""
    return np.where(np.asarray(v, dtype=float) >= 0, 1.0, -1.0)


def round_sdp(xbar, labels) -> Labeling:
    labels = np.asarray(labels, dtype=float)
    v = signs(xbar)
    v[: labels.size] = labels
    return Labeling(v, labels.size)


def balancing_feasible(p: ProblemData, lab: Labeling) -> bool:
    """Whether some x with sign pattern ``lab`` and |x_i| >= 1 meets the balancing row."""
    if not p.balancing_active:
        return True
    u = lab.unlabeled
    r = p.balancing_rhs
    if np.all(u > 0):
        return r >= 1.0
    if np.all(u < 0):
        return r <= -1.0
    return True


def solve_label_qp(p: ProblemData, lab: Labeling) -> tuple[Optional[Incumbent], Optional[QpSolution]]:
    """Like :func:`label_qp` but also hands back the raw solver output (for its duals)."""
    if len(lab) != p.n:
        raise ValueError("labeling length does not match the instance")
    if not balancing_feasible(p, lab):
        return None, None
    y = lab.values
    lo = np.where(y > 0, 1.0, -np.inf)
    up = np.where(y < 0, -1.0, np.inf)
    A = b = None
    if p.balancing_active:
        a, r = p.balancing_row()
        A, b = a[None, :], np.array([r])
    sol = solve_qp(QpModel(P=p.cost, A_eq=A, b_eq=b, lower=lo, upper=up))
    if sol.status != OPTIMAL:
        log.debug("label QP returned %s", sol.status)
        return None, sol
    x = sol.point.copy()
    # Snap the tiny solver infeasibilities onto the active bounds.
    x = np.where(y > 0, np.maximum(x, 1.0), np.minimum(x, -1.0))
    return Incumbent.from_point(p, x), sol


def label_qp(p: ProblemData, lab: Labeling) -> Optional[Incumbent]:
    """min x'Cx s.t. lab_i x_i >= 1 and balancing; None when infeasible."""
    inc, _ = solve_label_qp(p, lab)
    return inc


def repair_labeling(lab: Labeling, xbar, r: float) -> Labeling:
    """Flip the least confident unlabeled point while all unlabeled labels agree and cannot balance."""
    v = lab.values.copy()
    l = lab.labeled_count
    u = v[l:]
    if u.size == 0:
        return lab
    mag = np.abs(np.asarray(xbar, dtype=float)[l:])
    if u.size == 1:
        if u[0] * r < 1.0 and -u[0] * r >= 1.0:
            v[l] = -u[0]
        return Labeling(v, l)
    while np.all(u == u[0]) and u[0] * r < 1.0:
        k = int(np.argmin(mag))
        u[k] = -u[k]
    v[l:] = u
    return Labeling(v, l)


@dataclass(frozen=True)
class TwoOptSubproblem:
    """``min a t^2 + b t + c`` over ``t = x_j`` with ``x_i = k - t`` and both ``|x| >= 1``."""

    a: float
    b: float
    c: float
    k: float

    @classmethod
    def from_data(cls, Cii, Cij, Cjj, eta_i, eta_j, k) -> "TwoOptSubproblem":
        a = Cii + Cjj - 2.0 * Cij
        b = 2.0 * k * (Cij - Cii) - 2.0 * eta_i + 2.0 * eta_j
        c = Cii * k * k + 2.0 * eta_i * k
        return cls(float(a), float(b), float(c), float(k))

    def value(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.a * t * t + self.b * t + self.c

    def feasible(self, t, tol: float = 1e-12) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return (np.abs(t) >= 1.0 - tol) & (np.abs(self.k - t) >= 1.0 - tol)

    def candidates(self) -> np.ndarray:
        stat = -self.b / (2.0 * self.a) if self.a > 0 else np.nan
        return np.array([stat, 1.0, -1.0, self.k - 1.0, self.k + 1.0])

    def minimize(self) -> float:
        """Global minimizer ``t``; the feasible set is a union of intervals with endpoints among the candidates."""
        cand = self.candidates()
        cand = cand[np.isfinite(cand)]
        cand = cand[self.feasible(cand)]
        vals = self.value(cand)
        return float(cand[np.argmin(vals)])


def two_opt_step(C: np.ndarray, x, i: int, j: int) -> tuple[float, float]:
    """Re-optimize ``(x_i, x_j)`` with ``x_i + x_j`` fixed; returns the new pair."""
    x = np.asarray(x, dtype=float)
    g = C @ x
    eta_i = g[i] - C[i, i] * x[i] - C[i, j] * x[j]
    eta_j = g[j] - C[j, i] * x[i] - C[j, j] * x[j]
    k = x[i] + x[j]
    sub = TwoOptSubproblem.from_data(C[i, i], C[i, j], C[j, j], eta_i, eta_j, k)
    t = sub.minimize()
    if sub.value(t) >= sub.value(x[j]):
        return float(x[i]), float(x[j])
    return float(k - t), float(t)


def _best_moves(C, g, x, i, js):
    """Vectorized two-opt over partners ``js`` of ``i``: new x_j and objective change per partner."""
    xi, xj = x[i], x[js]
    Cii, Cjj, Cij = C[i, i], C[js, js], C[i, js]
    eta_i = g[i] - Cii * xi - Cij * xj
    eta_j = g[js] - Cij * xi - Cjj * xj
    k = xi + xj
    a = Cii + Cjj - 2.0 * Cij
    b = 2.0 * k * (Cij - Cii) - 2.0 * eta_i + 2.0 * eta_j
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = np.where(a > 0, -b / (2.0 * a), np.nan)
    cand = np.stack([stat, np.ones_like(k), -np.ones_like(k), k - 1.0, k + 1.0])
    tol = 1e-12
    feas = np.isfinite(cand) & (np.abs(cand) >= 1.0 - tol) & (np.abs(k - cand) >= 1.0 - tol)
    vals = np.where(feas, a * cand * cand + b * cand, np.inf)
    best = np.argmin(vals, axis=0)
    cols = np.arange(js.size)
    t = cand[best, cols]
    delta = vals[best, cols] - (a * xj * xj + b * xj)
    return t, delta


def two_opt_search(p: ProblemData, start: Incumbent, max_sweeps: int = 1000) -> Incumbent:
    """Pairwise local search over unlabeled points, lexicographic order, first improvement."""
    C = np.asarray(p.cost)
    x = np.array(start.point, dtype=float)
    best = start
    g = C @ x
    f = float(x @ g)
    unl = p.unlabeled
    for _ in range(max_sweeps):
        moved = False
        for pos, i in enumerate(unl[:-1]):
            js = unl[pos + 1:]
            while js.size:
                t, delta = _best_moves(C, g, x, i, js)
                hit = np.flatnonzero(delta < -1e-12 * max(1.0, abs(f)))
                if hit.size == 0:
                    break
                h = hit[0]
                j = js[h]
                new_j = t[h]
                new_i = x[i] + x[j] - new_j
                di, dj = new_i - x[i], new_j - x[j]
                x[i], x[j] = new_i, new_j
                g += C[:, i] * di + C[:, j] * dj
                f = float(x @ g)
                moved = True
                js = js[h + 1:]
        if not moved:
            break
        cand = Incumbent.from_point(p, x)
        if cand.objective <= best.objective:
            best = cand
        refined = label_qp(p, round_sdp(x, p.labels))
        if refined is not None and refined.objective <= best.objective:
            best = refined
        x = np.array(best.point, dtype=float)
        g = C @ x
        f = float(x @ g)
    return best


def heuristic_from_point(p: ProblemData, xbar, local_search: bool = True) -> Optional[Incumbent]:
    """Round ``xbar``, solve the labeling QP (repairing balance if needed), then two-opt."""
    lab = round_sdp(xbar, p.labels)
    inc = label_qp(p, lab)
    if inc is None and p.balancing_active:
        inc = label_qp(p, repair_labeling(lab, xbar, p.balancing_rhs))
    if inc is None:
        return None
    return two_opt_search(p, inc) if local_search else inc
