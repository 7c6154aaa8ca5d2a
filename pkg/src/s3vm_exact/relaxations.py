"""Lower bounds: plain QP, Lagrangian-penalized QP, the box-strengthened SDP and
the SDP cutting-plane loop with RLT cuts.

The lifted block is ``Y = [[X, x], [x', 1]]`` of size ``n + 1``; the vector
``x`` sits in the last column and the corner is ``Y[n, n]``.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .boxes import BoxBounds
from .problem import ProblemData, percentage_gap
from .solvers.qp import OPTIMAL as QP_OPTIMAL, INFEASIBLE as QP_INFEASIBLE, QpModel, solve_qp
from .solvers.sdp import (
    INFEASIBLE,
    NUMERICAL_FAILURE,
    OPTIMAL,
    SdpModel,
    SdpRow,
    SdpSolution,
    SdpTolerances,
    solve_sdp,
)

log = logging.getLogger(__name__)

VARIANTS = ("lower-lower", "upper-upper", "lower-upper", "upper-lower")


@dataclass(frozen=True)
class CutParams:
    max_cuts_factor: float = 5.0
    viol_tol: float = 1e-2
    inactive_tol: float = 1e-4
    stall_tol: float = 1e-3
    # Percent; the loop stops once the node gap drops to this.
    gap_tol: float = 0.1
    balancing_products: bool = False
    max_rounds: int = 50

    def __post_init__(self):
        for name in ("max_cuts_factor", "viol_tol", "inactive_tol", "stall_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.gap_tol < 0:
            raise ValueError("gap_tol must be nonnegative")


# ---------------------------------------------------------------- QP bounds


def _balancing_eq(p: ProblemData):
    if not p.balancing_active:
        return None, None
    a, r = p.balancing_row()
    return a[None, :], np.array([r])


def qp_bound(p: ProblemData, boxes: BoxBounds) -> float:
    """min x'Cx over the box and (if enabled) the balancing row."""
    if boxes.is_empty:
        return np.inf
    A, b = _balancing_eq(p)
    sol = solve_qp(QpModel(P=p.cost, A_eq=A, b_eq=b, lower=boxes.lower, upper=boxes.upper))
    if sol.status == QP_INFEASIBLE:
        return np.inf
    if sol.status != QP_OPTIMAL:
        raise RuntimeError(f"QP bound failed: {sol.status}")
    return sol.objective


def lagrangian_multipliers(p: ProblemData) -> Optional[np.ndarray]:
    """Maximize sum(lam) with inv(K) - 2 Diag(lam) PSD and lam zero on labeled points.

    Solved through its conic dual ``min <inv(K), Y>`` s.t. ``2 Y_kk >= 1`` for
    unlabeled ``k``; the multipliers are that problem's duals.  Returns None on
    solver failure.
    """
    n, l = p.n, p.l
    lam = np.zeros(n)
    if n == l:
        return lam
    rows = [SdpRow(np.array([k]), np.array([k]), np.array([2.0]), ">=", 1.0, "diag-lower", key=k)
            for k in range(l, n)]
    sol = solve_sdp(SdpModel(n, 2.0 * p.cost, rows))
    if sol.status != OPTIMAL:
        return None
    lam[l:] = np.maximum(sol.duals, 0.0)
    # Pull lam back inside the feasible cone if the solver overshot by roundoff.
    if np.any(lam > 0):
        mu = scipy.linalg.eigh(np.diag(lam), p.cost, eigvals_only=True)[-1]
        if mu > 1.0:
            lam = lam / mu
        lam *= 1.0 - 1e-9
    return lam


def qp_lagrangian_bound(p: ProblemData, boxes: BoxBounds) -> float:
    """min x'(C - Diag lam)x + sum(lam) over the box and balancing row."""
    if boxes.is_empty:
        return np.inf
    lam = lagrangian_multipliers(p)
    if lam is None:
        log.warning("auxiliary SDP failed; falling back to the plain QP bound")
        return qp_bound(p, boxes)
    A, b = _balancing_eq(p)
    P = p.cost - np.diag(lam)
    sol = solve_qp(QpModel(P=P, const=float(lam.sum()), A_eq=A, b_eq=b,
                           lower=boxes.lower, upper=boxes.upper))
    if sol.status == QP_INFEASIBLE:
        return np.inf
    if sol.status != QP_OPTIMAL:
        raise RuntimeError(f"penalized QP bound failed: {sol.status}")
    return sol.objective


# ---------------------------------------------------------------- SDP model


def _row(rows, cols, coefs, sense, rhs, tag, key) -> SdpRow:
    return SdpRow(np.asarray(rows), np.asarray(cols), np.asarray(coefs, dtype=float), sense, float(rhs), tag, key)


def block_cost(p: ProblemData) -> np.ndarray:
    N = p.n + 1
    c = np.zeros((N, N))
    c[: p.n, : p.n] = p.cost
    return c


def basic_rows(p: ProblemData, boxes: BoxBounds) -> list:
    n = p.n
    out = [_row([n], [n], [1.0], "==", 1.0, "corner", ("corner",))]
    for i in range(n):
        if np.isfinite(boxes.lower[i]):
            out.append(_row([i], [n], [1.0], ">=", boxes.lower[i], "box-lower", ("box-lower", i)))
        if np.isfinite(boxes.upper[i]):
            out.append(_row([i], [n], [1.0], "<=", boxes.upper[i], "box-upper", ("box-upper", i)))
    cap = boxes.diag_cap()
    for i in range(n):
        out.append(_row([i], [i], [1.0], ">=", 1.0, "diag-lower", ("diag-lower", i)))
        if np.isfinite(cap[i]):
            out.append(_row([i], [i], [1.0], "<=", cap[i], "diag-upper", ("diag-upper", i)))
    if p.balancing_active:
        a, r = p.balancing_row()
        u = p.unlabeled
        out.append(_row(u, np.full(u.size, n), a[u], "==", r, "balancing", ("balancing",)))
    return out


def build_basic_sdp(p: ProblemData, boxes: BoxBounds, extra_rows=()) -> SdpModel:
    """Box-strengthened SDP; with infinite boxes it is the classical lifted relaxation."""
    return SdpModel(p.n + 1, block_cost(p), basic_rows(p, boxes) + list(extra_rows))


def balancing_product_cuts(p: ProblemData) -> list:
    """Rows ``mean_u X_{j,u} = r x_j`` from multiplying the balancing row by ``x_j``."""
    if not p.balancing_active:
        return []
    n = p.n
    u = p.unlabeled
    r = p.balancing_rhs
    w = 1.0 / p.n_unlabeled
    rows = []
    for j in range(n):
        rr = list(np.full(u.size, j))
        cc = list(u)
        co = [w] * u.size
        if r != 0.0:
            rr.append(j)
            cc.append(n)
            co.append(-r)
        rows.append(_row(rr, cc, co, "==", 0.0, "product", ("product", j)))
    return rows


# ---------------------------------------------------------------- RLT cuts


@dataclass(frozen=True)
class RltCut:
    """``X_ij - a x_i - b x_j (sense) c`` with coefficients frozen from the box that generated it."""

    i: int
    j: int
    variant: str
    a: float
    b: float
    c: float

    def __post_init__(self):
        if not self.i < self.j:
            raise ValueError("RLT cuts need i < j")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")

    @classmethod
    def from_bounds(cls, i: int, j: int, variant: str, Li, Ui, Lj, Uj) -> "RltCut":
        if variant == "lower-lower":
            # (x_i - L_i)(x_j - L_j) >= 0
            return cls(i, j, variant, Lj, Li, -Li * Lj)
        if variant == "upper-upper":
            # (U_i - x_i)(U_j - x_j) >= 0
            return cls(i, j, variant, Uj, Ui, -Ui * Uj)
        if variant == "lower-upper":
            # (x_i - L_i)(U_j - x_j) >= 0
            return cls(i, j, variant, Uj, Li, -Li * Uj)
        # (U_i - x_i)(x_j - L_j) >= 0
        return cls(i, j, variant, Lj, Ui, -Ui * Lj)

    @property
    def sense(self) -> str:
        return ">=" if self.variant in ("lower-lower", "upper-upper") else "<="

    @property
    def key(self):
        return ("rlt", self.i, self.j, self.variant, self.a, self.b)

    def violation(self, x: np.ndarray, X: np.ndarray) -> float:
        d = X[self.i, self.j] - self.a * x[self.i] - self.b * x[self.j] - self.c
        return float(-d if self.sense == ">=" else d)

    def to_row(self, n: int) -> SdpRow:
        return _row([self.i, self.i, self.j], [self.j, n, n], [1.0, -self.a, -self.b],
                    self.sense, self.c, "rlt", self.key)


def rlt_violations(x: np.ndarray, X: np.ndarray, boxes: BoxBounds) -> dict:
    """Violation matrices (upper triangle meaningful) for the four variants; NaN where undefined."""
    L, U = boxes.lower, boxes.upper
    out = {}
    with np.errstate(invalid="ignore"):
        pairs = {
            "lower-lower": (L, L, 1.0),
            "upper-upper": (U, U, 1.0),
            "lower-upper": (L, U, -1.0),
            "upper-lower": (U, L, -1.0),
        }
        for name, (Bi, Bj, sgn) in pairs.items():
            # rhs_ij = Bi_i x_j + Bj_j x_i - Bi_i Bj_j
            rhs = np.outer(Bi, x) + np.outer(x, Bj) - np.outer(Bi, Bj)
            v = sgn * (rhs - X)
            bad = ~np.outer(np.isfinite(Bi), np.isfinite(Bj))
            v[bad] = np.nan
            out[name] = v
    return out


def separate_rlt(sol: SdpSolution, boxes: BoxBounds, max_cuts: int, viol_tol: float) -> list:
    """The ``max_cuts`` most violated RLT cuts (violation > viol_tol), most violated first."""
    if max_cuts <= 0:
        return []
    x, X = sol.x, sol.X
    n = x.size
    iu, ju = np.triu_indices(n, k=1)
    cand_v, cand_i, cand_j, cand_k = [], [], [], []
    for k, (name, V) in enumerate(rlt_violations(x, X, boxes).items()):
        v = V[iu, ju]
        keep = np.flatnonzero(np.nan_to_num(v, nan=-np.inf) > viol_tol)
        cand_v.append(v[keep])
        cand_i.append(iu[keep])
        cand_j.append(ju[keep])
        cand_k.append(np.full(keep.size, k))
    v = np.concatenate(cand_v)
    if v.size == 0:
        return []
    I, J, K = np.concatenate(cand_i), np.concatenate(cand_j), np.concatenate(cand_k)
    order = np.lexsort((K, J, I, -v))[:max_cuts]
    L, U = boxes.lower, boxes.upper
    return [RltCut.from_bounds(int(I[t]), int(J[t]), VARIANTS[K[t]], L[I[t]], U[I[t]], L[J[t]], U[J[t]])
            for t in order]


def cut_slack(cut: RltCut, x, X) -> float:
    return -cut.violation(x, X)


def purge_inactive(pool: list, sol: SdpSolution, slack_tol: float = 1e-4) -> list:
    """Drop cuts whose primal slack at the solution exceeds ``slack_tol``."""
    x, X = sol.x, sol.X
    return [c for c in pool if cut_slack(c, x, X) <= slack_tol]


# ---------------------------------------------------------------- cutting planes


@dataclass
class BoundResult:
    lower_bound: float
    solution: Optional[SdpSolution]
    iterations: int
    active_cuts: tuple = ()
    boxes: Optional[BoxBounds] = None
    status: str = OPTIMAL
    history: list = field(default_factory=list)
    upper_bound: float = np.inf
    time_sec: float = 0.0


def cutting_plane_bound(
    p: ProblemData,
    node_boxes: BoxBounds,
    UB: float,
    params: CutParams = CutParams(),
    heuristic_callback: Optional[Callable] = None,
    tighten_callback: Optional[Callable] = None,
    pool: Optional[list] = None,
    tolerances: SdpTolerances = SdpTolerances(),
) -> BoundResult:
    """Run the SDP cutting-plane loop at one node.

    ``tighten_callback(boxes, sol, UB, LB) -> BoxBounds`` returns node-local boxes;
    ``heuristic_callback(sol, boxes) -> float`` returns the (possibly improved) UB.
    The final pool is returned in ``active_cuts`` so children can inherit it.
    """
    t0 = time.perf_counter()
    boxes = node_boxes
    pool = list(pool or [])
    products = balancing_product_cuts(p) if params.balancing_products else []
    max_cuts = int(np.ceil(params.max_cuts_factor * p.n))
    history: list = []
    prev_lb = -np.inf
    sol = None
    it = 0
    status = OPTIMAL
    while it < params.max_rounds:
        it += 1
        if boxes.is_empty:
            return BoundResult(np.inf, sol, it, tuple(pool), boxes, INFEASIBLE, history, UB,
                               time.perf_counter() - t0)
        model = build_basic_sdp(p, boxes, products + [c.to_row(p.n) for c in pool])
        new = solve_sdp(model, tolerances)
        if new.status == INFEASIBLE:
            return BoundResult(np.inf, new, it, tuple(pool), boxes, INFEASIBLE, history, UB,
                               time.perf_counter() - t0)
        if new.status != OPTIMAL:
            status = NUMERICAL_FAILURE
            log.warning("SDP failed at cutting-plane round %d", it)
            break
        sol = new
        lb = sol.objective
        history.append(lb)
        log.debug("round %d: LB=%.8g cuts=%d", it, lb, len(pool))

        if heuristic_callback is not None:
            UB = min(UB, heuristic_callback(sol, boxes))
        if tighten_callback is not None and np.isfinite(UB):
            boxes = tighten_callback(boxes, sol, UB, lb)
            if boxes.is_empty:
                return BoundResult(np.inf, sol, it, tuple(pool), boxes, INFEASIBLE, history, UB,
                                   time.perf_counter() - t0)
        if np.isfinite(UB) and UB > 0 and percentage_gap(UB, lb) <= params.gap_tol:
            break
        if it > 1 and abs(lb - prev_lb) <= params.stall_tol * max(abs(lb), 1e-12):
            break
        prev_lb = lb
        pool = purge_inactive(pool, sol, params.inactive_tol)
        known = {c.key for c in pool}
        cuts = [c for c in separate_rlt(sol, boxes, max_cuts, params.viol_tol) if c.key not in known]
        if not cuts:
            break
        pool.extend(cuts)

    if sol is None:
        return BoundResult(-np.inf, None, it, tuple(pool), boxes, NUMERICAL_FAILURE, history, UB,
                           time.perf_counter() - t0)
    return BoundResult(sol.objective, sol, it, tuple(pool), boxes, status, history, UB,
                       time.perf_counter() - t0)
