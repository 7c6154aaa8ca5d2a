"""Convex QPs with at most one convex quadratic constraint, solved with Clarabel."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import clarabel
import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class QpModel:
    """``min x'Px + q'x + const`` subject to

    ``A_eq x = b_eq``, ``G x <= h``, ``lower <= x <= upper`` and optionally
    ``x' Q x <= quad_rhs``.  Note the objective has no factor 1/2.
    """

    P: np.ndarray
    q: Optional[np.ndarray] = None
    const: float = 0.0
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    G: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    quad: Optional[np.ndarray] = None
    quad_rhs: float = 0.0
    # Optional precomputed factor R with quad = R'R.
    quad_factor: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.P.shape[0]


@dataclass
class QpSolution:
    status: str
    point: Optional[np.ndarray] = None
    objective: float = np.nan
    # Multipliers (>= 0) of G x <= h, of the lower and upper bounds, and of A_eq x = b_eq.
    ineq_duals: Optional[np.ndarray] = None
    lower_duals: Optional[np.ndarray] = None
    upper_duals: Optional[np.ndarray] = None
    eq_duals: Optional[np.ndarray] = None
    quad_dual: float = 0.0
    iterations: int = 0


@dataclass(frozen=True)
class QpTolerances:
    gap: float = 1e-9
    feas: float = 1e-9
    max_iter: int = 200


def psd_factor(Q: np.ndarray) -> np.ndarray:
    """R with R'R = Q for a PSD matrix, Cholesky first."""
    try:
        return np.linalg.cholesky(Q).T
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(0.5 * (Q + Q.T))
        keep = w > 1e-14 * max(1.0, w.max())
        return np.sqrt(w[keep])[:, None] * V[:, keep].T


def _settings(tol: QpTolerances):
    s = clarabel.DefaultSettings()
    s.verbose = False
    s.tol_gap_abs = tol.gap
    s.tol_gap_rel = tol.gap
    s.tol_feas = tol.feas
    s.max_iter = tol.max_iter
    return s


def solve_qp(model: QpModel, tolerances: QpTolerances = QpTolerances()) -> QpSolution:
    n = model.n
    P = 0.5 * (model.P + model.P.T)
    q = np.zeros(n) if model.q is None else np.asarray(model.q, dtype=float)
    blocks, rhs, cones = [], [], []
    sizes = {}

    if model.A_eq is not None and len(model.A_eq):
        A_eq = np.atleast_2d(model.A_eq)
        blocks.append(sp.csc_matrix(A_eq))
        rhs.append(np.asarray(model.b_eq, dtype=float))
        cones.append(clarabel.ZeroConeT(A_eq.shape[0]))
        sizes["eq"] = A_eq.shape[0]
    nonneg = []
    nn_rhs = []
    if model.G is not None and len(model.G):
        G = np.atleast_2d(model.G)
        nonneg.append(sp.csc_matrix(G))
        nn_rhs.append(np.asarray(model.h, dtype=float))
        sizes["G"] = G.shape[0]
    lo_idx = up_idx = np.zeros(0, dtype=int)
    if model.lower is not None:
        lo = np.asarray(model.lower, dtype=float)
        lo_idx = np.flatnonzero(np.isfinite(lo))
        if lo_idx.size:
            nonneg.append(sp.csc_matrix((-np.ones(lo_idx.size), (np.arange(lo_idx.size), lo_idx)), shape=(lo_idx.size, n)))
            nn_rhs.append(-lo[lo_idx])
    if model.upper is not None:
        up = np.asarray(model.upper, dtype=float)
        up_idx = np.flatnonzero(np.isfinite(up))
        if up_idx.size:
            nonneg.append(sp.csc_matrix((np.ones(up_idx.size), (np.arange(up_idx.size), up_idx)), shape=(up_idx.size, n)))
            nn_rhs.append(up[up_idx])
    if model.lower is not None and model.upper is not None:
        if np.any(np.asarray(model.lower) > np.asarray(model.upper)):
            return QpSolution(status=INFEASIBLE)
    if nonneg:
        blocks.extend(nonneg)
        rhs.extend(nn_rhs)
        cones.append(clarabel.NonnegativeConeT(sum(b.shape[0] for b in nonneg)))
    if model.quad is not None:
        if model.quad_rhs < 0:
            return QpSolution(status=INFEASIBLE)
        R = model.quad_factor if model.quad_factor is not None else psd_factor(model.quad)
        blocks.append(sp.vstack([sp.csc_matrix((1, n)), sp.csc_matrix(-R)]))
        rhs.append(np.concatenate([[np.sqrt(model.quad_rhs)], np.zeros(R.shape[0])]))
        cones.append(clarabel.SecondOrderConeT(R.shape[0] + 1))

    A = sp.vstack(blocks).tocsc() if blocks else sp.csc_matrix((0, n))
    b = np.concatenate(rhs) if rhs else np.zeros(0)
    solver = clarabel.DefaultSolver(sp.csc_matrix(np.triu(2.0 * P)), q, A, b, cones, _settings(tolerances))
    res = solver.solve()
    st = str(res.status)
    if st in ("Solved", "AlmostSolved"):
        status = OPTIMAL
    elif "PrimalInfeasible" in st:
        return QpSolution(status=INFEASIBLE, iterations=res.iterations)
    elif "DualInfeasible" in st:
        return QpSolution(status=UNBOUNDED, iterations=res.iterations)
    else:
        log.warning("clarabel returned %s", st)
        return QpSolution(status=NUMERICAL_FAILURE, iterations=res.iterations)

    x = np.asarray(res.x)
    z = np.asarray(res.z)
    k = 0
    eq_d = None
    if "eq" in sizes:
        eq_d = z[k:k + sizes["eq"]]
        k += sizes["eq"]
    g_d = None
    if "G" in sizes:
        g_d = z[k:k + sizes["G"]]
        k += sizes["G"]
    lo_d = np.zeros(n)
    lo_d[lo_idx] = z[k:k + lo_idx.size]
    k += lo_idx.size
    up_d = np.zeros(n)
    up_d[up_idx] = z[k:k + up_idx.size]
    k += up_idx.size
    quad_d = float(z[k]) if model.quad is not None else 0.0
    obj = float(x @ P @ x + q @ x + model.const)
    return QpSolution(status=status, point=x, objective=obj, ineq_duals=g_d, lower_duals=lo_d,
                      upper_duals=up_d, eq_duals=eq_d, quad_dual=quad_d, iterations=res.iterations)
