"""Independent reference computations shared by the tests.

Nothing here calls the solver code under test except where noted; the
labeling QP oracle uses scipy's SLSQP instead of the conic solver.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import minimize

from s3vm_exact.heuristic import label_qp
from s3vm_exact.kernels import KernelSpec, default_gamma, gram_matrix
from s3vm_exact.problem import Labeling, assemble_problem


def cu_rule(l: int, n: int, C_l: float = 1.0, factor: float = 0.2) -> float:
    return factor * (l / (n - l)) * C_l


def random_instance(seed: int, n: int, l: int, balancing: bool = True, d: int = 2, C_l: float = 1.0):
    """Two Gaussian blobs, RBF with gamma = 1/d; the first l points are labeled, both classes present."""
    rng = np.random.default_rng(seed)
    y = rng.choice([-1.0, 1.0], size=n)
    y[0], y[1] = 1.0, -1.0
    X = rng.normal(size=(n, d)) + 1.2 * y[:, None] * np.eye(d)[0]
    G = gram_matrix(X, KernelSpec("rbf", default_gamma(d)))
    return assemble_problem(G, y[:l], C_l, cu_rule(l, n, C_l), balancing=balancing), y


def naive_quadratic(C, x) -> float:
    total = 0.0
    for i in range(len(x)):
        for j in range(len(x)):
            total += x[i] * C[i][j] * x[j]
    return total


def slsqp_label_qp(p, signs):
    """min x'Cx s.t. s_i x_i >= 1 (and the balancing row) via SLSQP; None if infeasible."""
    s = np.asarray(signs, dtype=float)
    C = np.asarray(p.cost)
    cons = [{"type": "ineq", "fun": lambda x: s * x - 1.0, "jac": lambda x: np.diag(s)}]
    if p.balancing_active:
        a, r = p.balancing_row()
        u = s[p.l:]
        if np.all(u > 0) and r < 1 or np.all(u < 0) and r > -1:
            return None
        cons.append({"type": "eq", "fun": lambda x: np.array([a @ x - r]), "jac": lambda x: a[None, :]})
    x0 = 1.5 * s
    res = minimize(lambda x: x @ C @ x, x0, jac=lambda x: 2 * C @ x, constraints=cons,
                   method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
    return float(res.fun), res.x


def enumerate_labelings(p):
    for tail in itertools.product((-1.0, 1.0), repeat=p.n - p.l):
        yield Labeling(np.r_[p.labels, tail], p.l)


def brute_force(p):
    """Global optimum by enumerating every labeling of the unlabeled points (uses label_qp)."""
    best = None
    points = []
    for lab in enumerate_labelings(p):
        inc = label_qp(p, lab)
        if inc is None:
            continue
        points.append(inc.point)
        if best is None or inc.objective < best.objective:
            best = inc
    return best, points


def grid_minimum(sub, lo=-10.0, hi=10.0, step=1e-3):
    """Dense grid minimum of a two-opt subproblem over its feasible set."""
    t = np.arange(lo, hi + step / 2, step)
    # The interval endpoints join the grid; a 1e-3 grid alone misses a boundary
    # minimum by slope * 1e-3.  Roundoff in |k - t| is tolerated at 1e-12.
    extra = np.array([1.0, -1.0, sub.k - 1.0, sub.k + 1.0])
    t = np.concatenate([t, extra[(extra >= lo) & (extra <= hi)]])
    t = t[(np.abs(t) >= 1.0 - 1e-12) & (np.abs(sub.k - t) >= 1.0 - 1e-12)]
    if t.size == 0:
        return np.inf, np.nan
    v = sub.value(t)
    k = int(np.argmin(v))
    return float(v[k]), float(t[k])
