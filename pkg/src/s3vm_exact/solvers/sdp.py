"""Primal-dual interior-point solver for SDPs over one PSD block plus linear rows.

Primal:  min <C, Y>  s.t.  <A_k, Y> (>=, <=, ==) b_k,  Y PSD.
Dual:    max b'y     s.t.  C - sum_k y_k A_k = Z PSD,  y_k >= 0 on inequality rows
                           (after flipping <= rows to >=).

Each row touches a handful of matrix positions.  The Schur complement
``M_kj = <A_k, Y A_j Z^-1>`` (HKM direction) is assembled as ``S H S'`` where ``S``
maps rows to the distinct positions they use and ``H`` is the small
position-by-position block, so cost scales with the number of distinct
positions rather than with the square of the block size.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Hashable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"

TAGS = ("corner", "box-lower", "box-upper", "diag-lower", "diag-upper", "balancing", "rlt", "product", "other")


@dataclass(frozen=True)
class SdpRow:
    """``sum_e coefs[e] * Y[rows[e], cols[e]]  (sense)  rhs``.

    An off-diagonal position (p, q) stands for the symmetric pair, so the
    coefficient multiplies the single entry ``Y_pq``.
    """

    rows: np.ndarray
    cols: np.ndarray
    coefs: np.ndarray
    sense: str
    rhs: float
    tag: str = "other"
    key: Hashable = None

    def __post_init__(self):
        if self.sense not in (">=", "<=", "=="):
            raise ValueError(f"bad sense {self.sense!r}")
        if self.tag not in TAGS:
            raise ValueError(f"bad tag {self.tag!r}")
        for name in ("rows", "cols", "coefs"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name))))

    def value(self, Y: np.ndarray) -> float:
        return float(self.coefs @ Y[self.rows, self.cols])

    def slack(self, Y: np.ndarray) -> float:
        """Nonnegative when satisfied (zero for equalities at feasibility)."""
        v = self.value(Y)
        if self.sense == ">=":
            return v - self.rhs
        if self.sense == "<=":
            return self.rhs - v
        return -abs(v - self.rhs)


@dataclass(frozen=True)
class SdpModel:
    dim: int
    cost: np.ndarray
    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        if self.cost.shape != (self.dim, self.dim):
            raise ValueError("cost must be dim x dim")
        for r in self.rows:
            if r.rows.size and (r.rows.max() >= self.dim or r.cols.max() >= self.dim or min(r.rows.min(), r.cols.min()) < 0):
                raise ValueError(f"row {r.key!r} references entries outside the block")


@dataclass
class SdpSolution:
    status: str
    block: Optional[np.ndarray] = None
    objective: float = np.nan
    dual_objective: float = np.nan
    duals: Optional[np.ndarray] = None
    dual_matrix: Optional[np.ndarray] = None
    iterations: int = 0
    info: dict = field(default_factory=dict)
    model: Optional[SdpModel] = field(default=None, repr=False)

    @property
    def x(self) -> np.ndarray:
        return self.block[:-1, -1]

    @property
    def X(self) -> np.ndarray:
        return self.block[:-1, :-1]

    @property
    def lower_bound(self) -> float:
        """The smaller of the primal and dual values; the safer of the two for bounding."""
        return min(self.objective, self.dual_objective)

    def dual(self, key) -> float:
        for r, d in zip(self.model.rows, self.duals):
            if r.key == key:
                return float(d)
        raise KeyError(key)

    def duals_by_key(self) -> dict:
        return {(r.tag, r.key): float(d) for r, d in zip(self.model.rows, self.duals)}

    def slacks(self) -> np.ndarray:
        return np.array([r.slack(self.block) for r in self.model.rows])


@dataclass(frozen=True)
class SdpTolerances:
    gap: float = 1e-7
    feas: float = 1e-7
    # Accepted when the tight targets stall.
    relaxed: float = 1e-6
    # Iterations without a 2x residual improvement that count as a stall.
    stall_iters: int = 4
    max_iter: int = 120
    step: float = 0.95


class _Compiled:
    """Rows in ``>=``/``==`` form, normalized, with positions deduplicated."""

    def __init__(self, model: SdpModel):
        N = model.dim
        m = len(model.rows)
        pos_index: dict = {}
        ri, ci, vals = [], [], []
        b = np.empty(m)
        ineq = np.zeros(m, dtype=bool)
        flip = np.ones(m)
        for k, r in enumerate(model.rows):
            sgn = -1.0 if r.sense == "<=" else 1.0
            flip[k] = sgn
            ineq[k] = r.sense != "=="
            b[k] = sgn * r.rhs
            acc: dict = {}
            for p, q, a in zip(r.rows.tolist(), r.cols.tolist(), r.coefs.tolist()):
                key = (p, q) if p <= q else (q, p)
                acc[key] = acc.get(key, 0.0) + sgn * a
            for key, a in acc.items():
                if a == 0.0:
                    continue
                j = pos_index.setdefault(key, len(pos_index))
                ri.append(k)
                ci.append(j)
                vals.append(a)
        P = len(pos_index)
        pos = np.array(list(pos_index.keys()), dtype=int).reshape(P, 2)
        self.p = pos[:, 0]
        self.q = pos[:, 1]
        self.offdiag = self.p != self.q
        S = sp.csr_matrix((vals, (ri, ci)), shape=(m, P))
        # ||A_k||_F: off-diagonal coefficients are split over two entries.
        w = np.where(self.offdiag, 0.5, 1.0)
        norms = np.sqrt(np.asarray(S.multiply(S) @ w).ravel())
        norms[norms == 0] = 1.0
        self.row_scale = norms
        self.S = sp.diags(1.0 / norms) @ S
        self.S = self.S.tocsr()
        self.St = self.S.T.tocsr()
        self.b = b / norms
        self.ineq = ineq
        self.flip = flip
        self.m = m
        self.N = N
        self.zero_rows = np.asarray(abs(S).sum(axis=1)).ravel() == 0

    def apply(self, Y: np.ndarray) -> np.ndarray:
        """A(Y)."""
        return self.S @ Y[self.p, self.q]

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """sum_k y_k A_k as a dense symmetric matrix."""
        w = self.St @ y
        w = np.where(self.offdiag, 0.5 * w, w)
        out = np.zeros((self.N, self.N))
        np.add.at(out, (self.p, self.q), w)
        od = self.offdiag
        np.add.at(out, (self.q[od], self.p[od]), w[od])
        return out

    def schur(self, Y: np.ndarray, W: np.ndarray) -> np.ndarray:
        p, q = self.p, self.q
        # Row takes first, then column takes: much faster than np.ix_ gathers.
        Yp, Yq = Y.take(p, axis=0), Y.take(q, axis=0)
        Wp, Wq = W.take(p, axis=0), W.take(q, axis=0)
        H = Yp.take(q, axis=1).T * Wp.take(q, axis=1)
        H += H.T
        H += Yq.take(q, axis=1) * Wp.take(p, axis=1)
        H += Yp.take(p, axis=1) * Wq.take(q, axis=1)
        H *= 0.25
        SH = self.S @ H
        return np.asarray(self.S @ SH.T)


def _max_step(L: np.ndarray, D: np.ndarray) -> float:
    """Largest alpha with ``L L' + alpha D`` PSD, given the Cholesky factor ``L``."""
    T = scipy.linalg.solve_triangular(L, D, lower=True)
    T = scipy.linalg.solve_triangular(L, T.T, lower=True)
    lam = scipy.linalg.eigvalsh(0.5 * (T + T.T), subset_by_index=[0, 0])[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_lin(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def _chol(A: np.ndarray) -> Optional[np.ndarray]:
    try:
        return scipy.linalg.cholesky(A, lower=True)
    except np.linalg.LinAlgError:
        return None


def _solve_spd(M: np.ndarray):
    m = M.shape[0]
    reg = 0.0
    scale = max(1.0, float(np.max(np.abs(np.diag(M))))) if m else 1.0
    for _ in range(6):
        try:
            f = scipy.linalg.cho_factor(M + reg * np.eye(m), lower=True, check_finite=False)
            return lambda rhs: scipy.linalg.cho_solve(f, rhs, check_finite=False)
        except np.linalg.LinAlgError:
            reg = scale * (1e-14 if reg == 0 else reg / scale * 100)
    lu = scipy.linalg.lu_factor(M)
    return lambda rhs: scipy.linalg.lu_solve(lu, rhs)


def solve_sdp(model: SdpModel, tolerances: SdpTolerances = SdpTolerances()) -> SdpSolution:
    """Solve ``model`` with a Mehrotra predictor-corrector HKM method."""
    tol = tolerances
    cp = _Compiled(model)
    N, m = cp.N, cp.m
    I = cp.ineq
    nI = int(I.sum())

    if np.any(cp.zero_rows):
        # 0 (sense) rhs: either vacuous or infeasible.
        bad = cp.zero_rows & ((I & (cp.b > 0)) | (~I & (cp.b != 0)))
        if np.any(bad):
            return SdpSolution(status=INFEASIBLE, model=model)

    C_raw = 0.5 * (model.cost + model.cost.T)
    c_scale = float(np.linalg.norm(C_raw))
    c_scale = c_scale if c_scale > 0 else 1.0
    C = C_raw / c_scale
    b = cp.b
    normb = float(np.linalg.norm(b))

    xi = max(10.0, np.sqrt(N), N * float(np.max((1 + np.abs(b)) / 2.0)) if m else 10.0)
    eta = max(10.0, np.sqrt(N), 1.0)
    Y = xi * np.eye(N)
    Z = eta * np.eye(N)
    y = np.zeros(m)
    y[I] = eta
    s = np.zeros(m)
    s[I] = xi
    nu = N + nI

    status = NUMERICAL_FAILURE
    best = None
    best_err = ref_err = np.inf
    stalled = 0
    it = 0
    for it in range(1, tol.max_iter + 1):
        LY = _chol(Y)
        LZ = _chol(Z)
        if LY is None or LZ is None:
            break
        Zinv_L = scipy.linalg.solve_triangular(LZ, np.eye(N), lower=True)
        W = Zinv_L.T @ Zinv_L

        AY = cp.apply(Y)
        rp = b - AY + np.where(I, s, 0.0)
        Aty = cp.adjoint(y)
        Rd = C - Aty - Z
        pobj = float(np.sum(C * Y))
        dobj = float(b @ y)
        mu = (float(np.sum(Y * Z)) + float(s[I] @ y[I])) / nu

        pinf = np.linalg.norm(rp) / (1.0 + normb)
        dinf = np.linalg.norm(Rd) / 2.0
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        log.debug("it=%d pobj=%.9g dobj=%.9g pinf=%.2e dinf=%.2e gap=%.2e mu=%.2e",
                  it, pobj, dobj, pinf, dinf, relgap, mu)

        if max(pinf, dinf, relgap) <= tol.gap:
            status = OPTIMAL
            break
        err = max(pinf, dinf, relgap)
        if err <= tol.relaxed:
            if err < best_err:
                best = (Y.copy(), Z.copy(), y.copy(), it)
                best_err = err
            if err < 0.5 * ref_err:
                ref_err, stalled = err, 0
            else:
                stalled += 1
                if stalled >= tol.stall_iters:
                    break
        # Primal infeasibility certificate: b'y -> +inf with A'y + Z bounded.
        if dobj > 0:
            ray = np.linalg.norm(Aty + Z) / dobj
            if ray < 1e-8 and np.all(y[I] >= 0):
                status = INFEASIBLE
                break

        M = cp.schur(Y, W)
        d = np.zeros(m)
        d[I] = s[I] / y[I]
        M[np.diag_indices(m)] += d
        solve = _solve_spd(M)

        YRdW = Y @ Rd @ W

        def direction(sig_mu, G, corr_lin):
            # Complementarity target for the PSD block: sig_mu W - Y - G - Y dZ W.
            base = sig_mu * W - Y - G - YRdW
            h = rp - cp.apply(0.5 * (base + base.T))
            lin = np.zeros(m)
            lin[I] = (sig_mu - s[I] * y[I] - corr_lin[I]) / y[I]
            h = h + lin
            dy = solve(h)
            dZ = Rd - cp.adjoint(dy)
            dY = sig_mu * W - Y - G - Y @ dZ @ W
            dY = 0.5 * (dY + dY.T)
            ds = np.zeros(m)
            ds[I] = (sig_mu - s[I] * y[I] - corr_lin[I] - s[I] * dy[I]) / y[I]
            return dY, dy, dZ, ds

        def steps(dY, dy, dZ, ds):
            ap = min(_max_step(LY, dY), _max_step_lin(s[I], ds[I]))
            ad = min(_max_step(LZ, dZ), _max_step_lin(y[I], dy[I]))
            return ap, ad

        zeros = np.zeros(m)
        dYa, dya, dZa, dsa = direction(0.0, 0.0, zeros)
        apa, ada = steps(dYa, dya, dZa, dsa)
        apa, ada = min(1.0, apa), min(1.0, ada)
        mu_a = (float(np.sum((Y + apa * dYa) * (Z + ada * dZa)))
                + float((s[I] + apa * dsa[I]) @ (y[I] + ada * dya[I]))) / nu
        sigma = min(1.0, max(0.0, mu_a / mu)) ** 3 if mu > 0 else 0.0

        G = dYa @ dZa @ W
        corr = np.zeros(m)
        corr[I] = dsa[I] * dya[I]
        dY, dy, dZ, ds = direction(sigma * mu, G, corr)
        ap, ad = steps(dY, dy, dZ, ds)
        ap = min(1.0, tol.step * ap)
        ad = min(1.0, tol.step * ad)

        Y = Y + ap * dY
        s = s + ap * ds
        y = y + ad * dy
        Z = Z + ad * dZ
        Y = 0.5 * (Y + Y.T)
        Z = 0.5 * (Z + Z.T)
        if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(Z))):
            break
        if max(ap, ad) < 1e-10:
            break

    if status == NUMERICAL_FAILURE and best is not None:
        Y, Z, y, _ = best
        status = OPTIMAL
        log.info("SDP stalled; accepting iterate within relaxed tolerance")
    if status != OPTIMAL:
        return SdpSolution(status=status, iterations=it, model=model)

    # Undo scaling: C = c_scale * C_scaled, rows divided by their norms.
    # Inequality multipliers come out nonnegative whatever the row's sense.
    duals = c_scale * y / cp.row_scale
    pobj = c_scale * float(np.sum(C * Y))
    dobj = c_scale * float(b @ y)
    return SdpSolution(
        status=OPTIMAL,
        block=Y,
        objective=pobj,
        dual_objective=dobj,
        duals=duals,
        dual_matrix=c_scale * Z,
        iterations=it,
        info={"pinf": pinf, "dinf": dinf, "relgap": relgap},
        model=model,
    )

