"""Box tightening: objective-cutoff OBBT and dual-multiplier (marginals) updates."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .boxes import BoxBounds
from .problem import ProblemData
from .solvers.qp import INFEASIBLE, OPTIMAL, QpModel, psd_factor, solve_qp
from .solvers.sdp import SdpSolution

log = logging.getLogger(__name__)

ACTIVE_TOL = 1e-6
DUAL_TOL = 1e-6
# Bounds from the convex subproblems are relaxed by this much (relative) so
# that solver tolerance can never cut off the point that attains UB.
OBBT_MARGIN = 1e-7
MARGINAL_MARGIN = 1e-6


@dataclass(frozen=True)
class TightenReport:
    boxes: BoxBounds
    updated_indices: frozenset
    newly_sign_fixed: frozenset
    infeasible: bool = False


def _report(before: BoxBounds, after: BoxBounds, infeasible: bool = False) -> TightenReport:
    changed = np.flatnonzero((after.lower > before.lower) | (after.upper < before.upper))
    fixed = np.flatnonzero(after.sign_fixed & ~before.sign_fixed)
    return TightenReport(after, frozenset(changed.tolist()), frozenset(fixed.tolist()),
                         infeasible or after.is_empty)


def obbt(p: ProblemData, boxes: BoxBounds, UB: float) -> TightenReport:
    """Minimize and maximize each ``x_i`` over box, cutoff ``x'Cx <= UB`` and balancing.

    Bounds are updated in place as the sweep proceeds (later subproblems see
    earlier results) and every new bound is projected outside (-1, 1).
    """
    if not np.isfinite(UB):
        raise ValueError("OBBT needs a finite upper bound")
    n = p.n
    R = psd_factor(p.cost)
    A = b = None
    if p.balancing_active:
        a, r = p.balancing_row()
        A, b = a[None, :], np.array([r])
    lo = boxes.lower.copy()
    up = boxes.upper.copy()
    if np.any(lo > up):
        return _report(boxes, boxes, infeasible=True)

    def extreme(i: int, sign: float):
        q = np.zeros(n)
        q[i] = sign
        sol = solve_qp(QpModel(P=np.zeros((n, n)), q=q, A_eq=A, b_eq=b, lower=lo, upper=up,
                               quad=p.cost, quad_rhs=UB, quad_factor=R))
        if sol.status == INFEASIBLE:
            return None
        if sol.status != OPTIMAL:
            log.warning("OBBT subproblem for x_%d failed (%s); keeping bound", i, sol.status)
            return np.nan
        return float(sol.point[i])

    for i in range(n):
        if lo[i] < 1.0:
            v = extreme(i, 1.0)
            if v is None:
                return _report(boxes, BoxBounds(lo, up), infeasible=True)
            if np.isfinite(v):
                v -= OBBT_MARGIN * max(1.0, abs(v))
                if v > lo[i]:
                    lo[i] = max(v, 1.0) if v > -1.0 else v
        if up[i] > -1.0:
            v = extreme(i, -1.0)
            if v is None:
                return _report(boxes, BoxBounds(lo, up), infeasible=True)
            if np.isfinite(v):
                v += OBBT_MARGIN * max(1.0, abs(v))
                if v < up[i]:
                    up[i] = min(v, -1.0) if v < 1.0 else v
        if lo[i] > up[i]:
            return _report(boxes, BoxBounds(lo, up), infeasible=True)
    return _report(boxes, BoxBounds(lo, up).project_signs())


def marginal_box_update(boxes: BoxBounds, sol: SdpSolution, UB: float, LB: float,
                        margin: float = MARGINAL_MARGIN) -> TightenReport:
    """Shrink boxes with the multipliers of active box and diagonal rows.

    Any row ``g <= 0`` with multiplier ``lam`` satisfies ``-g <= (UB - LB)/lam`` at
    every point whose objective is at most ``UB``.
    """
    if UB < LB:
        UB = LB
    lo = boxes.lower.copy()
    up = boxes.upper.copy()
    slack = (UB - LB) + margin * max(1.0, abs(UB))
    Y = sol.block
    for row, lam in zip(sol.model.rows, sol.duals):
        if row.tag not in ("box-lower", "box-upper", "diag-lower", "diag-upper"):
            continue
        if not lam > DUAL_TOL:
            continue
        if abs(row.value(Y) - row.rhs) > ACTIVE_TOL * max(1.0, abs(row.rhs)):
            continue
        i = int(row.key[1])
        budget = slack / lam
        if row.tag == "box-lower":
            up[i] = min(up[i], row.rhs + budget)
        elif row.tag == "box-upper":
            lo[i] = max(lo[i], row.rhs - budget)
        elif row.tag == "diag-lower":
            w = np.sqrt(1.0 + budget)
            lo[i] = max(lo[i], -w)
            up[i] = min(up[i], w)
        else:
            pp = row.rhs - budget
            if pp >= 1.0:
                s = np.sqrt(pp)
                if lo[i] > -s:
                    lo[i] = max(lo[i], s)
                if up[i] < s:
                    up[i] = min(up[i], -s)
    new = BoxBounds(lo, up)
    if not new.is_empty:
        new = new.project_signs()
    return _report(boxes, new)
