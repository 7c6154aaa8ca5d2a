"""Best-first branch-and-cut over the signs of the unlabeled variables."""
from __future__ import annotations

import heapq
import itertools
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.stats import rankdata

from .boxes import BoxBounds
from .heuristic import heuristic_from_point, label_qp, repair_labeling, round_sdp, two_opt_search
from .problem import Incumbent, Labeling, ProblemData, check_feasible, percentage_gap
from .relaxations import CutParams, cutting_plane_bound
from .solvers.sdp import SdpSolution, SdpTolerances
from .svm import supervised_labeling
from .tightening import marginal_box_update, obbt

log = logging.getLogger(__name__)

OPTIMAL_WITHIN_GAP = "optimal_within_gap"
TIME_LIMIT = "time_limit"
NODE_LIMIT = "node_limit"
INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class SolveParams:
    gap_tol: float = 0.1  # percent
    time_limit_sec: float = np.inf
    max_nodes: Optional[int] = None
    cuts: CutParams = CutParams()
    # With gap_tol = 0 a node is still pruned once LB >= UB * (1 - prune_rel_tol),
    # which absorbs the interior-point accuracy.
    prune_rel_tol: float = 1e-7
    use_obbt: bool = True
    use_marginals: bool = True
    sdp: SdpTolerances = SdpTolerances()
    supervised_C: Optional[float] = None  # C_l for the warm-start SVM; defaults to the instance's


@dataclass
class BncNode:
    id: int
    parent_id: Optional[int]
    boxes: BoxBounds
    inherited_lb: float
    depth: int = 0
    pool: tuple = ()


@dataclass
class NodeRecord:
    id: int
    depth: int
    inherited_lb: float
    lower_bound: float
    lb_history: list
    upper_bound: float
    global_lb: float
    outcome: str


@dataclass
class SolveReport:
    incumbent: Optional[Incumbent]
    lower_bound: float
    gap_percent: float
    nodes_processed: int
    wall_time: float
    status: str
    root_lower_bound: float = np.nan
    root_gap_percent: float = np.nan
    root_iterations: int = 0
    obbt_time: float = 0.0
    ub_history: list = field(default_factory=list)
    records: list = field(default_factory=list)


# ---------------------------------------------------------------- branching


def branching_candidates(x_star, xbar, boxes: BoxBounds) -> np.ndarray:
    """Free indices where the labeling QP sits on its bound and the relaxation is undecided.

    Given labels are sign-fixed in ``boxes``, so only unlabeled indices qualify.
    """
    x_star = np.asarray(x_star, dtype=float)
    xbar = np.asarray(xbar, dtype=float)
    ok = (~boxes.sign_fixed) & (np.abs(x_star) <= 1.0 + 1e-6) & (np.abs(xbar) < 1.0 - 1e-9)
    return np.flatnonzero(ok)


def score_table(sol: SdpSolution, cost: np.ndarray, boxes: BoxBounds) -> np.ndarray:
    """Rows a1..a4 and b for every index."""
    x, X = sol.x, sol.X
    E = np.outer(x, x) - X
    CE = cost * E
    with np.errstate(invalid="ignore"):
        b = np.minimum(1.0 - boxes.lower, 1.0 + boxes.upper)
    return np.vstack([E.sum(1), np.abs(E).sum(1), CE.sum(1), np.abs(CE).sum(1), b])


def branching_scores(sol: SdpSolution, cost: np.ndarray, boxes: BoxBounds, cands) -> int:
    """Candidate with the smallest rank sum; rank 1 is the largest value of a measure."""
    cands = np.asarray(cands, dtype=int)
    if cands.size == 0:
        raise ValueError("no branching candidates")
    if cands.size == 1:
        return int(cands[0])
    T = score_table(sol, cost, boxes)[:, cands]
    ranks = sum(rankdata(-row, method="min") for row in T)
    best = np.flatnonzero(ranks == ranks.min())
    return int(cands[best].min())


def make_children(node: BncNode, i: int, lb: float, ids, boxes: Optional[BoxBounds] = None,
                  pool: tuple = ()) -> tuple[BncNode, BncNode]:
    """Split on the sign of ``x_i``: one child gets ``L_i = 1``, the other ``U_i = -1``."""
    base = node.boxes if boxes is None else boxes
    if base.sign_fixed[i]:
        raise ValueError(f"x_{i} already has a fixed sign")
    pos = BncNode(next(ids), node.id, base.with_bounds(i, lower=max(1.0, base.lower[i])), lb, node.depth + 1, pool)
    neg = BncNode(next(ids), node.id, base.with_bounds(i, upper=min(-1.0, base.upper[i])), lb, node.depth + 1, pool)
    return pos, neg


def _rank_one(sol: SdpSolution, tol: float = 1e-6) -> bool:
    x = sol.x
    return float(np.max(np.abs(sol.X - np.outer(x, x)))) <= tol * max(1.0, float(np.max(np.abs(sol.X))))


# ---------------------------------------------------------------- driver


def initial_incumbent(p: ProblemData, C_l: Optional[float] = None) -> Optional[Incumbent]:
    """Supervised SVM labeling, then the labeling QP, then two-opt."""
    if p.gram is not None:
        lab = Labeling(supervised_labeling(p.gram, p.labels, C_l or p.penalties[0]), p.l)
        score = np.zeros(p.n)
    else:
        lab = round_sdp(np.zeros(p.n), p.labels)
        score = np.zeros(p.n)
    inc = label_qp(p, lab)
    if inc is None and p.balancing_active:
        # Without SVM scores every point is equally uncertain; the repair then flips in index order.
        inc = label_qp(p, repair_labeling(lab, score, p.balancing_rhs))
    if inc is None:
        return None
    return two_opt_search(p, inc)


class _State:
    def __init__(self, p: ProblemData, params: SolveParams, observer):
        self.p = p
        self.params = params
        self.incumbent: Optional[Incumbent] = None
        self.ub_history: list = []
        self.improved = False
        self.observer = observer

    @property
    def UB(self) -> float:
        return self.incumbent.objective if self.incumbent is not None else np.inf

    def offer(self, inc: Optional[Incumbent]) -> bool:
        if inc is None or not check_feasible(self.p, inc.point):
            return False
        if self.incumbent is None or inc.objective < self.UB - 1e-12 * max(1.0, abs(self.UB)):
            self.incumbent = inc
            self.ub_history.append(inc.objective)
            self.improved = True
            return True
        return False

    def prunable(self, lb: float) -> bool:
        UB = self.UB
        if not np.isfinite(UB):
            return lb == np.inf
        tol = max(self.params.gap_tol / 100.0, self.params.prune_rel_tol)
        return lb >= UB - tol * abs(UB)

    def notify(self, event: str, before: BoxBounds, after: BoxBounds):
        if self.observer is not None:
            self.observer(event, before, after)


def solve(p: ProblemData, params: SolveParams = SolveParams(),
          observer: Optional[Callable] = None) -> SolveReport:
    """Run branch-and-cut until the gap target, the time limit or the node limit.

    ``observer(event, boxes_before, boxes_after)`` sees every box update
    (``"obbt"``, ``"marginal"``), which the tests use to audit soundness.
    """
    t0 = time.perf_counter()
    st = _State(p, params, observer)
    cut_params = replace(params.cuts, gap_tol=params.gap_tol)
    ids = itertools.count()

    st.offer(initial_incumbent(p, params.supervised_C))
    if st.incumbent is None:
        # Only a single unlabeled point with |r| < 1 can make the model infeasible.
        return SolveReport(None, np.inf, np.nan, 0, time.perf_counter() - t0, INFEASIBLE)

    root_boxes = p.label_bounds()
    obbt_time = 0.0

    def run_obbt(boxes: BoxBounds) -> BoxBounds:
        nonlocal obbt_time
        if not params.use_obbt:
            return boxes
        t = time.perf_counter()
        rep = obbt(p, boxes, st.UB)
        obbt_time += time.perf_counter() - t
        if rep.infeasible:
            # Nothing is strictly better than the incumbent.
            return rep.boxes
        st.notify("obbt", boxes, rep.boxes)
        return rep.boxes

    root_boxes = run_obbt(root_boxes)
    st.improved = False

    def heuristic_cb(sol: SdpSolution, boxes: BoxBounds) -> float:
        st.offer(heuristic_from_point(p, sol.x))
        return st.UB

    def tighten_cb(boxes: BoxBounds, sol: SdpSolution, UB: float, LB: float) -> BoxBounds:
        if not params.use_marginals:
            return boxes
        # The Lagrangian argument needs the dual objective, not the primal one.
        new = marginal_box_update(boxes, sol, st.UB, min(LB, sol.dual_objective)).boxes
        st.notify("marginal", boxes, new)
        return new

    heap: list = []
    seq = itertools.count()
    root = BncNode(next(ids), None, root_boxes, -np.inf)
    heapq.heappush(heap, (root.inherited_lb, next(seq), root))
    fathomed_lb = np.inf
    processed = 0
    records: list = []
    status = OPTIMAL_WITHIN_GAP
    root_info = {}

    def global_lb(extra=np.inf) -> float:
        open_lb = heap[0][0] if heap else np.inf
        return min(open_lb, fathomed_lb, extra, st.UB)

    while heap:
        if time.perf_counter() - t0 > params.time_limit_sec:
            status = TIME_LIMIT
            break
        if params.max_nodes is not None and processed >= params.max_nodes:
            status = NODE_LIMIT
            break
        lb0, _, node = heapq.heappop(heap)
        if st.prunable(lb0):
            fathomed_lb = min(fathomed_lb, lb0)
            continue
        processed += 1
        boxes = node.boxes.intersect(root_boxes)
        if boxes.is_empty:
            records.append(NodeRecord(node.id, node.depth, lb0, np.inf, [], st.UB, global_lb(), "empty"))
            continue

        free = ~boxes.sign_fixed
        if not np.any(free):
            # Leaf: the labeling is decided and the problem is convex.
            inc = label_qp(p, Labeling(boxes.fixed_signs, p.l))
            st.offer(inc)
            val = inc.objective if inc is not None else np.inf
            if node.parent_id is None:
                root_info = dict(lb=val, iters=0)
            records.append(NodeRecord(node.id, node.depth, lb0, val, [], st.UB, global_lb(), "leaf"))
            if st.improved:
                root_boxes = run_obbt(root_boxes)
                st.improved = False
            continue

        res = cutting_plane_bound(p, boxes, st.UB, cut_params, heuristic_cb, tighten_cb,
                                  pool=list(node.pool), tolerances=params.sdp)
        lb = max(lb0, res.lower_bound)
        if node.parent_id is None:
            root_info = dict(lb=res.lower_bound, iters=res.iterations)
        if st.improved:
            root_boxes = run_obbt(root_boxes)
            st.improved = False

        if st.prunable(lb):
            fathomed_lb = min(fathomed_lb, lb)
            records.append(NodeRecord(node.id, node.depth, lb0, lb, list(res.history), st.UB,
                                      global_lb(), "pruned"))
            continue

        sol = res.solution
        nboxes = res.boxes.intersect(root_boxes) if res.boxes is not None else boxes
        if nboxes.is_empty:
            records.append(NodeRecord(node.id, node.depth, lb0, np.inf, list(res.history), st.UB,
                                      global_lb(), "empty"))
            continue
        free = ~nboxes.sign_fixed
        if not np.any(free):
            heapq.heappush(heap, (lb, next(seq), BncNode(next(ids), node.id, nboxes, lb, node.depth + 1, ())))
            records.append(NodeRecord(node.id, node.depth, lb0, lb, list(res.history), st.UB,
                                      global_lb(lb), "fixed"))
            continue

        if sol is None:
            i = int(np.flatnonzero(free)[0])
        else:
            xbar = sol.x
            lab = round_sdp(xbar, p.labels)
            star = label_qp(p, lab)
            if star is None and p.balancing_active:
                star = label_qp(p, repair_labeling(lab, xbar, p.balancing_rhs))
            if star is not None:
                st.offer(star)
            x_star = star.point if star is not None else np.full(p.n, np.inf)
            cands = branching_candidates(x_star, xbar, nboxes)
            if cands.size == 0:
                if _rank_one(sol) and check_feasible(p, xbar):
                    st.offer(Incumbent.from_point(p, xbar))
                    fathomed_lb = min(fathomed_lb, lb)
                    records.append(NodeRecord(node.id, node.depth, lb0, lb, list(res.history), st.UB,
                                              global_lb(), "rank-one"))
                    continue
                idx = np.flatnonzero(free)
                i = int(idx[np.argmin(np.abs(xbar[idx]))])
            else:
                i = branching_scores(sol, p.cost, nboxes, cands)
            if st.improved:
                root_boxes = run_obbt(root_boxes)
                st.improved = False
                if st.prunable(lb):
                    fathomed_lb = min(fathomed_lb, lb)
                    continue
        for child in make_children(node, i, lb, ids, boxes=nboxes, pool=res.active_cuts):
            heapq.heappush(heap, (lb, next(seq), child))
        records.append(NodeRecord(node.id, node.depth, lb0, lb, list(res.history), st.UB,
                                  global_lb(lb), "branched"))

    LB = global_lb()
    if status == OPTIMAL_WITHIN_GAP:
        LB = min(fathomed_lb, st.UB)
    gap = percentage_gap(st.UB, LB) if st.UB > 0 else 0.0
    root_lb = root_info.get("lb", np.nan)
    return SolveReport(
        incumbent=st.incumbent,
        lower_bound=LB,
        gap_percent=gap,
        nodes_processed=processed,
        wall_time=time.perf_counter() - t0,
        status=status,
        root_lower_bound=root_lb,
        root_gap_percent=percentage_gap(st.UB, root_lb) if np.isfinite(root_lb) and st.UB > 0 else np.nan,
        root_iterations=root_info.get("iters", 0),
        obbt_time=obbt_time,
        ub_history=list(st.ub_history),
        records=records,
    )
