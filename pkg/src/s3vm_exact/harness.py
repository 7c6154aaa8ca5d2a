"""Data ingestion, label masking, model selection and the benchmark pipeline."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import svm
from .branch_and_cut import SolveParams, initial_incumbent, solve
from .heuristic import heuristic_from_point
from .kernels import KernelSpec, cross_kernel, default_gamma, gram_matrix
from .problem import assemble_problem, percentage_gap
from .relaxations import CutParams, build_basic_sdp, cutting_plane_bound, qp_bound, qp_lagrangian_bound
from .solvers.sdp import OPTIMAL, solve_sdp
from .tightening import marginal_box_update, obbt

log = logging.getLogger(__name__)

MISSING = ("?", "")
CL_GRID = tuple(10.0 ** (i / 10.0) for i in range(-10, 11))


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    truth: Optional[np.ndarray]
    labeled_mask: np.ndarray
    seed: int = 0
    name: str = "data"
    # +/-1 where labeled, 0 elsewhere; defaults to truth on the mask.
    given: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("features must be a non-empty n x d matrix")
        mask = np.asarray(self.labeled_mask, dtype=bool)
        if mask.shape != (X.shape[0],):
            raise ValueError("labeled_mask length must match the number of rows")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labeled_mask", mask)
        if self.truth is not None:
            t = np.asarray(self.truth, dtype=float)
            if t.shape != (X.shape[0],) or not np.all(np.isin(t, (-1.0, 1.0))):
                raise ValueError("truth must be a +/-1 vector with one entry per row")
            object.__setattr__(self, "truth", t)
        if self.given is None:
            if self.truth is None:
                raise ValueError("either truth or given labels are required")
            g = np.where(mask, self.truth, 0.0)
        else:
            g = np.asarray(self.given, dtype=float)
        if np.any(g[mask] == 0) or np.any(g[~mask] != 0):
            raise ValueError("given labels must be nonzero exactly on the labeled mask")
        object.__setattr__(self, "given", g)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def labeled_index(self) -> np.ndarray:
        return np.flatnonzero(self.labeled_mask)

    @property
    def unlabeled_index(self) -> np.ndarray:
        return np.flatnonzero(~self.labeled_mask)

    def order(self) -> np.ndarray:
        """Row permutation placing labeled points first (original order kept within each group)."""
        return np.concatenate([self.labeled_index, self.unlabeled_index])


# ---------------------------------------------------------------- ingestion


def _parse_label(tok: str, row: int) -> float:
    t = tok.strip()
    if t in MISSING:
        return 0.0
    try:
        v = float(t)
    except ValueError as exc:
        raise ValueError(f"row {row}: bad label {tok!r}") from exc
    if v not in (-1.0, 1.0):
        raise ValueError(f"row {row}: label must be +1, -1, '?' or empty, got {tok!r}")
    return v


def _is_number(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def load_csv(path, label_column=-1, name: Optional[str] = None) -> Dataset:
    """Read one sample per row; the label column holds +1, -1, '?' or nothing.

    A first row whose feature fields are not all numeric is taken as a header.
    ``label_column`` is a position (negative counts from the end) or a header name.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = None
    first = rows[0]
    if isinstance(label_column, str) and not _is_number(label_column) and label_column not in MISSING:
        header = first
        rows = rows[1:]
        if label_column not in [h.strip() for h in header]:
            raise ValueError(f"{path}: no column named {label_column!r}")
        label_column = [h.strip() for h in header].index(label_column)
    else:
        label_column = int(label_column)
        lc = label_column % len(first)
        if not all(_is_number(c) for k, c in enumerate(first) if k != lc):
            header = first
            rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0])
    lc = label_column % width
    feats, labels = [], []
    for k, r in enumerate(rows, start=1 + (header is not None)):
        if len(r) != width:
            raise ValueError(f"{path}: row {k} has {len(r)} fields, expected {width}")
        labels.append(_parse_label(r[lc], k))
        try:
            feats.append([float(c) for j, c in enumerate(r) if j != lc])
        except ValueError as exc:
            raise ValueError(f"{path}: row {k}: {exc}") from exc
    X = np.array(feats, dtype=float)
    if X.shape[1] == 0:
        raise ValueError(f"{path}: no feature columns")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{path}: non-finite feature values")
    given = np.array(labels)
    mask = given != 0
    truth = given if np.all(mask) else None
    return Dataset(X, truth, mask, name=name or path.stem, given=given)


def standardize(features) -> np.ndarray:
    """Zero mean, unit sample standard deviation per column; constant columns become 0."""
    X = np.asarray(features, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("standardization needs at least two rows")
    mu = X.mean(0)
    sd = X.std(0, ddof=1)
    out = np.zeros_like(X)
    ok = sd > 1e-12 * np.maximum(1.0, np.abs(mu))
    out[:, ok] = (X[:, ok] - mu[ok]) / sd[ok]
    return out


def mask_labels(d: Dataset, p: float, seed: int) -> Dataset:
    """Reveal ``round(p * class_size)`` labels per class, chosen uniformly under ``seed``."""
    if d.truth is None:
        raise ValueError("masking needs the full ground truth")
    if not 0 < p < 1:
        raise ValueError("labeled fraction must lie in (0, 1)")
    if p * d.n < 2:
        raise ValueError("too few points for the requested labeled fraction")
    rng = np.random.default_rng(seed)
    mask = np.zeros(d.n, dtype=bool)
    for c in (-1.0, 1.0):
        idx = np.flatnonzero(d.truth == c)
        k = int(round(p * idx.size))
        if k == 0:
            raise ValueError(f"class {c:+.0f} would receive no labeled points")
        mask[rng.choice(idx, size=k, replace=False)] = True
    return Dataset(d.features, d.truth, mask, seed=seed, name=d.name)


# ---------------------------------------------------------------- generators


def gaussian_blobs(n: int, seed: int = 0, d: int = 2, separation: float = 2.5, balance: float = 0.5) -> Dataset:
    """Two isotropic unit-variance Gaussians whose means are ``separation`` apart."""
    rng = np.random.default_rng(seed)
    n_pos = int(round(balance * n))
    y = np.r_[np.ones(n_pos), -np.ones(n - n_pos)]
    centers = np.zeros((2, d))
    centers[0, 0] = separation / 2.0
    centers[1, 0] = -separation / 2.0
    X = rng.normal(size=(n, d)) + np.where(y[:, None] > 0, centers[0], centers[1])
    perm = rng.permutation(n)
    return Dataset(X[perm], y[perm], np.ones(n, dtype=bool), seed=seed, name=f"blobs{n}")


def two_moons(n: int, seed: int = 0, noise: float = 0.1) -> Dataset:
    """Two interleaved half circles."""
    rng = np.random.default_rng(seed)
    n_out = n // 2
    n_in = n - n_out
    t_out = np.linspace(0, np.pi, n_out)
    t_in = np.linspace(0, np.pi, n_in)
    X = np.vstack([
        np.c_[np.cos(t_out), np.sin(t_out)],
        np.c_[1.0 - np.cos(t_in), 0.5 - np.sin(t_in)],
    ])
    X += noise * rng.normal(size=X.shape)
    y = np.r_[np.ones(n_out), -np.ones(n_in)]
    perm = rng.permutation(n)
    return Dataset(X[perm], y[perm], np.ones(n, dtype=bool), seed=seed, name=f"2moons{n}")


def horizontal_clusters(seed: int = 0, sizes=(20, 19, 11), heights=(2.0, 0.0, -4.0),
                        spread: float = 0.15, width: float = 4.0) -> Dataset:
    """Three horizontal bands; the top band is +1, the two lower bands are -1.

    Two labels are revealed at the ends of the top band and three along the
    bottom band, so the labeled class mean equals the unlabeled one.  The
    middle band sits closer to the top band than to the bottom one, which is
    what lures an unconstrained margin into the wider gap below it.
    """
    rng = np.random.default_rng(seed)
    X, t = [], []
    for m, h, lab in zip(sizes, heights, (1.0, -1.0, -1.0)):
        X.append(np.c_[np.linspace(-width, width, m), h + spread * rng.uniform(-1, 1, m)])
        t.append(np.full(m, lab))
    X = np.vstack(X)
    truth = np.concatenate(t)
    top, mid, bottom = sizes
    mask = np.zeros(truth.size, dtype=bool)
    mask[[0, top - 1, top + mid, top + mid + bottom // 2, top + mid + bottom - 1]] = True
    return Dataset(X, truth, mask, seed=seed, name="clusters3")


GENERATORS = {"blobs": gaussian_blobs, "two_moons": two_moons, "2moons": two_moons,
              "clusters3": lambda n=None, seed=0: horizontal_clusters(seed)}


# ---------------------------------------------------------------- models


def kernel_spec(kind: str, d: int, gamma: Optional[float] = None) -> KernelSpec:
    if kind == "rbf":
        return KernelSpec("rbf", gamma if gamma is not None else default_gamma(d))
    return KernelSpec(kind)


def accuracy(pred, truth, mask) -> Optional[float]:
    """Percent of correctly labeled points among the unlabeled ones (``mask`` marks labeled points)."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    unl = ~np.asarray(mask, dtype=bool)
    if not np.any(unl):
        return None
    return 100.0 * float(np.mean(pred[unl] == truth[unl]))


def baseline_svm(d: Dataset, kernel: KernelSpec, C_l: float) -> tuple[np.ndarray, Optional[float]]:
    """Supervised L2-SVM on the labeled points; predictions for the unlabeled ones."""
    lab, unl = d.labeled_index, d.unlabeled_index
    y = d.given[lab]
    if len(set(y.tolist())) < 2:
        raise ValueError("baseline SVM needs both classes among the labeled points")
    Xl, Xu = d.features[lab], d.features[unl]
    alpha = svm.fit_dual(cross_kernel(Xl, Xl, kernel), y, C_l)
    pred = svm.predict(cross_kernel(Xl, Xu, kernel), alpha, y)
    acc = None
    if d.truth is not None and unl.size:
        acc = 100.0 * float(np.mean(pred == d.truth[unl]))
    return pred, acc


def stratified_folds(y, k: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per point; each class is shuffled and dealt round-robin."""
    y = np.asarray(y)
    fold = np.empty(y.size, dtype=int)
    offset = 0
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        fold[idx] = (np.arange(idx.size) + offset) % k
        offset += idx.size
    return fold


def cross_validate(d: Dataset, grid: Sequence[float] = CL_GRID, k: int = 10,
                   kernels: Sequence[str] = ("linear", "rbf"), seed: Optional[int] = None,
                   gamma: Optional[float] = None) -> tuple[str, float]:
    """Pick (kernel, C_l) by stratified k-fold accuracy over the labeled points only."""
    lab = d.labeled_index
    y = d.given[lab]
    if lab.size < k:
        raise ValueError(f"need at least k={k} labeled points, have {lab.size}")
    rng = np.random.default_rng(d.seed if seed is None else seed)
    for _ in range(10):
        fold = stratified_folds(y, k, rng)
        if all(len(set(y[fold != f].tolist())) == 2 for f in range(k)):
            break
    else:
        raise ValueError("could not draw folds whose training parts contain both classes")
    X = d.features[lab]
    dim = X.shape[1]
    grams = {kind: cross_kernel(X, X, kernel_spec(kind, dim, gamma)) for kind in kernels}
    best, best_acc = None, -1.0
    for C in sorted(grid):
        for kind in kernels:
            G = grams[kind]
            hits = 0
            for f in range(k):
                tr, va = np.flatnonzero(fold != f), np.flatnonzero(fold == f)
                alpha = svm.fit_dual(G[np.ix_(tr, tr)], y[tr], C)
                hits += int(np.sum(svm.predict(G[np.ix_(tr, va)], alpha, y[tr]) == y[va]))
            acc = hits / lab.size
            if acc > best_acc + 1e-12:
                best, best_acc = (kind, float(C)), acc
    return best


# ---------------------------------------------------------------- pipeline


@dataclass(frozen=True)
class RunConfig:
    kernel: str = "rbf"  # linear | rbf | cv
    gamma: Optional[float] = None  # None: 1/d
    cl: Optional[float] = 1.0  # None: cross-validate
    cu_factor: float = 0.2
    labeled_fraction: float = 0.1
    seed: int = 0
    gap_tol: float = 0.1
    time_limit_sec: float = math.inf
    balancing: bool = True
    max_cuts_factor: float = 5.0
    viol_tol: float = 1e-2
    inactive_tol: float = 1e-4
    stall_tol: float = 1e-3
    cv_folds: int = 10
    balancing_products: bool = False
    mask: bool = True  # False: keep the labels the dataset already carries

    def __post_init__(self):
        if self.kernel not in ("linear", "rbf", "cv"):
            raise ValueError(f"unknown kernel choice {self.kernel!r}")
        if not 0 < self.labeled_fraction < 1:
            raise ValueError("labeled fraction must lie in (0, 1)")
        for name in ("cu_factor", "max_cuts_factor", "viol_tol", "inactive_tol", "stall_tol", "time_limit_sec"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.gap_tol < 0:
            raise ValueError("gap_tol must be nonnegative")
        if self.cl is not None and not self.cl > 0:
            raise ValueError("cl must be positive")

    def cut_params(self) -> CutParams:
        return CutParams(self.max_cuts_factor, self.viol_tol, self.inactive_tol, self.stall_tol, self.gap_tol,
                         balancing_products=self.balancing_products)

    def solve_params(self) -> SolveParams:
        return SolveParams(gap_tol=self.gap_tol, time_limit_sec=self.time_limit_sec, cuts=self.cut_params())


@dataclass
class Prepared:
    dataset: Dataset
    kernel: KernelSpec
    cl: float
    cu: float
    problem: object
    order: np.ndarray


def prepare(d: Dataset, cfg: RunConfig) -> Prepared:
    """standardize -> mask -> model selection -> assemble."""
    d = replace(d, features=standardize(d.features))
    # Only fully labeled data is masked; partial labels are taken as given.
    if cfg.mask and d.truth is not None and d.labeled_mask.all():
        d = mask_labels(d, cfg.labeled_fraction, cfg.seed)
    lab = d.labeled_index
    if lab.size == 0:
        raise ValueError("no labeled points")
    kind, cl = cfg.kernel, cfg.cl
    if kind == "cv" or cl is None:
        kinds = ("linear", "rbf") if kind == "cv" else (kind,)
        grid = CL_GRID if cl is None else (cl,)
        kind, cl = cross_validate(d, grid, min(cfg.cv_folds, lab.size), kinds, seed=cfg.seed, gamma=cfg.gamma)
    spec = kernel_spec(kind, d.features.shape[1], cfg.gamma)
    order = d.order()
    l = lab.size
    n = d.n
    cu = cfg.cu_factor * (l / (n - l)) * cl if n > l else cfg.cu_factor * cl
    G = gram_matrix(d.features[order], spec)
    p = assemble_problem(G, d.given[order][:l], cl, cu, balancing=cfg.balancing)
    return Prepared(d, spec, float(cl), float(cu), p, order)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def run_benchmark(d: Dataset, cfg: RunConfig) -> dict:
    """Full pipeline; returns the JSON-ready report.  Failures are reported with their stage."""
    t0 = time.perf_counter()
    report = {"instance": d.name, "n": d.n, "seed": cfg.seed}
    stage = "prepare"
    try:
        prep = prepare(d, cfg)
        p = prep.problem
        report.update(l=p.l, kernel=prep.kernel.kind, cl=prep.cl, cu=prep.cu)
        stage = "baseline"
        base_acc = None
        if prep.dataset.truth is not None and p.n > p.l and len(set(p.labels.tolist())) == 2:
            _, base_acc = baseline_svm(prep.dataset, prep.kernel, prep.cl)
        stage = "solve"
        res = solve(p, cfg.solve_params())
        stage = "report"
        labeling = np.zeros(d.n)
        if res.incumbent is not None:
            labeling[prep.order] = res.incumbent.labeling.values
        acc = None
        if prep.dataset.truth is not None and res.incumbent is not None:
            acc = accuracy(labeling, prep.dataset.truth, prep.dataset.labeled_mask)
        ub = res.incumbent.objective if res.incumbent is not None else math.inf
        report.update(
            lb=_jsonable(float(res.lower_bound)),
            ub=_jsonable(float(ub)),
            gap_percent=_jsonable(float(res.gap_percent)),
            nodes=res.nodes_processed,
            wall_time_sec=time.perf_counter() - t0,
            status=res.status,
            labeling=[int(v) for v in labeling],
            accuracy_percent=acc,
            baseline_accuracy_percent=base_acc,
            root_gap_percent=_jsonable(float(res.root_gap_percent)),
        )
        if acc is None:
            report.pop("accuracy_percent")
    except Exception as exc:  # reported, not raised: sweeps must keep going
        log.exception("run failed at stage %s", stage)
        report.update(status="error", stage=stage, error=str(exc), wall_time_sec=time.perf_counter() - t0)
    return report


def run_bounds(d: Dataset, cfg: RunConfig) -> dict:
    """QP / QP-L / basic SDP / SDP-RLT root bounds against the warm-start UB, with timings.

    Comparison bounds are computed without the balancing row, like the literature relaxations.
    """
    cfg = replace(cfg, balancing=False)
    prep = prepare(d, cfg)
    p = prep.problem
    out = {"instance": d.name, "n": p.n, "l": p.l, "kernel": prep.kernel.kind, "cl": prep.cl, "cu": prep.cu}
    inc = initial_incumbent(p)
    UB = inc.objective
    out["ub"] = UB
    free = p.label_bounds()

    def timed(fn):
        t = time.perf_counter()
        v = fn()
        return v, time.perf_counter() - t

    for name, fn in (("qp", lambda: qp_bound(p, free)), ("qpl", lambda: qp_lagrangian_bound(p, free))):
        v, t = timed(fn)
        out[name] = {"lb": v, "gap_percent": percentage_gap(UB, v), "time_sec": t}
    sol, t = timed(lambda: solve_sdp(build_basic_sdp(p, free)))
    v = sol.objective if sol.status == OPTIMAL else -math.inf
    out["sdp"] = {"lb": v, "gap_percent": percentage_gap(UB, v), "time_sec": t}

    state = {"inc": inc}

    def heur(s, boxes):
        cand = heuristic_from_point(p, s.x)
        if cand is not None and cand.objective < state["inc"].objective:
            state["inc"] = cand
        return state["inc"].objective

    def tight(boxes, s, ub, lb):
        return marginal_box_update(boxes, s, state["inc"].objective, min(lb, s.dual_objective)).boxes

    rep, tbox = timed(lambda: obbt(p, free, UB))
    res, t = timed(lambda: cutting_plane_bound(p, rep.boxes, UB, cfg.cut_params(), heur, tight))
    UB2 = state["inc"].objective
    out["sdp_rlt"] = {"lb": res.lower_bound, "gap_percent": percentage_gap(UB2, res.lower_bound),
                      "time_sec": t, "time_box_sec": tbox, "iterations": res.iterations, "ub": UB2}
    return {k: _jsonable(v) for k, v in out.items()}
