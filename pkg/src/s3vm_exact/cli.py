"""Command line entry point: solve, bound comparison and parameter sweeps."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .harness import GENERATORS, Dataset, RunConfig, load_csv, run_benchmark, run_bounds

SUMMARY_FIELDS = ("instance", "n", "l", "seed", "kernel", "cl", "cu", "lb", "ub", "gap_percent",
                  "nodes", "wall_time_sec", "status", "accuracy_percent", "baseline_accuracy_percent")


def load_data(spec: str, label_col, seed: int) -> Dataset:
    """A CSV path, or ``name[:n]`` for a built-in generator (``blobs:100``, ``two_moons:300``, ``clusters3``)."""
    name, _, size = spec.partition(":")
    if name in GENERATORS and not Path(spec).exists():
        gen = GENERATORS[name]
        return gen(int(size), seed=seed) if size else gen(seed=seed)
    return load_csv(spec, label_col)


def _label_col(v: str):
    try:
        return int(v)
    except ValueError:
        return v


def _positive_or(word):
    def parse(v: str):
        if v == word:
            return None
        x = float(v)
        if not x > 0:
            raise argparse.ArgumentTypeError(f"expected a positive number or {word!r}")
        return x
    return parse


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="s3vm-exact", description="Exact semi-supervised SVM by SDP branch-and-cut.")
    ap.add_argument("--data", required=True, help="CSV path or generator spec such as two_moons:300")
    ap.add_argument("--label-col", type=_label_col, default=-1, help="label column index or header name")
    ap.add_argument("--labeled-fraction", type=float, nargs="+", default=[0.1])
    ap.add_argument("--seed", type=int, nargs="+", default=[0])
    ap.add_argument("--kernel", choices=("linear", "rbf", "cv"), default="rbf")
    ap.add_argument("--gamma", type=_positive_or("auto"), default=None, help="RBF width or 'auto' for 1/d")
    ap.add_argument("--cl", type=_positive_or("cv"), default=1.0, help="labeled penalty or 'cv'")
    ap.add_argument("--cu-factor", type=float, default=0.2)
    ap.add_argument("--balancing", choices=("on", "off"), default="on")
    ap.add_argument("--balancing-products", action="store_true",
                    help="add the products of the balancing row with each variable as cuts")
    ap.add_argument("--gap-tol", type=float, default=0.1, help="percent")
    ap.add_argument("--time-limit-sec", type=float, default=math.inf)
    ap.add_argument("--max-cuts-factor", type=float, default=5.0)
    ap.add_argument("--viol-tol", type=float, default=1e-2)
    ap.add_argument("--inactive-tol", type=float, default=1e-4)
    ap.add_argument("--stall-tol", type=float, default=1e-3)
    ap.add_argument("--cv-folds", type=int, default=10)
    ap.add_argument("--mode", choices=("solve", "bounds", "sweep"), default="solve")
    ap.add_argument("--output", help="JSON report path; sweeps also write a CSV summary next to it")
    ap.add_argument("--workers", type=int, default=1, help="parallel processes for sweeps")
    ap.add_argument("--deterministic", action="store_true", help="force a single worker")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def config_from_args(a, seed: int, fraction: float) -> RunConfig:
    return RunConfig(
        kernel=a.kernel, gamma=a.gamma, cl=a.cl, cu_factor=a.cu_factor, labeled_fraction=fraction,
        seed=seed, gap_tol=a.gap_tol, time_limit_sec=a.time_limit_sec, balancing=a.balancing == "on",
        max_cuts_factor=a.max_cuts_factor, viol_tol=a.viol_tol, inactive_tol=a.inactive_tol,
        stall_tol=a.stall_tol, cv_folds=a.cv_folds, balancing_products=a.balancing_products,
    )


def _dataset_config(a, seed: int, fraction: float):
    return load_data(a.data, a.label_col, seed), config_from_args(a, seed, fraction)


def _sweep_job(job):
    a, seed, fraction = job
    try:
        d, cfg = _dataset_config(a, seed, fraction)
    except Exception as exc:
        return {"instance": a.data, "seed": seed, "status": "error", "stage": "load", "error": str(exc)}
    rep = run_benchmark(d, cfg)
    rep["labeled_fraction"] = fraction
    return rep


def run_sweep(a) -> list:
    jobs = [(a, s, f) for f in a.labeled_fraction for s in a.seed]
    workers = 1 if a.deterministic else max(1, a.workers)
    if workers == 1:
        return [_sweep_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_sweep_job, jobs))


def write_summary(path: Path, reports: list):
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS + ("labeled_fraction",), extrasaction="ignore")
        w.writeheader()
        for r in reports:
            w.writerow(r)


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if a.mode == "sweep":
        out = run_sweep(a)
    else:
        if len(a.seed) > 1 or len(a.labeled_fraction) > 1:
            print("several seeds or fractions need --mode sweep", file=sys.stderr)
            return 2
        try:
            d, cfg = _dataset_config(a, a.seed[0], a.labeled_fraction[0])
        except (OSError, ValueError) as exc:
            out = {"instance": a.data, "status": "error", "stage": "load", "error": str(exc)}
        else:
            out = run_benchmark(d, cfg) if a.mode == "solve" else run_bounds(d, cfg)
    text = json.dumps(out, indent=2)
    if a.output:
        path = Path(a.output)
        path.write_text(text + "\n")
        if a.mode == "sweep":
            write_summary(path.with_suffix(".csv"), out)
    else:
        print(text)
    failed = out.get("status") == "error" if isinstance(out, dict) else any(r.get("status") == "error" for r in out)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
