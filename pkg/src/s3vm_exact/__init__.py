"""Exact semi-supervised SVMs by SDP-based branch-and-cut."""
from .boxes import BoxBounds
from .branch_and_cut import SolveParams, SolveReport, solve
from .harness import Dataset, RunConfig, load_csv, run_benchmark, run_bounds
from .kernels import KernelSpec, gram_matrix
from .problem import Incumbent, Labeling, ProblemData, assemble_problem, check_feasible, objective, percentage_gap
from .relaxations import CutParams, cutting_plane_bound

__all__ = [
    "BoxBounds", "CutParams", "Dataset", "Incumbent", "KernelSpec", "Labeling", "ProblemData", "RunConfig",
    "SolveParams", "SolveReport", "assemble_problem", "check_feasible", "cutting_plane_bound", "gram_matrix",
    "load_csv", "objective", "percentage_gap", "run_benchmark", "run_bounds", "solve",
]
