"""Solve a small S3VM exactly and confirm the answer by enumerating every labeling.

With 10 unlabeled points there are only 1024 ways to label them.  For each
labeling the problem is a convex QP, so the best of those QPs is the global
optimum.  Branch-and-cut should land on the same value while looking at far
fewer labelings.
"""
import itertools
import time

import numpy as np

from s3vm_exact import SolveParams, assemble_problem, solve
from s3vm_exact.heuristic import label_qp
from s3vm_exact.kernels import KernelSpec, default_gamma, gram_matrix
from s3vm_exact.problem import Labeling

rng = np.random.default_rng(3)
n, l = 14, 4
truth = np.r_[1.0, -1.0, rng.choice([-1.0, 1.0], size=n - 2)]
X = rng.normal(size=(n, 2)) + 1.2 * truth[:, None] * np.array([1.0, 0.0])
G = gram_matrix(X, KernelSpec("rbf", default_gamma(2)))
p = assemble_problem(G, truth[:l], C_l=1.0, C_u=0.2 * l / (n - l) * 1.0)

t = time.perf_counter()
best = None
for tail in itertools.product((-1.0, 1.0), repeat=n - l):
    inc = label_qp(p, Labeling(np.r_[p.labels, tail], l))
    if inc is not None and (best is None or inc.objective < best.objective):
        best = inc
print(f"enumeration : {best.objective:.10f}  ({2 ** (n - l)} QPs, {time.perf_counter() - t:.1f}s)")

rep = solve(p, SolveParams(gap_tol=0.0))
print(f"branch&cut  : {rep.incumbent.objective:.10f}  ({rep.nodes_processed} nodes, {rep.wall_time:.1f}s)")
print(f"certified lower bound {rep.lower_bound:.10f}, status {rep.status}")
print("same labeling:", np.array_equal(best.labeling.values, rep.incumbent.labeling.values))
