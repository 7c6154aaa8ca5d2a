"""With the ideal kernel K = t t' the relaxation is tight.

When the kernel already knows the ground truth t, the lifted relaxation's
optimum is rank one.  Its sign pattern is t, and the root node closes the
gap without branching.
"""
import numpy as np

from s3vm_exact import CutParams, SolveParams, assemble_problem, cutting_plane_bound, solve
from s3vm_exact.kernels import ideal_gram

rng = np.random.default_rng(0)
n, l = 40, 4
t = np.r_[1.0, -1.0, rng.choice([-1.0, 1.0], size=n - 2)]
p = assemble_problem(ideal_gram(t), t[:l], 1.0, 0.2 * l / (n - l), balancing=False)

rep = solve(p, SolveParams(gap_tol=0.0))
root = cutting_plane_bound(p, p.label_bounds(), rep.incumbent.objective, CutParams(gap_tol=0.0))
print(f"optimum {rep.incumbent.objective:.8f}, root relaxation {root.lower_bound:.8f}")
print(f"nodes {rep.nodes_processed}; labeling equals ground truth:",
      np.array_equal(rep.incumbent.labeling.values, t))
eig = np.linalg.eigvalsh(root.solution.block)
print(f"largest two eigenvalues of the relaxed block: {eig[-1]:.4f}, {eig[-2]:.2e}")
