"""Compare the root lower bounds on a two-moons instance.

Four bounds, from weakest to strongest in typical runs:
  qp      - drop x_i^2 >= 1 and minimize over the box
  qpl     - same QP with a Lagrangian penalty that keeps part of x_i^2 >= 1
  sdp     - the lifted semidefinite relaxation
  sdp_rlt - the lifted relaxation after bound tightening plus RLT cutting planes
Gaps are measured against the warm-start upper bound, except sdp_rlt, whose
loop also runs the primal heuristic and is measured against the improved one.
"""
from s3vm_exact.harness import RunConfig, run_bounds, two_moons

res = run_bounds(two_moons(100, seed=0), RunConfig(cl=1.0, labeled_fraction=0.1))
print(f"two moons n={res['n']}, l={res['l']}, UB={res['ub']:.5f}")
for name in ("qp", "qpl", "sdp", "sdp_rlt"):
    b = res[name]
    print(f"  {name:8s} LB={b['lb']:.5f}  gap={b['gap_percent']:7.3f}%  {b['time_sec']:.2f}s")
print(f"  cutting-plane rounds: {res['sdp_rlt']['iterations']}, improved UB {res['sdp_rlt']['ub']:.5f}")
