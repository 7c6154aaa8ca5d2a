import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from s3vm_exact.heuristic import (
    TwoOptSubproblem,
    heuristic_from_point,
    label_qp,
    repair_labeling,
    round_sdp,
    solve_label_qp,
    two_opt_search,
    two_opt_step,
)
from s3vm_exact.problem import Labeling, assemble_problem, check_feasible, objective

from oracles import brute_force, enumerate_labelings, grid_minimum, random_instance, slsqp_label_qp


def test_round_sdp_examples():
    np.testing.assert_array_equal(round_sdp([2.0, -0.3], [1.0]).values, [1, -1])
    np.testing.assert_array_equal(round_sdp([1.0, 0.0], [1.0]).values, [1, 1])
    np.testing.assert_array_equal(round_sdp([0.1, 0.2, 3.0], [-1.0]).values, [-1, 1, 1])


def test_label_qp_examples():
    p = assemble_problem(np.zeros((4, 4)), [1.0, -1.0], 0.5, 0.5)
    inc = label_qp(p, Labeling(np.array([1, -1, 1, -1.0]), 2))
    np.testing.assert_allclose(inc.point, [1, -1, 1, -1], atol=1e-7)
    assert inc.objective == pytest.approx(2.0, abs=1e-7)
    assert label_qp(p, Labeling(np.array([1, -1, 1, 1.0]), 2)) is None
    off = assemble_problem(np.zeros((4, 4)), [1.0, -1.0], 0.5, 0.5, balancing=False)
    assert label_qp(off, Labeling(np.array([1, -1, 1, 1.0]), 2)) is not None


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.booleans())
def test_label_qp_matches_slsqp_and_is_complementary(seed, balancing):
    p, _ = random_instance(seed, 7, 2, balancing=balancing)
    for lab in list(enumerate_labelings(p))[::3]:
        inc, sol = solve_label_qp(p, lab)
        ref = slsqp_label_qp(p, lab.values)
        if inc is None:
            assert ref is None
            continue
        assert inc.objective == pytest.approx(ref[0], rel=1e-6)
        assert check_feasible(p, inc.point)
        y = lab.values
        duals = np.where(y > 0, sol.lower_duals, sol.upper_duals)
        loose = inc.point * y > 1 + 1e-6
        assert np.all(duals[loose] <= 1e-6)


def test_two_opt_symmetric_case():
    sub = TwoOptSubproblem(a=2.0, b=0.0, c=0.0, k=0.0)
    t = sub.minimize()
    assert abs(t) == 1.0
    assert sub.value(t) == pytest.approx(grid_minimum(sub)[0], abs=1e-9)


def test_two_opt_interior_stationary_point():
    sub = TwoOptSubproblem(a=1.0, b=-10.0, c=0.0, k=0.0)
    assert sub.minimize() == pytest.approx(5.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 10), st.floats(-20, 20), st.floats(-5, 5))
def test_two_opt_matches_grid(a, b, k):
    sub = TwoOptSubproblem(a, b, 0.0, k)
    t = sub.minimize()
    g, _ = grid_minimum(sub, -200, 200, 1e-2)
    assert sub.feasible(t)
    assert sub.value(t) <= g + 1e-9 * max(1, abs(g))


def test_two_opt_step_idempotent_and_monotone():
    p, _ = random_instance(3, 8, 2)
    x = label_qp(p, round_sdp(np.resize([1.0, -1.0], 8), p.labels)).point.copy()
    C = np.asarray(p.cost)
    for i in range(2, 8):
        for j in range(i + 1, 8):
            f0 = objective(p, x)
            xi, xj = two_opt_step(C, x, i, j)
            x[i], x[j] = xi, xj
            assert objective(p, x) <= f0 + 1e-12
            assert two_opt_step(C, x, i, j) == (x[i], x[j])


def test_repair_labeling_examples():
    v = np.ones(10)
    xbar = np.full(10, 0.9)
    xbar[7] = 0.01
    out = repair_labeling(Labeling(v, 2), xbar, 0.0)
    assert out.values[7] == -1 and np.sum(out.values < 0) == 1
    mixed = Labeling(np.array([1, 1, -1, 1.0]), 2)
    np.testing.assert_array_equal(repair_labeling(mixed, np.zeros(4), 0.0).values, mixed.values)
    single = Labeling(np.array([1.0, 1.0]), 1)
    np.testing.assert_array_equal(repair_labeling(single, np.zeros(2), 1.0).values, [1, 1])


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000), st.booleans())
def test_two_opt_search_properties(seed, balancing):
    p, _ = random_instance(seed, 9, 3, balancing=balancing)
    best, _ = brute_force(p)
    at_opt = two_opt_search(p, best)
    assert at_opt.objective == pytest.approx(best.objective, rel=1e-9)
    rng = np.random.default_rng(seed)
    for _ in range(3):
        start = label_qp(p, round_sdp(rng.normal(size=p.n), p.labels))
        if start is None:
            continue
        out = two_opt_search(p, start)
        assert check_feasible(p, out.point)
        assert out.objective <= start.objective + 1e-12
        assert out.objective >= best.objective - 1e-7 * best.objective
    h = heuristic_from_point(p, rng.normal(size=p.n))
    assert h is None or h.objective >= best.objective - 1e-7 * best.objective
