import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from s3vm_exact.boxes import BoxBounds
from s3vm_exact.kernels import ideal_gram
from s3vm_exact.problem import assemble_problem, objective
from s3vm_exact.relaxations import (
    CutParams,
    RltCut,
    balancing_product_cuts,
    build_basic_sdp,
    cutting_plane_bound,
    lagrangian_multipliers,
    purge_inactive,
    qp_bound,
    qp_lagrangian_bound,
    separate_rlt,
)
from s3vm_exact.solvers.sdp import OPTIMAL, SdpSolution, solve_sdp
from s3vm_exact.tightening import obbt

from oracles import brute_force, random_instance


def fake_solution(x, X):
    n = len(x)
    Y = np.ones((n + 1, n + 1))
    Y[:n, :n] = X
    Y[:n, n] = Y[n, :n] = x
    return SdpSolution(OPTIMAL, block=Y)


def test_qp_bound_examples():
    p = assemble_problem(np.zeros((3, 3)), [1.0], 0.5, 0.5, balancing=False)
    assert qp_bound(p, BoxBounds.unbounded(3)) == pytest.approx(0.0, abs=1e-8)
    p1 = assemble_problem(np.zeros((1, 1)), [1.0], 0.5, 0.5)
    assert qp_bound(p1, p1.label_bounds()) == pytest.approx(0.5, abs=1e-8)
    assert qp_bound(p1, BoxBounds([2.0], [1.0])) == np.inf


def test_lagrangian_examples():
    p = assemble_problem(np.eye(3), [1.0, -1.0, 1.0], 1.0, 1.0)
    assert qp_lagrangian_bound(p, p.label_bounds()) == pytest.approx(qp_bound(p, p.label_bounds()), rel=1e-7)
    # gram = 0, D = I/2 -> inv(K) = 2I and the unlabeled multiplier is 1.
    q = assemble_problem(np.zeros((2, 2)), [1.0], 1.0, 1.0, balancing=False)
    lam = lagrangian_multipliers(q)
    assert lam[0] == 0.0
    assert lam[1] == pytest.approx(1.0, abs=1e-6)


def test_basic_sdp_rows():
    p = assemble_problem(np.zeros((3, 3)), [1.0], 0.5, 0.5, balancing=False)
    m = build_basic_sdp(p, BoxBounds.unbounded(3))
    assert sorted(r.tag for r in m.rows) == ["corner"] + ["diag-lower"] * 3
    q = assemble_problem(np.zeros((2, 2)), [1.0], 0.5, 0.5, balancing=False)
    m = build_basic_sdp(q, BoxBounds([1.0, -2.0], [3.0, -1.0]))
    caps = {r.key[1]: r.rhs for r in m.rows if r.tag == "diag-upper"}
    assert caps == {0: 9.0, 1: 4.0}


def test_basic_sdp_one_point():
    p = assemble_problem(np.zeros((1, 1)), [1.0], 0.5, 0.5)
    s = solve_sdp(build_basic_sdp(p, p.label_bounds()))
    assert s.objective == pytest.approx(0.5, abs=1e-6)
    assert s.x[0] == pytest.approx(1.0, abs=1e-5)
    assert s.X[0, 0] == pytest.approx(1.0, abs=1e-5)


def test_rlt_lower_lower_example():
    boxes = BoxBounds([1.0, 1.0], [2.0, 2.0])
    sol = fake_solution(np.array([1.0, 1.0]), np.array([[1.0, 0.0], [0.0, 1.0]]))
    cuts = separate_rlt(sol, boxes, 10, 1e-2)
    ll = [c for c in cuts if c.variant == "lower-lower"]
    assert len(ll) == 1
    assert ll[0].violation(sol.x, sol.X) == pytest.approx(1.0)
    assert cuts[0].violation(sol.x, sol.X) == pytest.approx(1.0)


def test_rlt_rank_one_interior_has_no_cut():
    x = np.array([1.5, -2.0, 3.0])
    boxes = BoxBounds([1.0, -3.0, 1.0], [2.0, -1.0, 4.0])
    assert separate_rlt(fake_solution(x, np.outer(x, x)), boxes, 100, 1e-9) == []


def test_rlt_top_k():
    # X_01 chosen so that only lower-lower (0.5) and lower-upper (0.2) style gaps exist.
    boxes = BoxBounds([1.0, 1.0, 1.0], [2.0, 2.0, 2.0])
    x = np.array([1.0, 1.0, 1.0])
    X = np.ones((3, 3))
    X[0, 1] = X[1, 0] = 0.5
    X[0, 2] = X[2, 0] = 0.8
    cuts = separate_rlt(fake_solution(x, X), boxes, 1, 1e-2)
    assert len(cuts) == 1 and (cuts[0].i, cuts[0].j) == (0, 1)
    assert cuts[0].violation(x, X) == pytest.approx(0.5)


def test_purge_inactive():
    x = np.array([1.0, 1.0])
    c = RltCut.from_bounds(0, 1, "lower-lower", 1.0, 2.0, 1.0, 2.0)  # X_01 >= x0 + x1 - 1
    tight = fake_solution(x, np.array([[1.0, 1.0], [1.0, 1.0]]))
    loose = fake_solution(x, np.array([[1.0, 1.1], [1.1, 1.0]]))
    assert purge_inactive([c], tight) == [c]
    assert purge_inactive([c], loose) == []
    assert purge_inactive([], tight) == []


def test_product_cuts_examples():
    p = assemble_problem(np.zeros((4, 4)), [1.0, -1.0], 0.5, 0.5)
    rows = balancing_product_cuts(p)
    assert len(rows) == 4
    j = 2
    r = rows[j]
    assert r.sense == "==" and r.rhs == 0.0
    assert sorted(zip(r.rows.tolist(), r.cols.tolist())) == [(2, 2), (2, 3)]
    np.testing.assert_allclose(r.coefs, 0.5)
    x = np.array([1.0, -1.0, 2.0, -2.0])
    Y = np.outer(np.r_[x, 1.0], np.r_[x, 1.0])
    assert all(abs(row.value(Y) - row.rhs) < 1e-12 for row in rows)
    off = assemble_problem(np.zeros((4, 4)), [1.0, -1.0], 0.5, 0.5, balancing=False)
    assert balancing_product_cuts(off) == []


def test_cutting_plane_ideal_kernel_is_tight():
    truth = np.array([1, -1, 1, 1, -1, -1, 1, -1.0])
    l = 3
    p = assemble_problem(ideal_gram(truth), truth[:l], 1.0, 0.2 * l / (8 - l), balancing=False)
    target = objective(p, truth)
    res = cutting_plane_bound(p, p.label_bounds(), target, CutParams(gap_tol=0.0))
    assert res.iterations == 1
    assert res.lower_bound == pytest.approx(target, rel=1e-6)
    np.testing.assert_allclose(np.sign(res.solution.x), truth, atol=0)


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 10_000), st.booleans())
def test_bound_chain_and_cut_validity(seed, balancing):
    p, _ = random_instance(seed, 9, 3, balancing=balancing)
    best, points = brute_force(p)
    UB = best.objective
    boxes = obbt(p, p.label_bounds(), UB).boxes
    basic = solve_sdp(build_basic_sdp(p, boxes)).lower_bound
    res = cutting_plane_bound(p, boxes, UB, CutParams(gap_tol=0.0, balancing_products=balancing))
    assert res.lower_bound >= basic - 1e-6 * max(1.0, abs(basic))
    assert basic >= qp_bound(p, boxes) - 1e-6
    assert res.lower_bound <= UB + 1e-6
    h = np.array(res.history)
    assert np.all(np.diff(h) >= -1e-7 * max(1.0, abs(UB)))
    for x in points:
        Y = np.outer(np.r_[x, 1.0], np.r_[x, 1.0])
        for r in balancing_product_cuts(p):
            assert abs(r.value(Y) - r.rhs) <= 1e-9
        if boxes.contains(x):
            for c in res.active_cuts:
                assert c.violation(x, np.outer(x, x)) <= 1e-9


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 10_000))
def test_rlt_cuts_valid_on_wide_boxes(seed):
    p, _ = random_instance(seed, 8, 2)
    _, points = brute_force(p)
    M = 1.0 + max(np.abs(x).max() for x in points)
    boxes = p.label_bounds().intersect(BoxBounds(np.full(p.n, -M), np.full(p.n, M)))
    sol = solve_sdp(build_basic_sdp(p, boxes))
    for c in separate_rlt(sol, boxes, 1000, 1e-6):
        for x in points:
            assert c.violation(x, np.outer(x, x)) <= 1e-9
