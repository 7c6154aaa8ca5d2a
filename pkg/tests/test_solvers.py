import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from s3vm_exact.boxes import BoxBounds
from s3vm_exact.problem import assemble_problem
from s3vm_exact.relaxations import build_basic_sdp
from s3vm_exact.solvers import qp, sdp
from s3vm_exact.solvers.sdp import SdpModel, SdpRow, solve_sdp

from oracles import enumerate_labelings, random_instance
from s3vm_exact.heuristic import label_qp


def row(r, c, v, sense, rhs, tag="other", key=None):
    return SdpRow(np.array(r), np.array(c), np.array(v, dtype=float), sense, rhs, tag, key)


def test_sdp_single_diagonal_lower_bound():
    C = np.zeros((2, 2))
    C[0, 0] = 1.0
    m = SdpModel(2, C, [row([0], [0], [1], ">=", 1.0, key="a"), row([1], [1], [1], "==", 1.0, "corner")])
    s = solve_sdp(m)
    assert s.status == sdp.OPTIMAL
    assert s.objective == pytest.approx(1.0, abs=1e-6)
    assert s.dual("a") == pytest.approx(1.0, abs=1e-5)


def test_sdp_two_point_lifted_relaxation():
    p = assemble_problem(np.zeros((2, 2)), [1.0], 0.5, 0.5, balancing=False)
    s = solve_sdp(build_basic_sdp(p, BoxBounds.unbounded(2).intersect(p.label_bounds())))
    assert s.status == sdp.OPTIMAL
    assert s.objective == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_allclose(np.diag(s.X), [1.0, 1.0], atol=1e-5)
    assert s.x[0] == pytest.approx(1.0, abs=1e-5)


def test_sdp_detects_empty_box():
    C = np.eye(2)
    m = SdpModel(2, C, [row([0], [1], [1], ">=", 2.0), row([0], [1], [1], "<=", 1.0),
                        row([1], [1], [1], "==", 1.0, "corner")])
    assert solve_sdp(m).status == sdp.INFEASIBLE


def test_sdp_rejects_out_of_range_rows():
    with pytest.raises(ValueError):
        SdpModel(2, np.eye(2), [row([2], [0], [1], ">=", 0.0)])
    with pytest.raises(ValueError):
        row([0], [0], [1], ">", 0.0)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 1000))
def test_sdp_weak_duality_and_determinism(seed):
    p, _ = random_instance(seed, 7, 2)
    m = build_basic_sdp(p, p.label_bounds())
    s = solve_sdp(m)
    assert s.status == sdp.OPTIMAL
    # Every feasible point of the QCQP lifts to a feasible rank-one block.
    for lab in enumerate_labelings(p):
        inc = label_qp(p, lab)
        if inc is not None:
            assert s.lower_bound <= inc.objective + 1e-7 * max(1.0, inc.objective)
    again = solve_sdp(m)
    assert again.objective == pytest.approx(s.objective, rel=1e-7)


def test_qp_examples():
    s = qp.solve_qp(qp.QpModel(P=np.eye(1), lower=np.ones(1)))
    assert s.status == qp.OPTIMAL
    assert s.point[0] == pytest.approx(1.0, abs=1e-7)
    assert s.objective == pytest.approx(1.0, abs=1e-7)

    s = qp.solve_qp(qp.QpModel(P=np.zeros((2, 2)), q=np.array([1.0, 0.0]), quad=np.eye(2), quad_rhs=4.0))
    assert s.point[0] == pytest.approx(-2.0, abs=1e-6)


def test_qp_all_labels_fixed_three_points():
    p = assemble_problem(np.zeros((3, 3)), [1.0, 1.0, 1.0], 0.5, 0.5)
    a = np.full(3, 1 / 3)
    s = qp.solve_qp(qp.QpModel(P=p.cost, A_eq=a[None, :], b_eq=np.array([1.0]), lower=np.ones(3)))
    np.testing.assert_allclose(s.point, 1.0, atol=1e-7)
    assert s.objective == pytest.approx(1.5, abs=1e-7)


def test_qp_infeasible():
    s = qp.solve_qp(qp.QpModel(P=np.eye(1), lower=np.array([2.0]), upper=np.array([1.0])))
    assert s.status == qp.INFEASIBLE


def test_psd_factor_handles_singular():
    v = np.array([1.0, 2.0, 3.0])
    Q = np.outer(v, v)
    R = qp.psd_factor(Q)
    np.testing.assert_allclose(R.T @ R, Q, atol=1e-10)
