import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _oracles import grid_min, random_qp
from holobeam import convex_core as cc
from holobeam.errors import InvalidArgumentError


def test_unconstrained_origin():
    cert = cc.solve(cc.ConvexSubproblem(np.eye(3), np.zeros(3), 1.0))
    assert cert.status == cc.OPTIMAL
    assert np.linalg.norm(cert.x) < 1e-6


def test_active_ball():
    cert = cc.solve(cc.ConvexSubproblem(np.eye(1), np.array([-4.0]), 1.0))
    assert cert.status == cc.OPTIMAL
    assert abs(cert.x[0] - 1) < 1e-5
    # (x - 2)^2 = x^2 - 4x + 4
    assert abs(cert.objective + 4 - 1) < 1e-5


def test_infeasible_detected():
    # x >= 2 cannot meet x^2 <= 1
    cert = cc.solve(cc.ConvexSubproblem(np.eye(1), np.zeros(1), 1.0, A=[[1.0]], b=[2.0]))
    assert cert.status == cc.INFEASIBLE
    assert cert.phase1_slack < 0


def test_phase_one_then_optimal():
    cert = cc.solve(cc.ConvexSubproblem(np.eye(2), np.zeros(2), 1.0, A=[[1.0, 0.0]], b=[0.5]))
    assert cert.status == cc.OPTIMAL
    assert np.allclose(cert.x, [0.5, 0], atol=1e-5)


def test_epigraph_maxmin():
    # max min(x, y) on the unit ball
    cert = cc.solve(cc.ConvexSubproblem(np.zeros((2, 2)), np.zeros(2), 1.0, A=np.eye(2), b=np.zeros(2),
                                        epigraph=True))
    assert cert.status == cc.OPTIMAL
    assert abs(cert.objective - 1 / np.sqrt(2)) < 1e-5


def test_input_validation():
    with pytest.raises(InvalidArgumentError):
        cc.ConvexSubproblem(-np.eye(2), np.zeros(2), 1.0)
    with pytest.raises(InvalidArgumentError):
        cc.ConvexSubproblem(np.eye(2), np.zeros(2), 0.0)
    with pytest.raises(InvalidArgumentError):
        cc.ConvexSubproblem(np.eye(2), np.zeros(2), 1.0, A=[[1.0, 0.0]], b=[1.0, 2.0])
    with pytest.raises(InvalidArgumentError):
        cc.ConvexSubproblem(np.eye(2), np.zeros(2), 1.0, epigraph=True)


def test_lifting_small_cases():
    # |h^H w|^2 with h = 1, w = i
    p = cc.lift_complex(cc.ComplexProblem(np.ones((1, 1)), np.zeros(1), 1.0))
    x = cc.lift_vector([1j])
    assert np.isclose(x @ p.Q @ x, 1.0)
    # Re(h^H w) for h = 1 + i, w = 1 - i
    p = cc.lift_complex(cc.ComplexProblem(np.zeros((1, 1)), np.zeros(1), 1.0, A=[[1 + 1j]], b=[0.0]))
    assert np.isclose(p.A[0] @ cc.lift_vector([1 - 1j]), 0.0)


def test_lifting_preserves_values(rng):
    m = 5
    h = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    Q = h @ h.conj().T
    c = rng.normal(size=m) + 1j * rng.normal(size=m)
    a = rng.normal(size=(2, m)) + 1j * rng.normal(size=(2, m))
    p = cc.lift_complex(cc.ComplexProblem(Q, c, 1.0, a, np.zeros(2)))
    for _ in range(100):
        w = rng.normal(size=m) + 1j * rng.normal(size=m)
        x = cc.lift_vector(w)
        direct = np.vdot(w, Q @ w).real + np.real(np.vdot(c, w))
        assert abs(p.objective(x) - direct) <= 1e-12 * max(1, abs(direct))
        assert np.allclose(p.A @ x, np.real(a.conj() @ w), rtol=1e-12)
    assert np.allclose(cc.unlift_vector(cc.lift_vector(w)), w)


def test_grid_oracle(rng):
    for _ in range(5):
        Q, c, R, A, b = random_qp(rng)
        cert = cc.solve(cc.ConvexSubproblem(Q, c, R, A, b))
        assert cert.status == cc.OPTIMAL
        ref, _ = grid_min(Q, c, R, A, b, n=1000)
        assert abs(cert.objective - ref) <= 1e-4


def test_certificate_and_determinism(rng, tmp_path):
    Q, c, R, A, b = random_qp(rng, 2)
    p = cc.ConvexSubproblem(Q, c, R, A, b)
    a, b2 = cc.solve(p), cc.solve(p)
    assert a.status == cc.OPTIMAL
    assert max(a.primal_residual, a.stationarity_residual, a.complementarity_residual) <= 1e-6
    assert np.array_equal(a.x, b2.x) and a.iterations == b2.iterations
    assert np.all(A @ a.x >= b - 1e-6) and a.x @ a.x <= R + 1e-6
    # merit never increases within a barrier step
    assert all(h["merit_after"] <= h["merit_before"] * (1 + 1e-12) for h in a.history)
    rows = a.dump_csv(tmp_path / "it.csv").read_text().splitlines()
    assert rows[0].startswith("phase,iteration") and len(rows) == len(a.history) + 1


def test_iteration_cap():
    Q = np.diag([1.0, 1e-3])
    cert = cc.solve(cc.ConvexSubproblem(Q, np.array([-3.0, 1.0]), 1.0), max_iter=2)
    assert cert.status == cc.MAX_ITER


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 100))
def test_objective_scaling_invariance(seed, alpha):
    Q, c, R, A, b = random_qp(np.random.default_rng(seed))
    x1 = cc.solve(cc.ConvexSubproblem(Q, c, R, A, b), tol=1e-9).x
    x2 = cc.solve(cc.ConvexSubproblem(alpha * Q, alpha * c, R, A, b), tol=1e-9).x
    assert np.linalg.norm(x1 - x2) <= 1e-5


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_optimal_points_feasible(seed):
    rng = np.random.default_rng(seed)
    n = 4
    m = rng.normal(size=(n, n))
    A = rng.normal(size=(3, n))
    x0 = rng.normal(size=n) * 0.3
    b = A @ x0 - 0.1
    cert = cc.solve(cc.ConvexSubproblem(m @ m.T, rng.normal(size=n), 1.0, A, b))
    if cert.status == cc.OPTIMAL:
        assert np.all(A @ cert.x >= b - 1e-6)
        assert cert.x @ cert.x <= 1 + 1e-6
