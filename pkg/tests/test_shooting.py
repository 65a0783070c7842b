import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdcr_plan.mechanics import ActuationError, RobotParams, actuation_wrench, energy_variation, integrate_backward
from tdcr_plan.mechanics import recover_actuation
from tdcr_plan.potentials import Scene, SphereField
from tdcr_plan.shooting import (
    TOL_F, ManifoldPoint, attach_configuration, jacobian, residual, residual_batch, residual_norm,
    solve_bvp, stability_rank,
)

P = RobotParams()
BALL = Scene([SphereField((0.0, 0.0, 0.1), 0.01, 0.1, 3e4)])
# an equilibrium bent toward +x against the ball
S1_TAU = np.array([15.0, 0.0, 0.08])
S1_GUESS = np.array([0.0, 0.825, 0.0, 5.998, 0.0, 3.919])


@pytest.fixture(scope="module")
def s1_start():
    pt = solve_bvp(S1_GUESS, S1_TAU, P, BALL)
    assert pt.converged
    return pt


def test_straight_rod_residual_is_zero():
    assert np.array_equal(residual(np.r_[np.zeros(6), 0, 0, 0.05], P), np.zeros(6))


@settings(max_examples=15, deadline=None)
@given(st.floats(-70, 70), st.floats(0.025, 0.1))
def test_free_arc_residual_is_zero(t, l):
    lam = -actuation_wrench([t, 0, l], P)
    assert residual_norm(residual(np.r_[lam, t, 0, l], P)) < 1e-12


def test_random_lam_is_not_equilibrium():
    rng = np.random.default_rng(1)
    for _ in range(5):
        lam = rng.normal(size=6) * 1e-3
        assert np.linalg.norm(residual(np.r_[lam, 0, 0, 0.05], P)) > 1e-5


def test_residual_checks_bounds():
    with pytest.raises(ActuationError):
        residual(np.r_[np.zeros(6), 0, 0, 0.5], P)


def test_residual_deterministic(s1_start):
    a = residual(s1_start.x, P, BALL)
    b = residual(s1_start.x.copy(), P, BALL)
    assert np.array_equal(a, b)


def test_batch_matches_single(s1_start):
    xs = np.stack([s1_start.x, s1_start.x + 0.01])
    F = residual_batch(xs, P, BALL)
    assert np.array_equal(F[0], residual(xs[0], P, BALL))
    assert np.array_equal(F[1], residual(xs[1], P, BALL))


def test_tip_force_enters_residual():
    f = np.array([0.0, 0.2, 0.0])
    sc = Scene(tip_force=f)
    x = np.r_[np.zeros(6), 0, 0, 0.05]
    np.testing.assert_allclose(residual(x, P, sc)[3:], -f)


def test_jacobian_straight_rod_invertible():
    J = jacobian(np.r_[np.zeros(6), 0, 0, 0.05], P)
    assert J.shape == (6, 9)
    rank, smin, smax = stability_rank(J[:, :6])
    assert rank == 6


def test_jacobian_step_refinement(s1_start):
    from tdcr_plan.shooting import fd_steps
    x = s1_start.x
    h = fd_steps(x)
    J1 = jacobian(x, P, BALL, steps=h * 10)
    J2 = jacobian(x, P, BALL, steps=h * 20)
    # central differences: halving the step changes entries by O(h^2) only
    assert np.abs(J1 - J2).max() < 1e-4 * np.abs(J1).max()


def test_length_column_nonzero_in_field(s1_start):
    assert np.linalg.norm(s1_start.jac[:, 8]) > 1.0


def test_jacobian_matches_linear_response(s1_start):
    rng = np.random.default_rng(2)
    J = s1_start.jac
    x = s1_start.x
    F0 = residual(x, P, BALL)
    for _ in range(5):
        # tau2 = 0 here, where |tau2| in the axial tendon load has a kink
        dx = rng.normal(size=9) * np.r_[1e-5 * np.ones(6), 1e-4, 0, 1e-7]
        F1 = residual(x + dx, P, BALL)
        np.testing.assert_allclose(F1 - F0, J @ dx, atol=1e-3 * np.linalg.norm(J @ dx) + 1e-12)


def test_solver_fixed_point(s1_start):
    pt = solve_bvp(s1_start.lam, S1_TAU, P, BALL)
    assert pt.converged and pt.report.iterations <= 2
    np.testing.assert_allclose(pt.lam, s1_start.lam, atol=1e-10)


@settings(max_examples=10, deadline=None)
@given(st.floats(-60, 60), st.floats(0.03, 0.1), st.integers(0, 1000))
def test_solver_free_space_unique(t, l, seed):
    lam_true = -actuation_wrench([t, 0, l], P)
    guess = lam_true + np.random.default_rng(seed).normal(size=6) * 1e-3
    pt = solve_bvp(guess, [t, 0, l], P)
    assert pt.converged
    assert pt.report.norm <= TOL_F
    np.testing.assert_allclose(pt.lam, lam_true, atol=1e-8)


def test_solver_report(s1_start):
    rep = s1_start.report
    assert rep.converged and rep.norm <= TOL_F
    assert rep.rank_F_lambda == 6
    assert 0 < rep.sigma_min <= rep.sigma_max
    assert s1_start.stable


def test_solver_from_neighbour_guess_is_stationary(s1_start):
    pt = solve_bvp(s1_start.lam, S1_TAU + [1.0, 0.5, 0.002], P, BALL)
    assert pt.converged
    cfg = attach_configuration(pt, P, BALL)
    rng = np.random.default_rng(4)
    for _ in range(5):
        a, w = rng.normal(size=(2, 6))
        eta = lambda s: np.sin(np.outer(s / cfg.length, w * 2) + a)
        dE, E = energy_variation(cfg, P, BALL, eta)
        assert abs(dE) / max(abs(E), 1) < 1e-4


def test_solver_reports_failure():
    pt = solve_bvp(np.array([0, 5.0, 0, 0, 0, 0]), [0, 0, 0.05], P, max_iter=1)
    assert not pt.converged
    assert pt.report.rank_F_lambda == -1


def test_rank_classifier():
    A = np.diag([5.0, 4, 3, 2, 1, 0.5])
    assert stability_rank(A)[0] == 6
    A[3] = 0
    assert stability_rank(A)[0] == 5
    assert stability_rank(np.diag([1, 1, 1, 1, 1, 1e-7]))[0] == 5


def test_backward_shooting_and_actuation_round_trip(s1_start):
    cfg = attach_configuration(s1_start, P, BALL)
    R, p, Lam = integrate_backward(cfg.pose(-1), cfg.Lam[-1], S1_TAU, P, BALL)
    np.testing.assert_allclose(R[-1], np.eye(3), atol=1e-6)
    np.testing.assert_allclose(p[-1], 0, atol=1e-6)
    np.testing.assert_allclose(Lam[-1] - actuation_wrench(S1_TAU, P), s1_start.lam, atol=1e-6)
    np.testing.assert_allclose(recover_actuation(cfg, P), S1_TAU, atol=1e-6)


def test_manifold_point_helpers():
    pt = ManifoldPoint.from_x(np.arange(9.0))
    assert np.array_equal(pt.x, np.arange(9.0))
    assert not pt.converged and not pt.stable
