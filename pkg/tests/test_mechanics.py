import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdcr_plan import liegroup as lg
from tdcr_plan.mechanics import (
    EXPORT_COLUMNS, ActuationError, IntegrationDiverged, RobotParams, actuation_wrench, energy_variation,
    integrate_backward, integrate_ivp, ode_rhs, recover_actuation, save_configuration, stiffness_matrix,
    total_energy,
)
from tdcr_plan.potentials import FREE_SPACE, Scene, SphereField

P = RobotParams()
tensions = st.floats(-70, 70, allow_nan=False)
lengths = st.floats(0.025, 0.1)


def arc_tip(kappa, stretch, length):
    """Tip of a planar arc bending toward +x with curvature kappa about body y."""
    th = kappa * length
    if abs(th) < 1e-12:
        return np.array([0.0, 0.0, stretch * length])
    return stretch * np.array([(1 - np.cos(th)) / kappa, 0.0, np.sin(th) / kappa])


def test_defaults_and_stiffness():
    assert (P.E, P.G, P.r_backbone, P.d_tendon, P.tau_max) == (50e9, 20e9, 1e-3, 15e-3, 70.0)
    assert (P.l_min, P.l_max) == (0.025, 0.1)
    I = np.pi * 1e-12 / 4
    A = np.pi * 1e-6
    np.testing.assert_allclose(np.diag(stiffness_matrix(P)), [50e9 * I, 50e9 * I, 20e9 * 2 * I, 20e9 * A, 20e9 * A, 50e9 * A])


@pytest.mark.parametrize("kw", [dict(E=0), dict(G=-1), dict(r_backbone=0), dict(d_tendon=0), dict(l_min=0.2)])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        RobotParams(**kw)


def test_actuation_wrench_values():
    assert np.array_equal(actuation_wrench([0, 0, 0.05], P), np.zeros(6))
    np.testing.assert_allclose(actuation_wrench([10, 0, 0.05], P), [0, -0.15, 0, 0, 0, -10])
    a, b = actuation_wrench([7, -3, 0.05], P), actuation_wrench([-7, 3, 0.05], P)
    np.testing.assert_allclose(a[:2], -b[:2])
    assert a[5] == b[5] == -10


def test_rod_bends_toward_pulled_tendon():
    # tendon 1 sits on +x, tendon 2 on +y
    for tau, axis in (([10, 0, 0.05], 0), ([0, 10, 0.05], 1), ([-10, 0, 0.05], 0)):
        lam = -actuation_wrench(tau, P)
        tip = integrate_ivp(lam, tau, P).tip
        assert np.sign(tip[axis]) == np.sign(tau[axis])
        assert abs(tip[1 - axis]) < 1e-15


def test_axial_switch():
    q = RobotParams(axial_tendon_load=False)
    assert actuation_wrench([10, -5, 0.05], q)[5] == 0


@pytest.mark.parametrize("tau, word", [([71, 0, 0.05], "tau1"), ([0, -80, 0.05], "tau2"),
                                       ([0, 0, 0.2], "tau3"), ([0, 0, 0.01], "tau3")])
def test_actuation_bounds_named(tau, word):
    with pytest.raises(ActuationError, match=word):
        actuation_wrench(tau, P)


def test_ode_rhs_unstrained():
    g = lg.exp([0.1, 0.2, 0.3, 0.01, 0.0, 0.02])
    dg, dLam = ode_rhs(g, np.zeros(6), [0, 0, 0.05], P)
    np.testing.assert_allclose(dg, g @ lg.hat([0, 0, 0, 0, 0, 1]))
    assert np.array_equal(dLam, np.zeros(6))


def test_ode_rhs_matches_integrator_first_step():
    # one tiny step of the compiled integrator follows the reference rhs
    sc = Scene([SphereField((0.01, 0, 0.02), 0.005, 0.05, 1e3)])
    lam = np.array([0.01, -0.02, 0.001, 0.3, -0.2, 0.5])
    q = RobotParams(l_min=1e-9)

    def slope(h):
        cfg = integrate_ivp(lam, [5.0, -3.0, h], q, sc, n=1)
        return (cfg.Lam[1] - cfg.Lam[0]) / h

    h = 1e-6
    est = 2 * slope(h / 2) - slope(h)
    _, dLam = ode_rhs(np.eye(4), lam + actuation_wrench([5.0, -3.0, h], q), [5.0, -3.0, h], q, sc)
    np.testing.assert_allclose(est, dLam, rtol=1e-6, atol=1e-9)


def test_straight_rod():
    cfg = integrate_ivp(np.zeros(6), [0, 0, 0.07], P)
    np.testing.assert_allclose(cfg.tip, [0, 0, 0.07], atol=1e-15)
    assert np.abs(cfg.Lam).max() == 0
    assert cfg.n == 100 and cfg.length == pytest.approx(0.07)


@settings(max_examples=25, deadline=None)
@given(tensions, lengths)
def test_free_arc(t, l):
    # the equilibrium has Lambda = 0, i.e. lam = -Lambda_ad, and a constant strain
    lam_ad = actuation_wrench([t, 0, l], P)
    cfg = integrate_ivp(-lam_ad, [t, 0, l], P, n=200)
    assert np.abs(cfg.Lam).max() < 1e-12
    kappa = P.d_tendon * t / P.EI
    stretch = 1 + abs(t) / P.stiffness[5]
    assert np.linalg.norm(cfg.tip - arc_tip(kappa, stretch, l)) < 1e-6 * l
    np.testing.assert_allclose(cfg.u, np.tile(-lam_ad / P.stiffness, (201, 1)), atol=1e-15)


@settings(max_examples=20, deadline=None)
@given(tensions, tensions, lengths, st.integers(0, 2**32 - 1))
def test_constitutive_consistency(t1, t2, l, seed):
    rng = np.random.default_rng(seed)
    lam = rng.normal(size=6) * [0.05, 0.05, 0.01, 0.5, 0.5, 0.5]
    sc = Scene([SphereField((0.0, 0.01, 0.05), 0.005, 0.04, 1e3)])
    cfg = integrate_ivp(lam, [t1, t2, l], P, sc)
    lam_ad = actuation_wrench([t1, t2, l], P)
    res = cfg.u * P.stiffness + lam_ad - cfg.Lam
    assert np.abs(res).max() < 1e-9
    R = cfg.R
    assert np.abs(np.einsum("kji,kjl->kil", R, R) - np.eye(3)).max() < 1e-10


def test_convergence_order_of_tip():
    sc = Scene([SphereField((0.02, 0.0, 0.06), 0.005, 0.05, 3e3)])
    lam = np.array([0.02, 0.05, 0.002, 0.4, -0.3, 1.0])
    tau = [20.0, -10.0, 0.08]
    tips = [integrate_ivp(lam, tau, P, sc, n).tip for n in (50, 100, 200)]
    ratio = np.linalg.norm(tips[0] - tips[1]) / np.linalg.norm(tips[1] - tips[2])
    assert 12 < ratio < 20


def test_diverged_integration_reports_arclength():
    with pytest.raises(IntegrationDiverged) as e:
        integrate_ivp(np.array([1e300, 1e300, 0, 1e300, 0, 1e300]), [0, 0, 0.05], P)
    assert 0 <= e.value.s <= 0.05


def test_backward_round_trip():
    sc = Scene([SphereField((0.02, 0.0, 0.06), 0.005, 0.05, 3e3)])
    lam = np.array([0.02, 0.05, 0.002, 0.4, -0.3, 1.0])
    tau = [20.0, -10.0, 0.08]
    cfg = integrate_ivp(lam, tau, P, sc)
    R, p, Lam = integrate_backward(cfg.pose(-1), cfg.Lam[-1], tau, P, sc)
    np.testing.assert_allclose(R[-1], np.eye(3), atol=1e-10)
    np.testing.assert_allclose(p[-1], 0, atol=1e-10)
    np.testing.assert_allclose(Lam[-1] - actuation_wrench(tau, P), lam, atol=1e-10)
    # states line up node by node
    np.testing.assert_allclose(p[::-1], cfg.p, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(tensions, tensions, lengths)
def test_recover_actuation(t1, t2, l):
    lam = np.array([0.01, -0.01, 0.0, 0.1, 0.2, -0.1])
    cfg = integrate_ivp(lam, [t1, t2, l], P)
    np.testing.assert_allclose(recover_actuation(cfg, P), [t1, t2, l], atol=1e-6)


def test_energy_straight_rod_is_zero():
    assert total_energy(integrate_ivp(np.zeros(6), [0, 0, 0.05], P), P) == 0


def test_energy_of_free_arc():
    t, l = 12.0, 0.06
    lam_ad = actuation_wrench([t, 0, l], P)
    cfg = integrate_ivp(-lam_ad, [t, 0, l], P)
    u = -lam_ad / P.stiffness
    expect = l * (0.5 * u @ (P.stiffness * u) + u @ lam_ad)
    assert total_energy(cfg, P) == pytest.approx(expect, rel=1e-12)


def test_energy_quadrature_is_second_order():
    sc = Scene([SphereField((0.02, 0.0, 0.06), 0.005, 0.05, 3e3)])
    lam = np.array([0.02, 0.05, 0.002, 0.4, -0.3, 1.0])
    tau = [20.0, -10.0, 0.08]
    E = [total_energy(integrate_ivp(lam, tau, P, sc, n), P, sc) for n in (100, 200, 400)]
    ratio = (E[0] - E[1]) / (E[1] - E[2])
    assert 3 < ratio < 5


def test_energy_variation_vanishes_on_free_arc():
    t, l = 12.0, 0.06
    lam_ad = actuation_wrench([t, 0, l], P)
    cfg = integrate_ivp(-lam_ad, [t, 0, l], P)
    rng = np.random.default_rng(0)
    for _ in range(5):
        a, w = rng.normal(size=(2, 6))
        eta = lambda s: np.sin(np.outer(s / l, w * 3) + a)
        dE, E = energy_variation(cfg, P, FREE_SPACE, eta)
        assert abs(dE) / max(abs(E), 1) < 1e-6


def test_energy_variation_detects_non_equilibrium():
    cfg = integrate_ivp(np.array([0, 0.05, 0, 0, 0, 0]), [0, 0, 0.06], P)
    dE, _ = energy_variation(cfg, P, FREE_SPACE, lambda s: np.tile([0, 1.0, 0, 0, 0, 0], (len(s), 1)))
    assert abs(dE) > 1e-3


def test_export(tmp_path):
    cfg = integrate_ivp(np.zeros(6), [3, 0, 0.05], P, n=50)
    path = tmp_path / "cfg.csv"
    save_configuration(cfg, path)
    header = path.read_text().splitlines()[0].split(",")
    assert header == list(EXPORT_COLUMNS) and len(header) == 25
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (51, 25)
    np.testing.assert_allclose(data[:, 10:13], cfg.p)
