import numpy as np
import pytest

from plugpull import analysis as an
from plugpull import control as ctl
from plugpull import dynamics as dyn
from plugpull.errors import FitDegenerate, SamplingBudgetExceeded, SectorViolation, TraceMisaligned
from plugpull.spatial import euler_rate_matrix

from .helpers import random_states

DP = ctl.DobParams(a0=[100.0, 90.0, 110.0], a1=[8.0, 7.0, 9.0], eps=0.02)


def mismatched(scale=0.8):
    p = dyn.ArmParams()
    return p, p.nominal(J_b=scale * p.J_b, J_b_bar=scale * p.J_b)


def ctx_at(r, rd, p, nom, T=22.0, tau0=None, tau_e=None, model="body"):
    tau0 = np.array([0.2, -0.5, 0.1]) if tau0 is None else tau0
    return an.attitude_context(r[0:3], rd[0:3], r[3:5], rd[3:5], T, tau0, p, nom,
                               input_model=model, tau_e=tau_e)


# -- fast variables ---------------------------------------------------------------

def test_fast_variable_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(200):
        eta, eta_dot = rng.uniform(-0.5, 0.5, 3), rng.normal(size=3)
        z = rng.normal(size=12)
        Lam = ctl.lambda_matrix(np.diag([0.02, 0.03, 0.04]), euler_rate_matrix(eta))
        fv = an.fast_variables(eta, eta_dot, z, Lam, DP)
        z2 = an.filter_from_fast(fv, eta, eta_dot, Lam, DP)
        assert np.max(np.abs(z2[0:6] - z[0:6])) < 1e-10
        # p is recovered next to terms of size a0/eps^2 * |z|, so compare on that scale
        scale = np.max(DP.a0) ** 2 / DP.eps ** 4 * np.max(np.abs(z)) * DP.eps
        assert np.max(np.abs(z2[6:] - z[6:])) < 1e-15 * scale
        fv2 = an.fast_variables(eta, eta_dot, z2, Lam, DP)
        assert np.allclose(fv2.xi, fv.xi, atol=1e-10) and np.allclose(fv2.zeta, fv.zeta, atol=1e-9)


def test_fast_variables_match_definition():
    rng = np.random.default_rng(1)
    eta, eta_dot, z = rng.normal(size=3), rng.normal(size=3), rng.normal(size=12)
    Lam = np.diag([0.1, 0.2, 0.3])
    fv = an.fast_variables(eta, eta_dot, z, Lam, DP)
    rates = ctl.filter_rates(z, eta, np.zeros(3), DP)
    q2_dot = rates[1:6:2]
    # p2 - Lam q2_ddot, with q2_ddot from differentiating the q2 filter along eta_dot
    q2_ddot = DP.a0 / DP.eps ** 2 * (eta_dot - z[1:6:2]) - DP.a1 / DP.eps * q2_dot
    assert np.allclose(fv.xi[0::2], z[0:6:2] / DP.eps + DP.a1 / DP.a0 * z[1:6:2] - eta / DP.eps)
    assert np.allclose(fv.xi[1::2], z[1:6:2] - eta_dot)
    assert np.allclose(fv.zeta[0::2], z[6:12:2] - Lam @ q2_dot)
    assert np.allclose(fv.zeta[1::2], DP.eps * (z[7:12:2] - Lam @ q2_ddot))


def test_bumpless_start_has_zero_xi():
    eta, eta_dot = np.array([0.1, -0.2, 0.0]), np.array([0.3, 0.1, -0.2])
    Lam = np.diag([0.1, 0.2, 0.3])
    F_bar = np.array([1.0, -2.0, 0.5])
    z = ctl.bumpless_init(eta, eta_dot, Lam, F_bar, DP)
    fv = an.fast_variables(eta, eta_dot, z, Lam, DP)
    assert np.allclose(fv.xi, 0.0, atol=1e-12)
    assert np.allclose(fv.zeta[0::2], -Lam @ F_bar, atol=1e-12)


# -- u* and the reduced model ------------------------------------------------------

def newton_ustar(ctx, s_max, u0):
    """Independent Newton solve of the quasi-steady equation with FD Jacobians."""
    u = np.array(u0, float)
    for _ in range(50):
        f = an.ustar_equation(u, ctx, s_max)
        h = 1e-7
        J = np.column_stack([(an.ustar_equation(u + h * e, ctx, s_max)
                              - an.ustar_equation(u - h * e, ctx, s_max)) / (2 * h) for e in np.eye(3)])
        step = np.linalg.solve(J, f)
        u = u - step
        if np.max(np.abs(step)) < 1e-14:
            break
    return u


def test_ustar_zero_when_matched():
    p = dyn.ArmParams()
    r, rd = np.array([0.0, -0.2, 0.0, 0.0, 0.0]), np.array([0.0, -0.1, 0.0, 0.0, 0.0])
    ctx = ctx_at(r, rd, p, p, model="full")
    assert np.allclose(an.quasi_steady_ustar(ctx).u, 0.0, atol=1e-12)
    assert np.max(np.abs(an.reduced_model_residual(ctx))) < 1e-12


def test_ustar_solves_quasi_steady_equation():
    p, nom = mismatched()
    s_max = np.full(3, 1e3)
    rng = np.random.default_rng(2)
    for r, rd in random_states(rng, 100, dyn.PINNED):
        ctx = ctx_at(r, rd, p, nom, T=rng.uniform(15, 30), tau0=rng.normal(scale=0.3, size=3))
        us = an.quasi_steady_ustar(ctx, s_max)
        assert us.in_identity and us.residual < 1e-9
        u_newton = newton_ustar(ctx, s_max, np.zeros(3))
        assert np.allclose(us.u, u_newton, atol=1e-9 * max(1.0, np.max(np.abs(us.u))))


def test_reduced_model_matches_nominal():
    p, nom = mismatched()
    rng = np.random.default_rng(3)
    worst = 0.0
    for r, rd in random_states(rng, 1000, dyn.PINNED):
        tau_e = np.concatenate([rng.normal(scale=0.2, size=3), np.zeros(2)])
        ctx = ctx_at(r, rd, p, nom, T=rng.uniform(15, 30), tau0=rng.normal(scale=0.3, size=3),
                     tau_e=tau_e)
        worst = max(worst, np.max(np.abs(an.reduced_model_residual(ctx))))
    assert worst < 1e-9


def test_saturation_region_flag():
    p, nom = mismatched(0.5)
    r, rd = np.array([0.0, -0.3, 0.0, 0.0, 0.0]), np.array([0.0, -1.0, 0.0, 0.0, 0.0])
    ctx = ctx_at(r, rd, p, nom)
    us = an.quasi_steady_ustar(ctx)
    tiny = np.abs(us.u) / 2 + 1e-6
    flagged = an.quasi_steady_ustar(ctx, tiny)
    assert not flagged.in_identity and flagged.residual > 1e-6
    assert an.quasi_steady_ustar(ctx, 10 * np.abs(us.u) + 1).in_identity


# -- sector ------------------------------------------------------------------------

def test_sector_holds_for_light_nominal():
    p, nom = mismatched(0.8)
    r = np.zeros(5)
    ctx = ctx_at(r, np.zeros(5), p, nom)
    rep = an.gamma_sector_check(ctx, r[0:3], r[3:5], p, nom.J_b, np.full(3, 2.0))
    assert rep.passed and rep.kappa < 1 and rep.hypothesis_margin > 0
    assert np.array_equal(an.gamma_map(np.zeros(3), np.ones(3), ctx, np.full(3, 2.0)), np.zeros(3))


def test_sector_fails_for_heavy_nominal():
    p, nom = mismatched(1.5)
    fails = 0
    for theta in np.linspace(-0.35, 0.0, 5):
        r = np.array([0.0, theta, 0.0, 0.0, 0.0])
        ctx = ctx_at(r, np.zeros(5), p, nom)
        rep = an.gamma_sector_check(ctx, r[0:3], r[3:5], p, nom.J_b, np.full(3, 2.0))
        fails += not rep.passed
        assert rep.hypothesis_margin < 0
    assert fails > 0
    with pytest.raises(SectorViolation):
        an.gamma_sector_check(ctx, r[0:3], r[3:5], p, nom.J_b, np.full(3, 2.0),
                              raise_on_fail=True)


def test_sector_along_default_trace(default_run, replication_scenario):
    sc = replication_scenario
    tr = default_run
    wp = np.nonzero(np.array(tr.column("mode")) == "WP")[0]
    cols = {c: tr.column(c) for c in ("q3", "q4", "q5", "qd3", "qd4", "qd5", "T",
                                      "tau0_x", "tau0_y", "tau0_z")}
    for k in wp[::20]:
        eta = np.array([cols["q3"][k], cols["q4"][k], cols["q5"][k]])
        eta_dot = np.array([cols["qd3"][k], cols["qd4"][k], cols["qd5"][k]])
        tau0 = np.array([cols["tau0_x"][k], cols["tau0_y"][k], cols["tau0_z"][k]])
        ctx = an.attitude_context(eta, eta_dot, np.zeros(2), np.zeros(2), cols["T"][k], tau0,
                                  sc.params, sc.nominal, sc.input_model)
        assert an.sector_norm(ctx) < 1


# -- decay fit ---------------------------------------------------------------------

def test_decay_fit_recovers_rate():
    t = np.linspace(0, 1, 2001)
    for eps in (0.04, 0.02):
        norm = 3.0 * np.exp(-4.0 * t / eps) + 1e-9
        fit = an.fast_decay_fit(t, norm, eps)
        assert fit.rate == pytest.approx(4.0 / eps, rel=1e-3)
        assert fit.lambda2 == pytest.approx(4.0, rel=1e-3)
        assert fit.lambda1 == pytest.approx(3.0, rel=1e-2)


def test_decay_fit_skipped_without_perturbation():
    t = np.linspace(0, 1, 100)
    fit = an.fast_decay_fit(t, np.full(100, 1e-12), 0.02)
    assert fit.skipped and np.isnan(fit.rate)


def test_decay_fit_degenerate():
    t = np.linspace(0, 1, 100)
    norm = np.where(t < 0.03, 1.0, 1e-6)
    with pytest.raises(FitDegenerate):
        an.fast_decay_fit(t, norm, 0.02)


def test_decay_ratios_sorted():
    fits = [an.DecayFit(e, 4.0 / e, 1, 4, 0, 0, 10) for e in (0.01, 0.04, 0.02)]
    assert np.allclose(an.decay_ratios(fits), [2.0, 2.0])


# -- coverage and maneuver verdicts -------------------------------------------------

def test_coverage_identical_samples():
    centers, assign = an.build_coverage_set(np.ones((50, 4)), 0.1)
    assert len(centers) == 1 and np.all(assign == 0)


@pytest.mark.parametrize("L,delta", [(1.0, 0.1), (2.5, 0.08), (0.3, 0.5)])
def test_coverage_line_bound(L, delta):
    rng = np.random.default_rng(4)
    s = rng.uniform(0, L, 300)
    X = np.column_stack([s, 2 * s, -s]) / np.sqrt(6)     # unit-speed line of length L
    centers, assign = an.build_coverage_set(X, delta)
    assert len(centers) <= np.ceil(L / (2 * delta)) + 1
    d = np.linalg.norm(X - X[centers[assign]], axis=1)
    assert np.all(d <= delta)
    worst, ok = an.verify_coverage(X, centers, delta)
    assert ok and worst <= delta


def test_coverage_random_cloud_weighted():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(400, 6))
    w = np.array([1, 1, 1, 0.3, 0.3, 0.3])
    centers, assign = an.build_coverage_set(X, 0.8, w)
    worst, ok = an.verify_coverage(X, centers, 0.8, w)
    assert ok
    brute = np.linalg.norm((X - X[centers[assign]]) * w, axis=1).max()
    assert brute <= 0.8


def test_single_maneuver_margins():
    v = an.check_single_maneuver(np.zeros((0, 0)), 0.1)
    assert v.passed and v.margin == np.inf
    rng = np.random.default_rng(6)
    d = rng.uniform(0.05, 2.0, (500, 3))
    v = an.check_single_maneuver(d, 0.01)
    brute = min(min(row) for row in d.tolist())
    assert v.detail["min_distance"] == brute and v.margin == pytest.approx(brute - 0.01)
    assert v.passed
    assert not an.check_single_maneuver(d, brute + 1e-9).passed


def test_approach_and_transition_verdicts():
    inp = an.ApproachInputs(np.zeros((10, 0)), np.array([0.2, -0.1, -0.5]),
                            np.zeros((5, 3)), np.full(5, np.inf))
    ok = an.check_approach_maneuver(inp, 0.1)
    assert ok.passed
    assert not an.check_approach_maneuver(inp, 1.0).passed       # not sigma-deep in the guard
    tv = an.check_transition_maneuver(ok, [0.5, 0.4, 0.05], 0.1, 0.08, 3)
    assert not tv.passed and tv.detail["offending_centers"] == [2]
    assert an.check_transition_maneuver(ok, [0.5], 0.1, 10.0, 1).passed


def test_guard_distances():
    m = an.ManeuverMetric()
    assert an.wp_guard_distance(4.0, 6.65, m) == pytest.approx(0.265)
    assert an.st_guard_distance(np.zeros(3), 1.0, 2.0, 0.08, m) == np.inf
    assert an.st_guard_distance(np.array([0.1, 0, 0]), 2.0, 2.0, 0.08, m) == pytest.approx(0.02)


def test_sampling_budget():
    an.check_sampling_budget(10, 10)
    with pytest.raises(SamplingBudgetExceeded):
        an.check_sampling_budget(11, 10)


# -- deviation ----------------------------------------------------------------------

def test_deviation_zero_for_identical_and_positive_otherwise(default_run):
    assert an.nominal_actual_deviation(default_run, default_run) == 0.0
    t = np.linspace(0, 1, 11)
    v = np.zeros((11, 9))
    w = v.copy()
    w[5, 1] = 0.2
    w[7, 7] = -0.5
    m = an.ManeuverMetric()
    assert an.nominal_actual_deviation((t, w), (t, v)) == pytest.approx(0.5 * m.Nm)
    w[:, 4] = 0.0
    assert an.nominal_actual_deviation((t, w), (t, v)) > 0


def test_deviation_misaligned():
    t = np.linspace(0, 1, 11)
    v = np.zeros((11, 9))
    with pytest.raises(TraceMisaligned):
        an.nominal_actual_deviation((t + 1e-3, v), (t, v))
    w = v.copy()
    w[0, 0] = 1e-3
    with pytest.raises(TraceMisaligned):
        an.nominal_actual_deviation((t, w), (t, v))
