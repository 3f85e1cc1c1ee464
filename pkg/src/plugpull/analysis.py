"""Numerical checks of the singular-perturbation argument and of the robust
maneuver definitions.

Everything here is a pure function of states, model evaluations or completed
traces; the simulations that feed them live in :mod:`plugpull.experiments`.
"""

from dataclasses import dataclass, field

import numpy as np

from . import control as ctl
from . import dynamics as dyn
from .errors import FitDegenerate, SamplingBudgetExceeded, SectorViolation, TraceMisaligned
from .spatial import euler_rate_matrix


# ---------------------------------------------------------------------------
# Fast variables

@dataclass
class FastVars:
    xi: np.ndarray     # [xi_11, xi_12, xi_21, ...]
    zeta: np.ndarray   # [zeta_11, zeta_12, zeta_21, ...]

    def pairs(self):
        return self.xi.reshape(3, 2), self.zeta.reshape(3, 2)


def _filter_derivs(z, eta, eta_dot, dp):
    k0 = dp.a0 / dp.eps ** 2
    k1 = dp.a1 / dp.eps
    q1, q2 = z[0:6:2], z[1:6:2]
    q2_dot = k0 * (eta - q1) - k1 * q2
    q2_ddot = k0 * (eta_dot - q2) - k1 * q2_dot
    return q2_dot, q2_ddot


def fast_variables(eta, eta_dot, z, Lam, dp):
    """Change of variables from the DOB filter state to (xi, zeta).

    xi_i = [q_i1/eps + (a_i1/a_i0) q_i2 - eta_i/eps, q_i2 - eta_dot_i] and
    zeta_i = [p_i1 - (Lam q2_dot)_i, eps (p_i2 - (Lam q2_ddot)_i)].
    """
    z = np.asarray(z, float)
    eps = dp.eps
    q1, q2 = z[0:6:2], z[1:6:2]
    p1, p2 = z[6:12:2], z[7:12:2]
    q2_dot, q2_ddot = _filter_derivs(z, eta, eta_dot, dp)
    xi = np.empty(6)
    xi[0::2] = q1 / eps + dp.a1 / dp.a0 * q2 - eta / eps
    xi[1::2] = q2 - eta_dot
    zeta = np.empty(6)
    zeta[0::2] = p1 - Lam @ q2_dot
    zeta[1::2] = eps * (p2 - Lam @ q2_ddot)
    return FastVars(xi, zeta)


def filter_from_fast(fv, eta, eta_dot, Lam, dp):
    """Inverse of :func:`fast_variables`: recover the filter state."""
    eps = dp.eps
    xi = np.asarray(fv.xi, float)
    zeta = np.asarray(fv.zeta, float)
    z = np.empty(12)
    q2 = xi[1::2] + eta_dot
    z[1:6:2] = q2
    z[0:6:2] = eps * xi[0::2] - eps * dp.a1 / dp.a0 * q2 + eta
    q2_dot, q2_ddot = _filter_derivs(z, eta, eta_dot, dp)
    z[6:12:2] = zeta[0::2] + Lam @ q2_dot
    z[7:12:2] = zeta[1::2] / eps + Lam @ q2_ddot
    return z


def quasi_steady_fast(tau_b2, eta_ddot, Lam):
    """(xi*, zeta*) at eps = 0: xi* = 0, zeta*_1 = tau_b2 - Lam eta_ddot, zeta*_2 = 0."""
    zeta = np.zeros(6)
    zeta[0::2] = tau_b2 - Lam @ eta_ddot
    return FastVars(np.zeros(6), zeta)


# ---------------------------------------------------------------------------
# Quasi-steady DOB output and the reduced model

@dataclass
class AttitudeContext:
    """True and nominal attitude models at one WP state."""

    F: np.ndarray
    G: np.ndarray
    F_bar: np.ndarray
    G_bar: np.ndarray
    Lam: np.ndarray
    tau0: np.ndarray
    Delta: np.ndarray = field(default_factory=lambda: np.zeros(3))


def attitude_context(eta, eta_dot, gamma, gamma_dot, T, tau0, params, nominal,
                     input_model="body", tau_e=None, gamma_ddot=None, gamma_ddot_hat=None):
    """Evaluate both attitude models at a pinned state.

    ``Delta`` collects the generalized disturbance mapped to eta_ddot; the
    gamma_ddot mismatch stays inside ``F - F_bar``.
    """
    gdd = np.zeros(2) if gamma_ddot is None else np.asarray(gamma_ddot, float)
    gdd_hat = np.zeros(2) if gamma_ddot_hat is None else np.asarray(gamma_ddot_hat, float)
    r = np.concatenate([eta, gamma])
    rd = np.concatenate([eta_dot, gamma_dot])
    F, G = dyn.attitude_submodel(r, rd, T, gdd, params)
    Delta = np.zeros(3)
    if tau_e is not None and np.any(tau_e):
        Fd, _ = dyn.attitude_submodel(r, rd, T, gdd, params, tau_e)
        Delta = Fd - F
    F_bar, G_bar = dyn.nominal_attitude_model(r, rd, T, gdd_hat, nominal, input_model)
    Lam = ctl.lambda_matrix(nominal.J_b, euler_rate_matrix(eta))
    return AttitudeContext(F, G, F_bar, G_bar, Lam, np.asarray(tau0, float), Delta)


def _mismatch(ctx):
    return ctx.F_bar - ctx.F + (ctx.G_bar - ctx.G) @ ctx.tau0 - ctx.Delta


def interaction_matrix(ctx):
    """Lam G G_bar^-1 Lam^-1."""
    return ctx.Lam @ ctx.G @ np.linalg.inv(ctx.G_bar) @ np.linalg.inv(ctx.Lam)


def ustar_equation(u, ctx, s_max):
    """Left-hand side of the quasi-steady equation on u (zero at u*)."""
    I = np.eye(3)
    return (u - ctx.Lam @ _mismatch(ctx)
            - (I - interaction_matrix(ctx)) @ ctl.saturation_pi(u, s_max))


@dataclass
class UStar:
    u: np.ndarray
    in_identity: bool        # False flags SaturationRegionExceeded
    residual: float          # |equation(u*)|_inf


def quasi_steady_ustar(ctx, s_max=None):
    """Closed-form u* = Lam G_bar G^-1 (F_bar - F + (G_bar - G) tau0 - Delta).

    The closed form only holds while u* stays in the identity region of Pi;
    outside it the flag is cleared and the reported residual is that of the
    saturated equation.
    """
    u = ctx.Lam @ ctx.G_bar @ np.linalg.solve(ctx.G, _mismatch(ctx))
    if s_max is None:
        return UStar(u, True, float(np.max(np.abs(ustar_equation(u, ctx, np.full(3, np.inf))))))
    inside = ctl.in_identity_region(u, s_max)
    res = float(np.max(np.abs(ustar_equation(u, ctx, s_max))))
    return UStar(u, inside, res)


def reduced_model_residual(ctx, u_star=None):
    """(F + G tau0 + G (Lam G_bar)^-1 u* + Delta) - (F_bar + G_bar tau0)."""
    if u_star is None:
        u_star = quasi_steady_ustar(ctx).u
    reduced = ctx.F + ctx.G @ ctx.tau0 + ctx.G @ np.linalg.solve(ctx.Lam @ ctx.G_bar, u_star) + ctx.Delta
    return reduced - (ctx.F_bar + ctx.G_bar @ ctx.tau0)


# ---------------------------------------------------------------------------
# Sector condition

def sector_norm(ctx):
    """Spectral norm of I - Lam G G_bar^-1 Lam^-1."""
    return float(np.linalg.norm(np.eye(3) - interaction_matrix(ctx), 2))


def sector_norm_mstar(J_bar, M_star):
    """||I - J_bar^1/2 M*^-1 J_bar^1/2||, the rigid-rotation form of the bound."""
    S = np.sqrt(J_bar)
    return float(np.linalg.norm(np.eye(3) - S @ np.linalg.solve(M_star, S), 2))


def inertia_hypothesis_margin(J_bar, J_b):
    """Smallest eigenvalue of J_b - J_bar (positive iff J_bar < J_b)."""
    D = np.asarray(J_b, float) - np.asarray(J_bar, float)
    return float(np.linalg.eigvalsh(0.5 * (D + D.T)).min())


def gamma_map(delta, u_star, ctx, s_max):
    """Gamma(delta) = delta + (Lam G G_bar^-1 Lam^-1 - I)(Pi(u*+delta) - Pi(u*))."""
    A = interaction_matrix(ctx) - np.eye(3)
    return delta + A @ (ctl.saturation_pi(u_star + delta, s_max) - ctl.saturation_pi(u_star, s_max))


@dataclass
class SectorReport:
    kappa: float             # ||I - Lam G G_bar^-1 Lam^-1||
    kappa_mstar: float       # ||I - J_bar^1/2 M*^-1 J_bar^1/2||
    hypothesis_margin: float
    max_ratio: float         # max |Gamma(d) - d| / |d| over samples
    zero_ok: bool            # Gamma(0) = 0 and no other sampled zero
    passed: bool


def gamma_sector_check(ctx, eta, gamma, params, J_bar, s_max, rng=None, n_delta=64,
                       scale=None, raise_on_fail=False):
    """Sector estimate at one state.

    Passes iff the inertia hypothesis holds, kappa < 1 and every sampled
    delta satisfies |Gamma(d) - d| <= kappa |d|.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    kappa = sector_norm(ctx)
    kms = sector_norm_mstar(J_bar, dyn.m_star(eta, gamma, params))
    hyp = inertia_hypothesis_margin(J_bar, params.J_b)
    u = quasi_steady_ustar(ctx).u
    scale = np.max(np.asarray(s_max, float)) if scale is None else scale
    worst = 0.0
    zero_ok = bool(np.all(gamma_map(np.zeros(3), u, ctx, s_max) == 0.0))
    for _ in range(n_delta):
        d = rng.standard_normal(3) * scale * rng.random()
        nd = np.linalg.norm(d)
        if nd == 0:
            continue
        gd = gamma_map(d, u, ctx, s_max)
        worst = max(worst, np.linalg.norm(gd - d) / nd)
        if np.linalg.norm(gd) == 0.0:
            zero_ok = False
    passed = hyp > 0 and kappa < 1.0 and worst <= kappa + 1e-12 and zero_ok
    rep = SectorReport(kappa, kms, hyp, float(worst), zero_ok, bool(passed))
    if raise_on_fail and not passed:
        raise SectorViolation(
            f"sector check failed at eta={np.round(eta, 4).tolist()}: kappa={kappa:.4g}, "
            f"min eig(J_b - J_bar)={hyp:.3g}")
    return rep


# ---------------------------------------------------------------------------
# Fast-variable decay

@dataclass
class DecayFit:
    eps: float
    rate: float              # physical decay rate (1/s); lambda_2 = rate * eps
    lambda1: float
    lambda2: float
    residual: float          # rms of the log-linear fit
    floor: float
    n_samples: int
    skipped: bool = False


def fast_decay_fit(t, norm, eps, floor=None, floor_factor=5.0, tail=0.25, rel_floor=1e-8):
    """Fit log|(xi~, zeta~)|(t) = log lambda1 - lambda2 (t - t0)/eps.

    The window runs from the first sample until the norm first drops below
    ``floor_factor`` times the long-run floor (median of the last ``tail``
    fraction unless given).  The floor is never taken below ``rel_floor``
    times the initial norm, which keeps rounding noise out of the fit.
    """
    t = np.asarray(t, float)
    norm = np.asarray(norm, float)
    if floor is None:
        floor = float(np.median(norm[int(len(norm) * (1 - tail)):]))
        floor = float(max(floor, rel_floor * norm[0]))
    if norm[0] <= floor_factor * floor:
        return DecayFit(eps, np.nan, np.nan, np.nan, np.nan, floor, 0, skipped=True)
    below = np.nonzero(norm < floor_factor * floor)[0]
    end = below[0] if len(below) else len(norm)
    if end < 5:
        raise FitDegenerate(f"transient has {end} samples (< 5) at eps={eps}")
    tt = t[:end] - t[0]
    y = np.log(norm[:end])
    slope, icpt = np.polyfit(tt, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * tt + icpt)) ** 2)))
    rate = -slope
    return DecayFit(eps, float(rate), float(np.exp(icpt)), float(rate * eps), resid, floor, int(end))


def decay_ratios(fits):
    """Ratios of fitted physical rates across successive eps values (sorted descending)."""
    fits = sorted(fits, key=lambda f: -f.eps)
    return [b.rate / a.rate for a, b in zip(fits, fits[1:])]


# ---------------------------------------------------------------------------
# Maneuver metric

UNITS = ("rad", "rad_s", "m", "m_s", "N", "Nm")


def column_unit(name):
    """Physical unit class of a trace column (None if not part of the metric)."""
    if name in ("q0", "q1", "q2"):
        return "m"
    if name in ("qd0", "qd1", "qd2"):
        return "m_s"
    if name.startswith("qd"):
        return "rad_s"
    if name.startswith("q") or name.startswith("eta_d"):
        return "rad"
    if name == "T" or name.startswith("FE_"):
        return "N"
    if name.startswith("tau"):
        return "Nm"
    return None


MANEUVER_COLUMNS = ([f"q{i}" for i in range(8)] + [f"qd{i}" for i in range(8)]
                    + ["T", "tau_x", "tau_y", "tau_z", "tau_g1", "tau_g2"])


@dataclass
class ManeuverMetric:
    """Weighted Euclidean norm over (x, u_f); one weight per unit class."""

    rad: float = 1.0
    rad_s: float = 0.3
    m: float = 1.0
    m_s: float = 0.3
    N: float = 0.1
    Nm: float = 1.0

    def weight(self, unit):
        return getattr(self, unit)

    def weights(self, columns):
        return np.array([self.weight(column_unit(c)) for c in columns])

    def norm(self, dv, columns):
        return float(np.linalg.norm(self.weights(columns) * np.asarray(dv, float)))

    def as_dict(self):
        return {u: self.weight(u) for u in UNITS}


def envelope_margin(envelope, q, q_dot, home_p, metric):
    """Metric-scaled distance to the envelope boundary (negative outside)."""
    m = envelope.margins(q, q_dot, home_p)
    return min(metric.rad * m["angle"], metric.m * m["z"], metric.m_s * m["speed"],
               metric.rad_s * m["rate"], metric.m * m["offset"])


def wp_guard_distance(F_E1, F_TH, metric):
    """Distance to G(WP, ST) = {F_E,1 >= F_TH}, positive outside."""
    return metric.N * (F_TH - F_E1)


def st_guard_distance(eta, t, t_d_st, delta_eta, metric):
    """Distance to G(ST, FF); infinite while the time condition cannot hold."""
    if t < t_d_st:
        return np.inf
    return metric.rad * (np.linalg.norm(eta) - delta_eta)


# ---------------------------------------------------------------------------
# Definitions 1-4

@dataclass
class Verdict:
    name: str
    passed: bool
    margin: float
    sigma: float
    detail: dict = field(default_factory=dict)

    def lines(self):
        out = [f"{self.name}.passed={self.passed}", f"{self.name}.margin={self.margin:.6g}",
               f"{self.name}.sigma={self.sigma:.6g}"]
        out += [f"{self.name}.{k}={v}" for k, v in self.detail.items()]
        return out


def check_single_maneuver(distances, sigma, name="single"):
    """Definition 1 on precomputed per-sample guard distances.

    ``distances`` is an (n_samples, n_guards) array (or list of rows) of
    metric distances to each outgoing guard set; an empty guard set gives an
    infinite margin.
    """
    d = np.asarray(distances, float)
    if d.size == 0:
        margin = np.inf
    else:
        margin = float(np.min(d))
    return Verdict(name, bool(margin > sigma), margin - sigma if np.isfinite(margin) else np.inf,
                   sigma, {"min_distance": margin})


@dataclass
class ApproachInputs:
    """What the approach check needs from the simulations.

    * ``other_edge_distances``: (n, k) distances of the pre-trace to guards of
      edges other than the taken one (k = 0 for WP);
    * ``extended_guard_distances``: distances to the target guard along the
      pre-trace continued with the guard disabled (negative inside);
    * ``reset_images``: (n, d) post-reset states x+ (metric coordinates);
    * ``post_guard_distances``: per reset image, max over sampled u_f+ of the
      minimum distance to the target mode's outgoing guards.
    """

    other_edge_distances: np.ndarray
    extended_guard_distances: np.ndarray
    reset_images: np.ndarray
    post_guard_distances: np.ndarray
    attempts: int = 0
    sufficient_condition: bool = True


def check_approach_maneuver(inp, sigma):
    """Definition 2: (a) clearance from other edges, (b) sigma-deep guard entry,
    (c) every sampled reset image admits an input clearing the next guards."""
    a = check_single_maneuver(inp.other_edge_distances, sigma, "approach.other_edges")
    ext = np.asarray(inp.extended_guard_distances, float)
    depth = float(-np.min(ext)) if ext.size else -np.inf   # how deep inside the guard
    b_ok = depth >= sigma and inp.sufficient_condition
    post = np.asarray(inp.post_guard_distances, float)
    c_margin = float(np.min(post)) if post.size else -np.inf
    c_ok = post.size > 0 and c_margin > sigma
    margin = min(a.margin, depth - sigma, c_margin - sigma)
    return Verdict("approach", bool(a.passed and b_ok and c_ok), margin, sigma, {
        "other_edges_margin": a.margin, "guard_depth": depth,
        "sufficient_condition": inp.sufficient_condition,
        "reset_samples": len(post), "reset_clearance": c_margin, "attempts": inp.attempts,
    })


def build_coverage_set(samples, delta_sigma, weights=None):
    """Greedy covering: every sample ends within delta_sigma of some center.

    Samples are swept along their principal axis; each uncovered sample is
    covered by the reachable sample furthest ahead on that axis, which is the
    optimal interval cover when the samples lie on a line.
    Returns ``(centers_idx, assignment)`` with indices into ``samples``.
    """
    X = np.asarray(samples, float)
    if X.ndim == 1:
        X = X[:, None]
    if weights is not None:
        X = X * np.asarray(weights, float)
    Xc = X - X.mean(axis=0)
    if len(X) > 1 and np.any(Xc):
        proj = Xc @ np.linalg.svd(Xc, full_matrices=False)[2][0]
    else:
        proj = np.zeros(len(X))
    centers = []
    assign = np.full(len(X), -1)
    dist = np.full(len(X), np.inf)
    for i in np.argsort(proj, kind="stable"):
        if dist[i] <= delta_sigma:
            continue
        reach = np.nonzero(np.linalg.norm(X - X[i], axis=1) <= delta_sigma)[0]
        c = reach[np.argmax(proj[reach])]
        centers.append(int(c))
        d = np.linalg.norm(X - X[c], axis=1)
        closer = d < dist
        dist[closer] = d[closer]
        assign[closer] = len(centers) - 1
    return np.array(centers, dtype=int), assign


def verify_coverage(samples, centers, delta_sigma, weights=None):
    """Exhaustive scan: largest distance from a sample to its nearest center."""
    X = np.asarray(samples, float)
    if X.ndim == 1:
        X = X[:, None]
    if weights is not None:
        X = X * np.asarray(weights, float)
    C = X[np.asarray(centers, int)]
    d = np.linalg.norm(X[:, None, :] - C[None, :, :], axis=2).min(axis=1)
    return float(d.max()), bool(d.max() <= delta_sigma)


def check_transition_maneuver(approach, post_margins, sigma, delta_sigma, n_centers,
                              max_centers=None):
    """Definition 4: approach passes and every center post-trace is single-robust.

    ``post_margins`` holds, per center, the minimum metric clearance of its
    post-trace (guards other than its terminal edge, and the envelope).
    """
    post = np.asarray(post_margins, float)
    bad = [int(j) for j in np.nonzero(post <= sigma)[0]]
    ok = approach.passed and not bad and post.size == n_centers
    if max_centers is not None and n_centers > max_centers:
        ok = False
    margin = min(approach.margin, float(post.min()) - sigma if post.size else -np.inf)
    return Verdict("transition", bool(ok), margin, sigma, {
        "delta_sigma": delta_sigma, "n_centers": n_centers, "offending_centers": bad,
        "approach_passed": approach.passed,
    })


def check_sampling_budget(attempts, budget):
    if attempts > budget:
        raise SamplingBudgetExceeded(f"{attempts} attempts exceed the budget of {budget}")


# ---------------------------------------------------------------------------
# Theorem-1 deviation

DEVIATION_COLUMNS = ["q3", "q4", "q5", "qd3", "qd4", "qd5", "tau0_x", "tau0_y", "tau0_z"]


def nominal_actual_deviation(actual, nominal, metric=None, columns=DEVIATION_COLUMNS):
    """sup_t of the metric distance between [eta, eta_dot, tau_b0] of two traces.

    Both arguments are ``(time, values)`` pairs or objects with ``column``.
    """
    metric = ManeuverMetric() if metric is None else metric

    def grab(tr):
        if hasattr(tr, "column"):
            return tr.column("t"), np.column_stack([tr.column(c) for c in columns])
        return np.asarray(tr[0], float), np.asarray(tr[1], float)

    ta, va = grab(actual)
    tn, vn = grab(nominal)
    if len(ta) != len(tn) or np.max(np.abs(ta - tn), initial=0.0) > 1e-9:
        raise TraceMisaligned("traces do not share a time grid")
    if not np.array_equal(va[0, :6], vn[0, :6]):
        raise TraceMisaligned("traces do not share the initial condition")
    w = metric.weights(columns)
    return float(np.max(np.linalg.norm((va - vn) * w, axis=1)))
