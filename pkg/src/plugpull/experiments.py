"""Simulation-driven studies: s_max estimation, replication summary, sector
scan, epsilon sweep, reset Monte Carlo and the DOB/baseline comparison."""

import copy
import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analysis as an
from . import dynamics as dyn
from . import hybrid as hy
from .errors import NoSeparation

C = hy.TRACE_COLUMNS
_IDX = {c: i for i, c in enumerate(C)}


def parallel_map(fn, arg_tuples, jobs=1):
    """``[fn(*a) for a in arg_tuples]``, in worker processes when ``jobs > 1``."""
    if jobs <= 1 or len(arg_tuples) <= 1:
        return [fn(*a) for a in arg_tuples]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*arg_tuples)))


def _cols(A, names):
    return A[:, [_IDX[c] for c in names]]


def clone(scenario, **changes):
    sc = copy.deepcopy(scenario)
    for k, v in changes.items():
        setattr(sc, k, v)
    return sc


def _row_state(r):
    """(eta, eta_dot, gamma, gamma_dot, T, tau0) from a numeric trace row."""
    return (r[_IDX["q3"]:_IDX["q5"] + 1], r[_IDX["qd3"]:_IDX["qd5"] + 1],
            r[_IDX["q6"]:_IDX["q7"] + 1], r[_IDX["qd6"]:_IDX["qd7"] + 1],
            r[_IDX["T"]], _cols(r[None], ["tau0_x", "tau0_y", "tau0_z"])[0])


def wp_contexts(scenario, trace):
    """Attitude contexts at every logged WP row."""
    A = trace.array()
    out = []
    for r in A[A[:, 1] == 0]:
        eta, ed, g, gd, T, tau0 = _row_state(r)
        tau_e = None
        if scenario.disturbances:
            sim = hy.HybridSimulator(scenario)
            tau_e = sim.tau_e(r[0], dyn.PINNED)
        out.append((r[0], an.attitude_context(eta, ed, g, gd, T, tau0, scenario.params,
                                              scenario.nominal, scenario.input_model, tau_e)))
    return out


# ---------------------------------------------------------------------------
# Saturation design set

def estimate_s_max(scenario, factor=1.5, floor=1.0):
    """Componentwise 1.5x envelope of u* along a preliminary unsaturated WP run."""
    sc = clone(scenario)
    sc.att_dob = copy.deepcopy(scenario.att_dob)
    sc.att_dob.s_max = np.full(3, np.inf)
    trace, _, _ = hy.HybridSimulator(sc).run(stop_after="WP")
    us = [an.quasi_steady_ustar(ctx).u for _, ctx in wp_contexts(sc, trace)]
    env = np.max(np.abs(us), axis=0)
    return np.maximum(factor * env, floor)


# ---------------------------------------------------------------------------
# Replication

@dataclass
class RunSummary:
    outcome: str
    modes: list
    t_separation: float = None
    theta_separation: float = None   # rad
    t_ff: float = None
    peak_wp_error: float = None      # max |eta - eta_d| in WP, rad
    peak_post_attitude: float = None # max(|phi|, |theta|) after separation, rad
    recovery_time: float = None      # separation -> |eta| < delta_eta for good
    final_position_error: float = None

    def lines(self):
        out = []
        for k, v in self.__dict__.items():
            if isinstance(v, float):
                v = f"{v:.10g}"
            elif isinstance(v, list):
                v = ",".join(v)
            out.append(f"{k}={v}")
        return out


def summarize(trace, scenario):
    A = trace.array()
    s = RunSummary(trace.outcome, trace.modes)
    wp = A[:, 1] == 0
    if wp.any():
        err = _cols(A[wp], ["q3", "q4", "q5"]) - _cols(A[wp], ["eta_d_phi", "eta_d_theta", "eta_d_psi"])
        s.peak_wp_error = float(np.abs(err).max())
    ev = [e for e in trace.events if e.edge == ("WP", "ST")]
    if ev:
        s.t_separation = ev[0].t
        s.theta_separation = float(ev[0].pre[4])
        post = A[A[:, 0] >= ev[0].t]
        att = np.abs(_cols(post, ["q3", "q4"])).max(axis=1)
        s.peak_post_attitude = float(att.max())
        norms = np.linalg.norm(_cols(post, ["q3", "q4", "q5"]), axis=1)
        outside = np.nonzero(norms >= scenario.guards.delta_eta)[0]
        if len(outside) == 0:
            s.recovery_time = 0.0
        elif outside[-1] + 1 < len(post):
            s.recovery_time = float(post[outside[-1] + 1, 0] - ev[0].t)
    s.t_ff = trace.event_time(("ST", "FF"))
    if trace.home is not None and len(A):
        s.final_position_error = float(np.linalg.norm(_cols(A[-1:], ["q0", "q1", "q2"])[0] - trace.home.p))
    return s


def separation_time(scenario):
    trace, _, _ = hy.HybridSimulator(scenario).run(stop_after="WP")
    t = trace.event_time(("WP", "ST"))
    if t is None:
        raise NoSeparation("WP guard never fired")
    return t


def dt_halving_shift(scenario):
    """|t_sep(dt) - t_sep(dt/2)|."""
    t1 = separation_time(scenario)
    t2 = separation_time(clone(scenario, dt=scenario.dt / 2, decimation=scenario.decimation * 2))
    return abs(t1 - t2), t1, t2


# ---------------------------------------------------------------------------
# Sector condition along a trace

def sector_scan(scenario, trace, rng=None, n_delta=16):
    """Sector reports at every logged WP state."""
    rng = np.random.default_rng(scenario.seed) if rng is None else rng
    A = trace.array()
    reps = []
    for (t, ctx), r in zip(wp_contexts(scenario, trace), A[A[:, 1] == 0]):
        eta, _, g, _, _, _ = _row_state(r)
        reps.append(an.gamma_sector_check(ctx, eta, g, scenario.params, scenario.nominal.J_b,
                                          scenario.att_dob.s_max, rng, n_delta))
    return reps


def sector_grid(params, nominal, theta_m, n=5, input_model="body"):
    """Sector reports on a grid of hover-thrust pinned states (phi, theta)."""
    reps = []
    T = nominal.m_total * params.g
    for phi in np.linspace(-0.1, 0.1, 3):
        for th in np.linspace(-theta_m, 0.0, n):
            eta = np.array([phi, th, 0.0])
            ctx = an.attitude_context(eta, np.zeros(3), np.zeros(2), np.zeros(2), T, np.zeros(3),
                                      params, nominal, input_model)
            reps.append(an.gamma_sector_check(ctx, eta, np.zeros(2), params, nominal.J_b,
                                              np.full(3, 10.0), n_delta=8))
    return reps


# ---------------------------------------------------------------------------
# Epsilon sweep

# [xi_1 per axis, xi_2 per axis]; zeta starts on its quasi-steady value so the
# observer output, and hence the plant, is not kicked
DEFAULT_PERTURBATION = np.array([0.5, 0.5, 0.5, 0.5, 0.5, 0.5])


def _eps_scenario(scenario, eps, dt=None):
    sc = clone(scenario)
    sc.att_dob = copy.deepcopy(scenario.att_dob)
    sc.att_dob.eps = eps
    sc.guards = copy.deepcopy(scenario.guards)
    sc.guards.wp_enabled = False
    sc.guards.force_separation_at = None
    if dt is not None:
        sc.dt = dt
    return sc


def fast_norm(trace):
    """|(xi~, zeta~)| per row: deviation from the quasi-steady fast state."""
    A = trace.array()
    xi = _cols(A, [f"xi{i}" for i in range(6)])
    zeta = _cols(A, [f"zeta{i}" for i in range(6)])
    zeta[:, 0::2] -= _cols(A, ["zeta_star_1", "zeta_star_2", "zeta_star_3"])
    return A[:, 0], np.linalg.norm(np.hstack([xi, zeta]), axis=1)


def decay_run(scenario, eps, horizon=0.5, steps_per_eps=40, perturbation=DEFAULT_PERTURBATION):
    """Perched hold from a filter state perturbed in fast coordinates.

    The run ends where the pitch ramp would start, so the quasi-steady fast
    state is constant and the residual floor is set by rounding only.
    """
    sc = _eps_scenario(scenario, eps, dt=eps / steps_per_eps)
    sc.decimation = 1
    sim = hy.HybridSimulator(sc)
    y = sim.initial_state()
    t_stop = sc.traj.t0_wp - sc.dt
    t0 = t_stop - horizon
    info = sim.rhs(t0, y, want_info=True)[1]
    fv = an.fast_variables(y[3:6], y[9:12], y[12:24], info["Lam"], sc.att_dob)
    zs = an.quasi_steady_fast(info["drive"], info["eta_ddot"], info["Lam"])
    fv.xi = fv.xi + np.concatenate([perturbation[0:3, None], perturbation[3:6, None]], axis=1).ravel()
    fv.zeta = zs.zeta
    y[12:24] = an.filter_from_fast(fv, y[3:6], y[9:12], info["Lam"], sc.att_dob)
    trace, _, _ = sim.run(y0=y, t0=t0, t_end=t_stop)
    return trace


@dataclass
class SweepRow:
    eps: float
    fit: an.DecayFit
    deviation: float
    ratio: float = None


def deviation_run(scenario, eps, t_span=3.0, dt=None):
    """sup-deviation between actual and nominal-plant closed loops in WP."""
    sc = _eps_scenario(scenario, eps, dt)
    sc.t_end = sc.traj.t0_wp + t_span
    act, _, _ = hy.HybridSimulator(sc).run()
    nom, _, _ = hy.HybridSimulator(clone(sc, nominal_plant=True)).run()
    return an.nominal_actual_deviation(act, nom), act, nom


def _sweep_row(scenario, eps, horizon, t_span, dt):
    t, norm = fast_norm(decay_run(scenario, eps, horizon))
    fit = an.fast_decay_fit(t, norm, eps)
    dev, _, _ = deviation_run(scenario, eps, t_span, dt)
    return SweepRow(eps, fit, dev)


def epsilon_sweep(scenario, eps_list=(0.04, 0.02, 0.01), horizon=0.5, t_span=3.0, dt=None,
                  disturbances=None, jobs=1):
    """Decay fit and nominal/actual deviation per eps, largest eps first.

    ``disturbances`` replaces the scenario's disturbance list for the sweep.
    """
    if disturbances is not None:
        scenario = clone(scenario, disturbances=list(disturbances))
    eps_list = sorted(eps_list, reverse=True)
    dt = min(scenario.dt, min(eps_list) / 10) if dt is None else dt
    rows = parallel_map(_sweep_row, [(scenario, e, horizon, t_span, dt) for e in eps_list], jobs)
    for a, b in zip(rows, rows[1:]):
        b.ratio = b.fit.rate / a.fit.rate
    return rows


# ---------------------------------------------------------------------------
# Robust transition pipeline

@dataclass
class TransitionReport:
    approach: an.Verdict
    transition: an.Verdict
    n_samples: int
    n_centers: int
    coverage_radius: float
    post_margins: list
    centers: np.ndarray
    reset_images: np.ndarray
    metric: an.ManeuverMetric
    wp_single: an.Verdict = None
    extras: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.transition.passed

    def lines(self):
        out = [f"n_samples={self.n_samples}", f"n_centers={self.n_centers}",
               f"coverage_radius={self.coverage_radius:.6g}",
               "metric=" + ",".join(f"{k}:{v:g}" for k, v in self.metric.as_dict().items())]
        if self.wp_single is not None:
            out += self.wp_single.lines()
        out += self.approach.lines() + self.transition.lines()
        out += [f"post_margin[{j}]={m:.6g}" for j, m in enumerate(self.post_margins)]
        return out


STATE_COLUMNS = [f"q{i}" for i in range(8)] + [f"qd{i}" for i in range(8)]


def _unit_ball(rng, dim):
    d = rng.standard_normal(dim)
    return d / np.linalg.norm(d) * rng.random() ** (1.0 / dim)


def sample_reset_images(scenario, pre, sim, sigma, n_samples, metric, rng, budget_factor=20):
    """Sample S^WP in the sigma-ball of the terminal WP point and map it through the reset.

    The ball is taken over (eta, eta_dot); a candidate belongs to the guard
    when the simulated end-effector force at that state reaches F_TH.
    Returns ``(images, post_guard_distances, attempts)``.
    """
    sc = scenario
    ev = [e for e in pre.events if e.edge == ("WP", "ST")][0]
    t_sep = ev.t
    w6 = np.array([metric.rad] * 3 + [metric.rad_s] * 3)
    probe = hy.HybridSimulator(sc)
    probe.home = sim.home
    t_d_st = t_sep + sc.traj.st_window
    images, post_d, attempts = [], [], 0
    budget = budget_factor * n_samples
    while len(images) < n_samples:
        attempts += 1
        an.check_sampling_budget(attempts, budget)
        d = sigma * _unit_ball(rng, 6) / w6
        y = ev.pre.copy()
        y[3:6] += d[0:3]
        y[9:12] += d[3:6]
        probe.sync_pinned(y)
        F_E = probe.rhs(t_sep, y, want_info=True)[1]["F_E"]
        if not hy.guard_wp_st(F_E, sc.guards):
            continue
        r = np.concatenate([y[3:6], probe.gamma])
        r_dot = np.concatenate([y[9:12], probe.gamma_dot])
        q, q_dot = hy.reset_wp_st(r, r_dot, sc.anchor, sc.params, sc.jump.sample(rng))
        images.append(np.concatenate([q, q_dot]))
        # the ST guard depends on time and attitude only, so u_f plays no role
        post_d.append(an.st_guard_distance(q[3:6], t_sep, t_d_st, sc.guards.delta_eta, metric))
    return np.array(images), np.array(post_d), attempts


def transition_check(scenario, n_samples=500, sigma=0.05, delta_sigma=0.08, metric=None,
                     post_horizon=1.0, max_centers=64, budget_factor=20,
                     fail_fast=False, rng=None, jobs=1):
    """Robust-maneuver check of the WP -> ST transition of ``scenario``.

    ``jobs > 1`` runs the center post-traces in worker processes; the result
    does not depend on it.
    """
    metric = an.ManeuverMetric() if metric is None else metric
    rng = np.random.default_rng(scenario.seed) if rng is None else rng
    sc = scenario
    # nominal pre-trace up to separation
    sim = hy.HybridSimulator(sc)
    pre, t_sep, _ = sim.run(stop_after="WP")
    if pre.event_time(("WP", "ST")) is None:
        raise NoSeparation("WP guard never fired in the pre-trace")
    t_sep = pre.event_time(("WP", "ST"))
    A = pre.array()
    wp_rows = A[A[:, 1] == 0]
    wp_dist = an.wp_guard_distance(wp_rows[:, _IDX["FE_x"]], sc.guards.F_TH, metric)[:, None]
    wp_single = an.check_single_maneuver(wp_dist, sigma, "wp_single")

    # (b) continue the ramp with the guard disabled
    ext_sc = clone(sc)
    ext_sc.guards = copy.deepcopy(sc.guards)
    ext_sc.guards.wp_enabled = False
    ext_sc.guards.force_separation_at = None
    ext_sc.t_end = sc.traj.td_wp
    ext, _, _ = hy.HybridSimulator(ext_sc).run()
    ext_d = an.wp_guard_distance(ext.column("FE_x"), sc.guards.F_TH, metric)
    sufficient = 0.0 < sc.guards.F_TH < sc.params.T_m * np.sin(sc.traj.theta_m)

    # (c) reset images of S^WP
    images, post_d, attempts = sample_reset_images(sc, pre, sim, sigma, n_samples, metric, rng,
                                                   budget_factor)
    approach = an.check_approach_maneuver(an.ApproachInputs(
        np.zeros((len(wp_rows), 0)), ext_d, images, post_d, attempts, sufficient), sigma)

    # coverage set on the reset image
    wq = metric.weights(STATE_COLUMNS)
    centers, _ = an.build_coverage_set(images, delta_sigma, wq)
    radius, _ = an.verify_coverage(images, centers, delta_sigma, wq)

    # one post-trace per center
    args = [(sc, images[c], t_sep, sim.home, metric, post_horizon) for c in centers]
    if jobs > 1:
        margins = parallel_map(post_trace_margin, args, jobs)
        if fail_fast:
            bad = [j for j, m in enumerate(margins) if m <= sigma]
            margins = margins[:bad[0] + 1] if bad else margins
    else:
        margins = []
        for a in args:
            margins.append(post_trace_margin(*a))
            if fail_fast and margins[-1] <= sigma:
                break
    transition = an.check_transition_maneuver(approach, margins, sigma, delta_sigma,
                                              len(centers), max_centers)
    transition.detail["offending_states"] = [np.round(images[centers[j]][8:11], 4).tolist()
                                             for j in transition.detail["offending_centers"]]
    return TransitionReport(approach, transition, n_samples, len(centers), radius, margins,
                            centers, images, metric, wp_single,
                            {"t_separation": t_sep, "attempts": attempts})


def post_trace(scenario, x_plus, t0, home, horizon):
    sim = hy.HybridSimulator(scenario)
    sim.home = home
    y = np.zeros(sim.N)
    y[0:6] = x_plus[0:6]
    y[6:12] = x_plus[8:14]
    sim.gamma = x_plus[6:8].copy()
    sim.gamma_dot = x_plus[14:16].copy()
    sim.start_st(t0, y)
    trace = hy.HybridTrace(home=home, seed=scenario.seed)
    trace, _, _ = sim.run(y0=y, t0=t0, t_end=t0 + scenario.traj.st_window + horizon, trace=trace)
    return trace


def post_trace_margin(scenario, x_plus, t0, home, metric, horizon):
    """Minimum metric clearance of a center post-trace from the envelope boundary.

    ST's only outgoing edge is its own terminal transition and FF has none,
    so the envelope is the binding obstacle.
    """
    tr = post_trace(scenario, x_plus, t0, home, horizon)
    A = tr.array()
    q = _cols(A, [f"q{i}" for i in range(8)])
    qd = _cols(A, [f"qd{i}" for i in range(8)])
    m = min(an.envelope_margin(scenario.envelope, a, b, home.p, metric) for a, b in zip(q, qd))
    if tr.outcome != "completed":
        m = min(m, -abs(m) - 1e-12)
    return float(m)


# ---------------------------------------------------------------------------
# DOB vs nominal-only baseline

@dataclass
class BaselineComparison:
    dob: RunSummary
    baseline: RunSummary
    sup_deviation: float

    def lines(self):
        return ([f"dob.{l}" for l in self.dob.lines()] + [f"baseline.{l}" for l in self.baseline.lines()]
                + [f"sup_deviation={self.sup_deviation:.6g}"])


def compare_baseline(scenario, pin_separation=False):
    """Same scenario with the observer output Pi forced to zero.

    With ``pin_separation`` the baseline separates at the DOB run's
    separation instant, so both runs share the same discrete events and
    the comparison measures only the continuous behavior.
    """
    t_dob = hy.simulate(scenario)
    base = clone(scenario, dob_enabled=False)
    if pin_separation:
        t_sep = t_dob.event_time(("WP", "ST"))
        if t_sep is not None:
            base.guards = dataclasses.replace(base.guards, force_separation_at=t_sep)
    t_base = hy.simulate(base)
    A, B = t_dob.array(), t_base.array()
    n = min(len(A), len(B))
    cols = [_IDX[c] for c in an.DEVIATION_COLUMNS]
    dev = float(np.max(np.abs(A[:n, cols] - B[:n, cols]))) if n else np.inf
    return BaselineComparison(summarize(t_dob, scenario), summarize(t_base, scenario), dev), t_dob, t_base
