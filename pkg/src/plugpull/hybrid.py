"""WP/ST/FF hybrid automaton and its event-detecting simulator.

Modes and edges: WP -> ST when the pulling force reaches F_TH (plug
released), ST -> FF once the attitude has recovered and the ST window is
over.  Each mode owns a flow map, a controller and a reference generator;
they are switched together with the mode.

Integration is fixed-step RK4 on the closed loop (plant plus DOB filter
states).  A guard crossing inside a step is located by bisection on the step
length and the reset is applied at the located time.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import control as ctl
from . import dynamics as dyn
from .analysis import fast_variables, quasi_steady_fast
from .errors import EnvelopeExit, NoSeparation
from .spatial import euler_rate_inverse, euler_rate_matrix, euler_to_rotation
from .trajectory import Home, TrajConfig, ff_reference, solve_st_coefficients, st_reference, wp_reference

EVENT_TOL = 1e-6


class Mode(str, Enum):
    WP = "WP"
    ST = "ST"
    FF = "FF"


EDGES = {(Mode.WP, Mode.ST), (Mode.ST, Mode.FF)}


@dataclass
class GuardConfig:
    F_TH: float = 6.65
    delta_eta: float = np.deg2rad(5.0)
    force_separation_at: float = None   # manual WP -> ST trigger time
    wp_enabled: bool = True


@dataclass
class JumpModel:
    """Uniform end-effector velocity jump in a ball of radius ``bound`` (m/s)."""

    bound: float = 0.3

    def sample(self, rng):
        if self.bound <= 0:
            return np.zeros(3)
        d = rng.standard_normal(3)
        d /= np.linalg.norm(d)
        return self.bound * rng.random() ** (1.0 / 3.0) * d


@dataclass
class Envelope:
    """Admissible box of the flight envelope."""

    max_angle: float = np.deg2rad(60.0)   # |phi|, |theta|
    z_min: float = 0.2
    max_speed: float = 2.0                # per axis, m/s
    max_rate: float = 8.0                 # per Euler-rate axis, rad/s
    max_offset: float = 3.0               # horizontal distance from home, m

    def margins(self, q, q_dot, home_p):
        """Signed margins (positive inside) of each bound, in physical units."""
        return {
            "angle": self.max_angle - np.max(np.abs(q[3:5])),
            "z": q[2] - self.z_min,
            "speed": self.max_speed - np.max(np.abs(q_dot[0:3])),
            "rate": self.max_rate - np.max(np.abs(q_dot[3:6])),
            "offset": self.max_offset - np.hypot(q[0] - home_p[0], q[1] - home_p[1]),
        }

    def contains(self, q, q_dot, home_p):
        return min(self.margins(q, q_dot, home_p).values()) >= 0.0


@dataclass
class Disturbance:
    """Generalized disturbance on one free-chart coordinate (index 0..7)."""

    coord: int
    amplitude: float
    kind: str = "constant"        # constant | step | sinusoid
    t_on: float = 0.0
    freq: float = 0.0             # Hz, sinusoid only
    modes: tuple = ("WP", "ST", "FF")

    def value(self, t):
        if self.kind == "constant":
            return self.amplitude
        if self.kind == "step":
            return self.amplitude if t >= self.t_on else 0.0
        if self.kind == "sinusoid":
            return self.amplitude * np.sin(2 * np.pi * self.freq * (t - self.t_on)) if t >= self.t_on else 0.0
        raise ValueError(f"unknown disturbance kind {self.kind!r}")


@dataclass
class Scenario:
    """Everything a run needs, already validated."""

    params: dyn.ArmParams = field(default_factory=dyn.ArmParams)
    nominal: dyn.ArmParams = None
    traj: TrajConfig = field(default_factory=TrajConfig)
    guards: GuardConfig = field(default_factory=GuardConfig)
    jump: JumpModel = field(default_factory=JumpModel)
    envelope: Envelope = field(default_factory=Envelope)
    att_gains: ctl.AttitudeGains = field(default_factory=ctl.AttitudeGains)
    pos_gains: ctl.PositionGains = field(default_factory=ctl.PositionGains)
    att_dob: ctl.DobParams = field(default_factory=ctl.DobParams)
    pos_dob: ctl.DobParams = field(default_factory=lambda: ctl.DobParams(
        a0=4.0, a1=4.0, eps=1.0, s_max=3.0))
    input_model: str = "body"
    dob_enabled: bool = True          # False: nominal-only baseline (Pi forced to zero)
    nominal_plant: bool = False       # WP flow replaced by the nominal model
    disturbances: list = field(default_factory=list)
    gamma_ddot_noise: float = 0.0     # std of the gamma_ddot estimate, rad/s^2
    anchor: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    dt: float = 1e-3
    t_end: float = 12.0
    decimation: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.nominal is None:
            self.nominal = self.params.nominal()
        self.anchor = np.asarray(self.anchor, float).reshape(3)


# ---------------------------------------------------------------------------
# Guards and resets

def guard_wp_st(F_E, cfg):
    return bool(F_E[0] >= cfg.F_TH)


def guard_st_ff(eta, t, t_d_st, cfg):
    return bool(np.linalg.norm(eta) < cfg.delta_eta and t >= t_d_st)


def reset_wp_st(r, r_dot, anchor, params, jump):
    """Embed the pinned state in the free chart and add the velocity jump.

    The jump acts on the end-effector velocity; with eta_dot and gamma_dot
    continuous it maps one-to-one onto the base velocity.
    """
    q, q_dot = dyn.embed_pinned(r, r_dot, anchor, params)
    q_dot = q_dot.copy()
    q_dot[0:3] += jump
    return q, q_dot


def reset_st_ff(q, q_dot):
    return q, q_dot


# ---------------------------------------------------------------------------
# Trace

TRACE_COLUMNS = (
    ["t", "mode"]
    + [f"q{i}" for i in range(8)] + [f"qd{i}" for i in range(8)]
    + ["T", "tau_x", "tau_y", "tau_z", "tau_g1", "tau_g2", "FE_x", "FE_y", "FE_z",
       "eta_d_phi", "eta_d_theta", "eta_d_psi", "u_1", "u_2", "u_3", "pi_1", "pi_2", "pi_3"]
    + [f"xi{i}" for i in range(6)] + [f"zeta{i}" for i in range(6)]
    + ["p_d_x", "p_d_y", "p_d_z", "tau0_x", "tau0_y", "tau0_z",
       "zeta_star_1", "zeta_star_2", "zeta_star_3"]
)


@dataclass
class Event:
    t: float
    edge: tuple
    pre: np.ndarray
    post: np.ndarray
    jump: np.ndarray = None


@dataclass
class HybridTrace:
    rows: list = field(default_factory=list)
    events: list = field(default_factory=list)
    outcome: str = "completed"       # completed | envelope_exit | no_separation
    message: str = ""
    home: Home = None
    seed: int = 0

    def array(self):
        """Numeric rows as an array (mode column encoded 0/1/2)."""
        codes = {"WP": 0, "ST": 1, "FF": 2}
        return np.array([[r[0], codes[r[1]]] + list(r[2:]) for r in self.rows], dtype=float)

    def column(self, name):
        i = TRACE_COLUMNS.index(name)
        if name == "mode":
            return [r[1] for r in self.rows]
        return np.array([r[i] for r in self.rows], dtype=float)

    @property
    def modes(self):
        seq = []
        for r in self.rows:
            if not seq or seq[-1] != r[1]:
                seq.append(r[1])
        return seq

    def event_time(self, edge):
        for e in self.events:
            if e.edge == edge:
                return e.t
        return None


# ---------------------------------------------------------------------------
# Simulator

class HybridSimulator:
    """Closed-loop simulation of one scenario.

    State layout: ``y = [p, eta, p_dot, eta_dot, z_att(12), z_pos(12)]``.
    In WP only the attitude rows and ``z_att`` are integrated; the base
    position and velocity are reconstructed from the pin constraint.
    """

    N = 36

    def __init__(self, scenario, rng=None):
        self.sc = scenario
        self.rng = np.random.default_rng(scenario.seed) if rng is None else rng
        p = scenario.params
        self.gamma = scenario.traj.gamma_d.copy()
        self.gamma_dot = np.zeros(2)
        self.gamma_ddot_hat = np.zeros(2)
        self.m_bar = scenario.nominal.m_total
        self.att_dp = scenario.att_dob
        if not scenario.dob_enabled:
            self.ctl_dp = ctl.DobParams(self.att_dp.a0, self.att_dp.a1, self.att_dp.eps,
                                        self.att_dp.s_max, enabled=False)
        else:
            self.ctl_dp = self.att_dp
        self.sqrtJ = np.sqrt(scenario.nominal.J_b)
        self.sqrtJ_inv = np.linalg.inv(self.sqrtJ)
        self.Jbar = scenario.nominal.J_b
        self.Jbar_inv = np.linalg.inv(self.Jbar)
        self.mode = Mode.WP
        self.home = None
        self.st_coeffs = None
        self.t0_st = None
        self.z_hold = None
        self.pos_dob_on = False
        self._p = p

    # -- helpers ---------------------------------------------------------
    def tau_e(self, t, chart):
        n = 8 if chart == dyn.FREE else 5
        out = np.zeros(n)
        for d in self.sc.disturbances:
            if self.mode.value not in d.modes:
                continue
            if chart == dyn.FREE:
                out[d.coord] += d.value(t)
            elif d.coord >= 3:
                out[d.coord - 3] += d.value(t)
        return out

    def sync_pinned(self, y):
        """Fill the base position/velocity rows from the pin constraint."""
        q, q_dot = dyn.embed_pinned(np.concatenate([y[3:6], self.gamma]),
                                    np.concatenate([y[9:12], self.gamma_dot]),
                                    self.sc.anchor, self._p)
        y[0:3] = q[0:3]
        y[6:9] = q_dot[0:3]
        return y

    def full_state(self, y):
        q = np.concatenate([y[0:3], y[3:6], self.gamma])
        q_dot = np.concatenate([y[6:9], y[9:12], self.gamma_dot])
        return q, q_dot

    def initial_state(self, eta0=None, eta_dot0=None):
        """Perched start at t0_wp with bumpless DOB initialization."""
        y = np.zeros(self.N)
        y[3:6] = np.zeros(3) if eta0 is None else eta0
        y[9:12] = np.zeros(3) if eta_dot0 is None else eta_dot0
        self.sync_pinned(y)
        self.mode = Mode.WP
        self.home = Home(y[0:3].copy(), float(y[5]))
        T, _ = ctl.level_thrust(0.0, y[3:6], self.m_bar, self._p.g, self._p.T_m)
        F_bar, _ = self._wp_nominal(y, T)
        Lam = ctl.lambda_matrix(self.sqrtJ ** 2, euler_rate_matrix(y[3:6]))
        y[12:24] = ctl.bumpless_init(y[3:6], y[9:12], Lam, F_bar, self.att_dp)
        return y

    def _wp_nominal(self, y, T):
        r = np.concatenate([y[3:6], self.gamma])
        rd = np.concatenate([y[9:12], self.gamma_dot])
        return dyn.nominal_attitude_model(r, rd, T, self.gamma_ddot_hat, self.sc.nominal,
                                          self.sc.input_model)

    def _ff_nominal(self, q, q_dot, T):
        return dyn.nominal_free_attitude_model(q, q_dot, T, self.gamma_ddot_hat, self.sc.nominal,
                                               self.sc.input_model)

    def nominal_pair(self, chart, y, T, Q):
        """(F_bar, G_bar, G_bar^-1, (Lambda G_bar)^-1) at the current state.

        In the body input model the inverses are closed-form; otherwise they
        are formed numerically.
        """
        F_bar, G_bar, _, _ = dyn.attitude_model(chart, y[3:6], y[9:12], self.gamma,
                                                self.gamma_dot, self.gamma_ddot_hat, T,
                                                self.sc.nominal)
        if self.sc.input_model == "body":
            G_bar = self.Jbar_inv @ Q.T
            Qi_T = euler_rate_inverse(y[3:6]).T
            G_inv = Qi_T @ self.Jbar
            LG_inv = G_inv @ Qi_T @ self.sqrtJ_inv
        elif self.sc.input_model == "full":
            G_inv = np.linalg.inv(G_bar)
            LG_inv = G_inv @ euler_rate_inverse(y[3:6]) @ self.sqrtJ_inv
        else:
            raise ValueError(f"unknown input_model {self.sc.input_model!r}")
        return F_bar, G_bar, G_inv, LG_inv

    # -- closed-loop vector field ----------------------------------------
    def rhs(self, t, y, want_info=False):
        sc = self.sc
        p = self._p
        dy = np.zeros(self.N)
        eta, eta_dot = y[3:6], y[9:12]
        Q = euler_rate_matrix(eta)
        Lam = self.sqrtJ @ Q
        info = None
        if self.mode == Mode.WP:
            ref = wp_reference(t, sc.traj)
            T, clipped = ctl.level_thrust(0.0, eta, self.m_bar, p.g, p.T_m)
            F_bar, G_bar, G_inv, LG_inv = self.nominal_pair(dyn.PINNED, y, T, Q)
            tau0 = ctl.nominal_attitude_control(eta, eta_dot, ref, F_bar, G_bar, sc.att_gains,
                                                G_inv)
            out = ctl.dob_output(y[12:24], eta, Lam, G_bar, F_bar, tau0, self.ctl_dp, LG_inv)
            tau = np.clip(out.tau, -p.tau_max, p.tau_max)
            tau_e = self.tau_e(t, dyn.PINNED)
            if sc.nominal_plant:
                eta_ddot = F_bar + G_bar @ tau0
            else:
                eta_ddot = dyn.pinned_accel(eta, eta_dot, self.gamma, self.gamma_dot,
                                            np.zeros(2), T, tau, p, tau_e)
            dy[3:6] = eta_dot
            dy[9:12] = eta_ddot
            drive = out.tau_b2 + Lam @ G_bar @ (tau - out.tau)
            dy[12:24] = ctl.filter_rates(y[12:24], eta, drive, self.att_dp)
            if want_info:
                r_ddot = np.concatenate([eta_ddot, np.zeros(2)])
                terms = dyn.el_terms(dyn.PINNED, eta, eta_dot, self.gamma, self.gamma_dot, p)
                F_E = dyn.end_effector_force(terms, r_ddot, T, eta, p)
                tau_g = dyn.servo_torque(terms, r_ddot, np.concatenate([[T], tau]), tau_e)
                info = dict(T=T, tau=tau, tau_g=tau_g, F_E=F_E, eta_d=ref.eta, out=out,
                            tau0=tau0, p_d=np.full(3, np.nan), eta_ddot=eta_ddot,
                            F_bar=F_bar, G_bar=G_bar, Lam=Lam, clipped=clipped, drive=drive)
            return dy, info

        q, q_dot = self.full_state(y)
        if self.mode == Mode.ST:
            ref = st_reference(t, self.st_coeffs, self.t0_st + sc.traj.st_window, self.z_hold)
            pos_z = None
        else:
            ref = ff_reference(t, self.home)
            pos_z = y[24:36] if (self.pos_dob_on and sc.pos_dob.enabled) else None
        u, inf = ctl.st_ff_controller(
            self.mode.value, q, q_dot, ref, lambda T: self.nominal_pair(dyn.FREE, y, T, Q),
            self.m_bar, p.g, p.T_m, sc.att_gains, sc.pos_gains,
            att_dob=self.ctl_dp, att_z=y[12:24], Lam=Lam,
            pos_dob=sc.pos_dob if pos_z is not None else None, pos_z=pos_z)
        T = u[0]
        tau = np.clip(u[1:4], -p.tau_max, p.tau_max)
        tau_e = self.tau_e(t, dyn.FREE)
        acc = dyn.free_accel(eta, eta_dot, self.gamma, self.gamma_dot, np.zeros(2),
                             T, tau, p, tau_e)
        dy[0:3] = y[6:9]
        dy[3:6] = eta_dot
        dy[6:12] = acc
        att = inf["att_dob"]
        # the filter sees the torque actually applied, so saturation cannot wind it up
        drive = att.tau_b2 + Lam @ inf["G_bar"] @ (tau - u[1:4])
        dy[12:24] = ctl.filter_rates(y[12:24], eta, drive, self.att_dp)
        if pos_z is not None:
            dy[24:36] = ctl.filter_rates(pos_z, q[0:3], inf["pos_dob"].tau_b2, sc.pos_dob)
        if want_info:
            q_ddot = np.concatenate([acc, np.zeros(2)])
            terms = dyn.el_terms(dyn.FREE, eta, eta_dot, self.gamma, self.gamma_dot, p)
            tau_g = dyn.servo_torque(terms, q_ddot, np.concatenate([[T], tau]), tau_e)
            p_d = ref.p.copy()
            if self.mode == Mode.ST:
                p_d[0:2] = q[0:2]
            info = dict(T=T, tau=tau, tau_g=tau_g, F_E=np.zeros(3), eta_d=inf["eta_d"], out=att,
                        tau0=inf["tau0"], p_d=p_d, eta_ddot=acc[3:6], F_bar=inf["F_bar"],
                        G_bar=inf["G_bar"], Lam=Lam, clipped=inf["thrust_clipped"], drive=drive)
        return dy, info

    def rk4(self, t, y, h, k1=None):
        if k1 is None:
            k1 = self.rhs(t, y)[0]
        k2 = self.rhs(t + 0.5 * h, y + 0.5 * h * k1)[0]
        k3 = self.rhs(t + 0.5 * h, y + 0.5 * h * k2)[0]
        k4 = self.rhs(t + h, y + h * k3)[0]
        y1 = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if self.mode == Mode.WP:
            self.sync_pinned(y1)
        return y1

    # -- guards ----------------------------------------------------------
    def guard(self, t, y, info=None):
        sc = self.sc
        if self.mode == Mode.WP:
            if sc.guards.force_separation_at is not None:
                return t >= sc.guards.force_separation_at
            if not sc.guards.wp_enabled:
                return False
            if info is None:
                info = self.rhs(t, y, want_info=True)[1]
            return guard_wp_st(info["F_E"], sc.guards)
        if self.mode == Mode.ST:
            return guard_st_ff(y[3:6], t, self.t0_st + sc.traj.st_window, sc.guards)
        return False

    def locate(self, t, y, h, k1):
        """Bisection on the step length; returns (t_event, y_event)."""
        lo, hi = 0.0, h
        y_hi = None
        while hi - lo > EVENT_TOL:
            mid = 0.5 * (lo + hi)
            ym = self.rk4(t, y, mid, k1)
            if self.guard(t + mid, ym):
                hi, y_hi = mid, ym
            else:
                lo = mid
        if y_hi is None:
            y_hi = self.rk4(t, y, hi, k1)
        return t + hi, y_hi

    # -- mode entries ----------------------------------------------------
    def enter_st(self, t, y, jump):
        """Apply the WP -> ST reset and initialize the ST controller."""
        pre = y.copy()
        r = np.concatenate([y[3:6], self.gamma])
        r_dot = np.concatenate([y[9:12], self.gamma_dot])
        q, q_dot = reset_wp_st(r, r_dot, self.sc.anchor, self._p, jump)
        y = y.copy()
        y[0:3], y[6:9] = q[0:3], q_dot[0:3]
        self.start_st(t, y)
        return Event(t, (Mode.WP.value, Mode.ST.value), pre, y.copy(), jump)

    def start_st(self, t, y):
        self.mode = Mode.ST
        self.t0_st = t
        self.st_coeffs = solve_st_coefficients(y[3:6], y[9:12], t, t + self.sc.traj.st_window)
        self.z_hold = y[2]
        q, q_dot = self.full_state(y)
        T, _ = ctl.level_thrust(0.0, y[3:6], self.m_bar, self._p.g, self._p.T_m)
        F_bar, _ = self._ff_nominal(q, q_dot, T)
        Lam = self.sqrtJ @ euler_rate_matrix(y[3:6])
        y[12:24] = ctl.bumpless_init(y[3:6], y[9:12], Lam, F_bar, self.att_dp)
        y[24:36] = 0.0
        self.pos_dob_on = False

    def enter_ff(self, t, y):
        pre = y.copy()
        q, q_dot = reset_st_ff(*self.full_state(y))
        self.mode = Mode.FF
        y = y.copy()
        y[24:36] = ctl.bumpless_init(q[0:3], q_dot[0:3], np.eye(3), np.zeros(3), self.sc.pos_dob)
        self.pos_dob_on = True
        return Event(t, (Mode.ST.value, Mode.FF.value), pre, y.copy())

    # -- logging ---------------------------------------------------------
    def fast_vars(self, y, info):
        fv = fast_variables(y[3:6], y[9:12], y[12:24], info["Lam"], self.att_dp)
        zs = quasi_steady_fast(info["drive"], info["eta_ddot"], info["Lam"])
        return fv.xi, fv.zeta, zs.zeta[0::2]

    def row(self, t, y, info):
        q, q_dot = self.full_state(y)
        xi, zeta, zs = self.fast_vars(y, info)
        out = info["out"]
        return ([float(t), self.mode.value] + list(q) + list(q_dot) + [info["T"]]
                + list(info["tau"]) + list(info["tau_g"]) + list(info["F_E"])
                + list(info["eta_d"]) + list(out.u) + list(out.pi_u) + list(xi) + list(zeta)
                + list(info["p_d"]) + list(info["tau0"]) + list(zs))

    # -- main loop -------------------------------------------------------
    def run(self, y0=None, t0=None, t_end=None, trace=None, jump=None, stop_on_crash=True,
            stop_after=None):
        """Integrate from (t0, y0) in the current mode until t_end.

        ``jump`` overrides the sampled reset jump.  ``stop_after`` may name a
        mode; the run ends at the first transition out of it.
        """
        sc = self.sc
        t = sc.traj.t0_wp if t0 is None else t0
        y = self.initial_state() if y0 is None else np.array(y0, dtype=float)
        t_end = sc.t_end if t_end is None else t_end
        trace = HybridTrace(home=self.home, seed=sc.seed) if trace is None else trace
        dt = sc.dt
        nsteps = int(round((t_end - t) / dt))
        k = 0
        while k < nsteps:
            if sc.gamma_ddot_noise > 0:
                # held over the step; the servos are commanded to hold, so the
                # true gamma_ddot is zero and the estimate is pure noise
                self.gamma_ddot_hat = sc.gamma_ddot_noise * self.rng.standard_normal(2)
            k1, info = self.rhs(t, y, want_info=True)
            if k % sc.decimation == 0:
                trace.rows.append(self.row(t, y, info))
            h = dt
            y1 = self.rk4(t, y, h, k1)
            t1 = t + h
            if self.guard(t1, y1):
                te, ye = self.locate(t, y, h, k1)
                if self.mode == Mode.WP:
                    j = self.jump_sample() if jump is None else np.asarray(jump, float)
                    ev = self.enter_st(te, ye, j)
                else:
                    ev = self.enter_ff(te, ye)
                trace.events.append(ev)
                y, t = ev.post.copy(), te
                # re-align to the fixed grid
                k += 1
                t_grid = (t0 if t0 is not None else sc.traj.t0_wp) + k * dt
                if t_grid > t + 1e-12:
                    y = self.rk4(t, y, t_grid - t)
                    t = t_grid
                if stop_after is not None and ev.edge[0] == stop_after:
                    trace.rows.append(self.row(t, y, self.rhs(t, y, True)[1]))
                    return trace, t, y
            else:
                y, t = y1, t1
                k += 1
            q, q_dot = self.full_state(y)
            if not np.all(np.isfinite(y)) or not sc.envelope.contains(q, q_dot, self.home.p):
                trace.outcome = "envelope_exit"
                trace.message = f"state left the flight envelope at t={t:.4f} in {self.mode.value}"
                try:
                    trace.rows.append(self.row(t, y, self.rhs(t, y, True)[1]))
                except Exception:
                    pass
                if stop_on_crash:
                    return trace, t, y
        k1, info = self.rhs(t, y, want_info=True)
        trace.rows.append(self.row(t, y, info))
        if self.mode == Mode.WP and not trace.events and trace.outcome == "completed":
            trace.outcome = "no_separation"
            trace.message = "WP guard never fired"
        return trace, t, y

    def jump_sample(self):
        return self.sc.jump.sample(self.rng)


def simulate(scenario, raise_on_failure=False, **kw):
    """Run a scenario from the perched start; returns a HybridTrace."""
    sim = HybridSimulator(scenario)
    trace, _, _ = sim.run(**kw)
    if raise_on_failure:
        if trace.outcome == "envelope_exit":
            raise EnvelopeExit(trace.message)
        if trace.outcome == "no_separation":
            raise NoSeparation(trace.message)
    return trace
