"""DOB attitude control for the pinned mode and the cascaded ST/FF controller.

The disturbance observer keeps two banks of per-axis second-order filters,
``q`` driven by the measured output and ``p`` driven by the applied (scaled)
input.  The filter states are stored as ``z = [q11, q12, q21, q22, q31, q32,
p11, p12, ..., p32]`` and are integrated together with the plant.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NonInvertible
from .spatial import euler_to_rotation, rot_z
from .trajectory import Reference

IDENTITY_FRACTION = 0.9
_I3 = np.eye(3)
_Z3 = np.zeros(3)


def saturation_pi(u, s_max):
    """Smooth componentwise saturation.

    Identity for ``|u_i| <= 0.9 s_max_i``; beyond, a tanh blend that is C^1 at
    the knee and tends to ``s_max_i``.  The Jacobian is diagonal with entries
    in (0, 1], so its spectral norm never exceeds one.
    """
    u = np.asarray(u, dtype=float)
    x = np.abs(u)
    knee = IDENTITY_FRACTION * np.asarray(s_max, dtype=float)
    if (x <= knee).all():
        return u.copy()
    s = np.broadcast_to(np.asarray(s_max, dtype=float), u.shape)
    knee = IDENTITY_FRACTION * s
    out = u.copy()
    hi = x > knee
    if hi.any():
        room = s[hi] - knee[hi]
        out[hi] = np.sign(u[hi]) * (knee[hi] + room * np.tanh((x[hi] - knee[hi]) / room))
    return out


def saturation_jacobian(u, s_max):
    u = np.asarray(u, dtype=float)
    s = np.broadcast_to(np.asarray(s_max, dtype=float), u.shape)
    knee = IDENTITY_FRACTION * s
    x = np.abs(u)
    d = np.ones_like(u)
    hi = x > knee
    room = s[hi] - knee[hi]
    d[hi] = 1.0 / np.cosh((x[hi] - knee[hi]) / room) ** 2
    return np.diag(d)


def in_identity_region(u, s_max):
    return bool(np.all(np.abs(u) <= IDENTITY_FRACTION * np.asarray(s_max)))


@dataclass
class AttitudeGains:
    """PD gains of the computed-torque law (critically damped at 12 rad/s)."""

    kp: np.ndarray = field(default_factory=lambda: np.full(3, 144.0))
    kd: np.ndarray = field(default_factory=lambda: np.full(3, 24.0))

    def __post_init__(self):
        self.kp = np.broadcast_to(np.asarray(self.kp, float), (3,)).copy()
        self.kd = np.broadcast_to(np.asarray(self.kd, float), (3,)).copy()


@dataclass
class PositionGains:
    kp: np.ndarray = field(default_factory=lambda: np.full(3, 6.25))
    kd: np.ndarray = field(default_factory=lambda: np.full(3, 5.0))
    max_tilt: float = np.deg2rad(35.0)

    def __post_init__(self):
        self.kp = np.broadcast_to(np.asarray(self.kp, float), (3,)).copy()
        self.kd = np.broadcast_to(np.asarray(self.kd, float), (3,)).copy()


def nominal_attitude_control(eta, eta_dot, ref, F_bar, G_bar, gains, G_bar_inv=None):
    """tau_b0 = G_bar^-1 (eta_dd_d - Kd e_dot - Kp e - F_bar)."""
    v = ref.eta_ddot - gains.kd * (eta_dot - ref.eta_dot) - gains.kp * (eta - ref.eta)
    if G_bar_inv is not None:
        return G_bar_inv @ (v - F_bar)
    return np.linalg.solve(G_bar, v - F_bar)


# ---------------------------------------------------------------------------
# Disturbance observer

@dataclass
class DobParams:
    a0: np.ndarray = field(default_factory=lambda: np.full(3, 100.0))
    a1: np.ndarray = field(default_factory=lambda: np.full(3, 8.0))
    eps: float = 0.02
    s_max: np.ndarray = field(default_factory=lambda: np.full(3, 1.0))
    enabled: bool = True

    def __post_init__(self):
        self.a0 = np.broadcast_to(np.asarray(self.a0, float), (3,)).copy()
        self.a1 = np.broadcast_to(np.asarray(self.a1, float), (3,)).copy()
        self.s_max = np.broadcast_to(np.asarray(self.s_max, float), (3,)).copy()
        if self.eps <= 0 or np.any(self.a0 <= 0) or np.any(self.a1 <= 0):
            raise ValueError("DOB coefficients and eps must be positive")

    def matrices(self, i):
        """(A_i, B_i) of axis i."""
        e = self.eps
        A = np.array([[0.0, 1.0], [-self.a0[i] / e ** 2, -self.a1[i] / e]])
        B = np.array([0.0, self.a0[i] / e ** 2])
        return A, B


def lambda_matrix(J_bar, Q):
    """Lambda = J_bar^(1/2) Q with an elementwise square root (J_bar diagonal)."""
    return np.sqrt(J_bar) @ Q


def _split(z):
    z = np.asarray(z, float)
    return z[0:6].reshape(3, 2), z[6:12].reshape(3, 2)


def filter_rates(z, y, drive, dp):
    """Time derivative of the filter banks for outputs y and inputs drive."""
    k0 = dp.a0 / dp.eps ** 2
    k1 = dp.a1 / dp.eps
    out = np.empty(12)
    out[0:12:2] = z[1:12:2]
    out[1:6:2] = k0 * (y - z[0:6:2]) - k1 * z[1:6:2]
    out[7:12:2] = k0 * (drive - z[6:12:2]) - k1 * z[7:12:2]
    return out


def q2_rate(z, y, dp):
    """q_dot_{i,2}: the filtered second derivative of y."""
    return dp.a0 / dp.eps ** 2 * (y - z[0:6:2]) - dp.a1 / dp.eps * z[1:6:2]


def bumpless_init(y, y_dot, Lam, F_bar, dp):
    """Filter state with zero fast variables and zero DOB output.

    q1 = y - eps (a1/a0) y_dot and q2 = y_dot make q_dot_2 = 0; then
    p1 = -Lambda F_bar gives u = 0.
    """
    y = np.asarray(y, float)
    y_dot = np.asarray(y_dot, float)
    qz = np.column_stack([y - dp.eps * dp.a1 / dp.a0 * y_dot, y_dot])
    pz = np.column_stack([-Lam @ F_bar, np.zeros(3)])
    return np.concatenate([qz.ravel(), pz.ravel()])


@dataclass
class DobOutput:
    tau: np.ndarray      # applied input tau_b
    tau_b2: np.ndarray   # Lambda G_bar tau0 + Pi(u), before torque clipping
    u: np.ndarray
    pi_u: np.ndarray


def dob_output(z, y, Lam, G_bar, F_bar, tau0, dp, LG_inv=None):
    """DOB law: u, tau_b2 and the compensated input.

    ``LG_inv`` may carry a precomputed ``(Lambda G_bar)^-1``.
    """
    u = z[6:12:2] - Lam @ (q2_rate(z, y, dp) - F_bar)
    pi_u = saturation_pi(u, dp.s_max) if dp.enabled else np.zeros(3)
    LG = Lam @ G_bar
    tau_b2 = LG @ tau0 + pi_u
    if LG_inv is not None:
        return DobOutput(tau0 + LG_inv @ pi_u, tau_b2, u, pi_u)
    try:
        tau = tau0 + np.linalg.solve(LG, pi_u)
    except np.linalg.LinAlgError:
        raise NonInvertible("Lambda G_bar is singular") from None
    return DobOutput(tau, tau_b2, u, pi_u)


def dob_step(z, y, tau_b2, dp, dt, y_next=None):
    """Advance the filters one RK4 step with held drive (for standalone use).

    ``y`` may be interpolated linearly to ``y_next`` across the step.
    """
    if dt > dp.eps / 10:
        raise ValueError("dt must not exceed eps/10")
    y0 = np.asarray(y, float)
    y1 = y0 if y_next is None else np.asarray(y_next, float)
    f = lambda zz, s: filter_rates(zz, y0 + s * (y1 - y0), tau_b2, dp)
    k1 = f(z, 0.0)
    k2 = f(z + 0.5 * dt * k1, 0.5)
    k3 = f(z + 0.5 * dt * k2, 0.5)
    k4 = f(z + dt * k3, 1.0)
    return z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


# ---------------------------------------------------------------------------
# Thrust and tilt extraction for ST/FF

def thrust_and_tilt(a_cmd, psi, R, m_bar, g, T_m, max_tilt):
    """Total thrust and (phi_d, theta_d) realizing a desired acceleration.

    Returns ``(T, phi_d, theta_d, clipped)``; thrust is the projection of the
    desired force on the current body z axis.
    """
    f = m_bar * (np.asarray(a_cmd, float) + np.array([0.0, 0.0, g]))
    fb = rot_z(-psi) @ f
    theta_d = np.arctan2(fb[0], fb[2])
    phi_d = np.arctan2(-fb[1], np.hypot(fb[0], fb[2]))
    theta_d = float(np.clip(theta_d, -max_tilt, max_tilt))
    phi_d = float(np.clip(phi_d, -max_tilt, max_tilt))
    T = float(f @ R[:, 2])
    Tc = min(max(T, 0.0), T_m)
    return Tc, phi_d, theta_d, Tc != T


def level_thrust(az, eta, m_bar, g, T_m):
    """Altitude-only thrust m (g + a_z) / (cos phi cos theta), clipped."""
    T = m_bar * (g + az) / (np.cos(eta[0]) * np.cos(eta[1]))
    Tc = min(max(T, 0.0), T_m)
    return Tc, Tc != T


def st_ff_controller(mode, q, q_dot, ref, nominal_model, m_bar, g, T_m, att_gains,
                     pos_gains, att_dob=None, att_z=None, Lam=None, pos_dob=None, pos_z=None):
    """Cascaded position/attitude control for ST and FF.

    ``nominal_model(T) -> (F_bar, G_bar[, G_bar^-1, (Lambda G_bar)^-1])`` evaluates the nominal free-flight
    attitude model at the current state.  ST: attitude from ``ref`` and
    altitude hold only.  FF: position PD (+ translational DOB) produces the
    desired acceleration; thrust and tilt follow from it.
    Returns ``(u = [T, tau_b], info)``.
    """
    p, eta = q[0:3], q[3:6]
    p_dot, eta_dot = q_dot[0:3], q_dot[3:6]
    R = euler_to_rotation(eta)
    info = {}
    if mode == "ST":
        az = pos_gains.kp[2] * (ref.p[2] - p[2]) - pos_gains.kd[2] * p_dot[2]
        T, clipped = level_thrust(az, eta, m_bar, g, T_m)
        ref_att = ref
    else:
        a0 = pos_gains.kp * (ref.p - p) + pos_gains.kd * (ref.p_dot - p_dot)
        a = a0
        if pos_dob is not None and pos_z is not None:
            out = dob_output(pos_z, p, _I3, _I3, _Z3, a0, pos_dob, _I3)
            a = out.tau
            info["pos_dob"] = out
        T, phi_d, theta_d, clipped = thrust_and_tilt(a, ref.psi, R, m_bar, g, T_m,
                                                     pos_gains.max_tilt)
        ref_att = Reference(np.array([phi_d, theta_d, ref.psi]), np.zeros(3), np.zeros(3),
                            p=ref.p, p_dot=ref.p_dot, psi=ref.psi)
    nm = nominal_model(T)
    F_bar, G_bar = nm[0], nm[1]
    G_inv, LG_inv = (nm[2], nm[3]) if len(nm) > 2 else (None, None)
    tau0 = nominal_attitude_control(eta, eta_dot, ref_att, F_bar, G_bar, att_gains, G_inv)
    tau = tau0
    if att_dob is not None and att_z is not None:
        out = dob_output(att_z, eta, Lam, G_bar, F_bar, tau0, att_dob, LG_inv)
        tau = out.tau
        info["att_dob"] = out
    info.update(tau0=tau0, eta_d=ref_att.eta, F_bar=F_bar, G_bar=G_bar, thrust_clipped=clipped)
    return np.concatenate([[T], tau]), info
