"""Euler-Lagrange dynamics of the multirotor with a 2-DOF planar arm.

Two charts are used:

* free flight, ``q = [p_IB, eta, gamma]`` (8 DOF);
* wire pulling, ``r = [eta, gamma]`` (5 DOF) with the end-effector pinned at a
  fixed anchor ``p_IE``, so that ``p_IB = p_IE - R_IB p_BE(gamma)``.

The heavy lifting (mass matrix, velocity-product terms, gravity and input
Jacobian) lives in a compiled kernel with a pure-Python fallback; set
``PLUGPULL_PURE_PYTHON=1`` to force the fallback.
"""

import os
from dataclasses import dataclass, field, replace

import numpy as np

from ._kernels_py import arm_offsets as _offset_jacobians
from .errors import SingularMass
from .spatial import check_gimbal, euler_rate_matrix, euler_to_rotation, rot_y, skew

if os.environ.get("PLUGPULL_PURE_PYTHON"):
    from ._kernels_py import attitude_model as _attitude_model, el_terms as _el_terms
    KERNEL = "python"
else:
    try:
        from ._kernels_c import attitude_model as _attitude_model, el_terms as _el_terms
        KERNEL = "cython"
    except ImportError:  # extension not built
        from ._kernels_py import attitude_model as _attitude_model, el_terms as _el_terms
        KERNEL = "python"

FREE, PINNED = 0, 1
E3 = np.array([0.0, 0.0, 1.0])
MIN_EIG = 1e-9


def _diag3(*v):
    return field(default_factory=lambda: np.diag(np.array(v, dtype=float)))


@dataclass
class ArmParams:
    """Physical parameters of the vehicle, arm and end-effector.

    ``J_b_bar`` is the nominal body inertia used by the controller; it
    defaults to ``0.8 * J_b``.
    """

    m_b: float = 2.4
    m_1: float = 0.12
    m_2: float = 0.12
    l1: float = 0.12
    l2: float = 0.12
    mount: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -0.05]))
    J_b: np.ndarray = _diag3(0.021, 0.022, 0.033)
    J_1: np.ndarray = _diag3(2e-5, 2e-5, 2e-5)
    J_2: np.ndarray = _diag3(2e-5, 2e-5, 2e-5)
    J_E: np.ndarray = _diag3(1e-5, 1e-5, 1e-5)
    g: float = 9.81
    J_b_bar: np.ndarray = None
    T_m: float = 40.0
    tau_max: np.ndarray = field(default_factory=lambda: np.array([3.0, 3.0, 1.5]))

    def __post_init__(self):
        self.mount = np.asarray(self.mount, dtype=float).reshape(3)
        for name in ("J_b", "J_1", "J_2", "J_E"):
            setattr(self, name, _as_inertia(getattr(self, name)))
        if self.J_b_bar is None:
            self.J_b_bar = 0.8 * self.J_b
        self.J_b_bar = _as_inertia(self.J_b_bar)
        self.tau_max = np.asarray(self.tau_max, dtype=float).reshape(3)
        self._geo = None

    @property
    def m_total(self):
        return self.m_b + self.m_1 + self.m_2

    def kernel_vector(self):
        """Flat float64 geometry/inertia vector consumed by the kernels."""
        if self._geo is None:
            self._geo = np.concatenate([
                self.mount, [self.l1, self.l2, self.m_b, self.m_1, self.m_2, self.g],
                self.J_b.ravel(), self.J_1.ravel(), self.J_2.ravel(), self.J_E.ravel(),
            ]).astype(float)
        return self._geo

    def nominal(self, **overrides):
        """Parameter set seen by the controller: J_b replaced by J_b_bar."""
        kw = dict(J_b=self.J_b_bar.copy(), J_b_bar=self.J_b_bar.copy())
        kw.update(overrides)
        return replace(self, **kw)

    def check(self):
        """Raise ValueError if the parameter record is physically invalid."""
        if min(self.m_b, self.m_1, self.m_2) <= 0:
            raise ValueError("masses must be positive")
        if min(self.l1, self.l2) <= 0:
            raise ValueError("link lengths must be positive")
        for name in ("J_b", "J_1", "J_2", "J_E", "J_b_bar"):
            J = getattr(self, name)
            if not np.allclose(J, J.T) or np.linalg.eigvalsh(J).min() <= 0:
                raise ValueError(f"{name} must be symmetric positive definite")
        if self.T_m <= 0 or self.g <= 0:
            raise ValueError("T_m and g must be positive")


def _as_inertia(J):
    J = np.asarray(J, dtype=float)
    if J.shape == (3,):
        J = np.diag(J)
    return J.reshape(3, 3)


@dataclass(frozen=True)
class ELTerms:
    """Euler-Lagrange terms ``M qdd + C + K = Ju^T u_f + tau_e``."""

    M: np.ndarray
    C: np.ndarray
    K: np.ndarray
    Ju: np.ndarray
    P: np.ndarray       # sum of m_k Jv_k
    pbias: np.ndarray   # sum of m_k Jv_k_dot qdot
    JvE: np.ndarray
    aE: np.ndarray


def el_terms(chart, eta, eta_dot, gamma, gamma_dot, params):
    check_gimbal(eta[1])
    return ELTerms(*_el_terms(chart, np.asarray(eta, float), np.asarray(eta_dot, float),
                              np.asarray(gamma, float), np.asarray(gamma_dot, float),
                              params.kernel_vector()))


def _check_mass(M):
    if np.linalg.eigvalsh(M).min() < MIN_EIG:
        raise SingularMass(f"mass matrix min eigenvalue below {MIN_EIG}")


def _solve(M, b):
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise SingularMass("mass matrix is not positive definite") from None
    return np.linalg.solve(L.T, np.linalg.solve(L, b))


# ---------------------------------------------------------------------------
# Kinematics

def arm_offsets(gamma, params):
    """Body-frame positions of link-1 CoM, link-2 CoM and the end-effector."""
    R1 = rot_y(gamma[0])
    R2 = rot_y(gamma[0] + gamma[1])
    d1 = np.array([0.0, 0.0, -params.l1])
    d2 = np.array([0.0, 0.0, -params.l2])
    j2 = params.mount + R1 @ d1
    return params.mount + 0.5 * R1 @ d1, j2 + 0.5 * R2 @ d2, j2 + R2 @ d2


def end_effector_offset(gamma, gamma_dot, params):
    """p_BE in {B} and its time derivative."""
    a1, a12 = gamma[0], gamma[0] + gamma[1]
    w1, w12 = gamma_dot[0], gamma_dot[0] + gamma_dot[1]
    s = params.mount + np.array([-params.l1 * np.sin(a1) - params.l2 * np.sin(a12), 0.0,
                                 -params.l1 * np.cos(a1) - params.l2 * np.cos(a12)])
    sd = np.array([-params.l1 * np.cos(a1) * w1 - params.l2 * np.cos(a12) * w12, 0.0,
                   params.l1 * np.sin(a1) * w1 + params.l2 * np.sin(a12) * w12])
    return s, sd


def link_kinematics(eta, eta_dot, gamma, gamma_dot, params, p=None, p_dot=None, anchor=None):
    """Poses and velocities of {B}, {1}, {2}, {E}.

    Give ``p, p_dot`` for the free chart or ``anchor`` for the pinned chart.
    Angular velocities are expressed in each body's own frame.
    """
    R = euler_to_rotation(eta)
    Q = euler_rate_matrix(eta)
    w = Q @ eta_dot
    sE, sE_dot = end_effector_offset(gamma, gamma_dot, params)
    if anchor is not None:
        p = np.asarray(anchor, float) - R @ sE
        p_dot = -R @ (np.cross(w, sE) + sE_dot)
    p = np.asarray(p, float)
    p_dot = np.asarray(p_dot, float)

    s, S, _ = _offset_jacobians(np.asarray(gamma, float), np.asarray(gamma_dot, float),
                                params.kernel_vector())
    R1 = rot_y(gamma[0])
    R2 = rot_y(gamma[0] + gamma[1])
    ey = np.array([0.0, 1.0, 0.0])
    out = {"R_IB": R, "p_IB": p, "v_IB": p_dot, "omega_B": w}
    for k, name in ((1, "1"), (2, "2"), (3, "E")):
        out["p_I" + name] = p + R @ s[k]
        out["v_I" + name] = p_dot + R @ (np.cross(w, s[k]) + S[k] @ gamma_dot)
    out["omega_1"] = R1.T @ (w + ey * gamma_dot[0])
    out["omega_2"] = R2.T @ (w + ey * (gamma_dot[0] + gamma_dot[1]))
    out["omega_E"] = out["omega_2"].copy()
    return out


def embed_pinned(r, r_dot, anchor, params):
    """Map a pinned state (r, r_dot) into the free chart (q, q_dot)."""
    eta, gamma = r[0:3], r[3:5]
    eta_dot, gamma_dot = r_dot[0:3], r_dot[3:5]
    kin = link_kinematics(eta, eta_dot, gamma, gamma_dot, params, anchor=anchor)
    q = np.concatenate([kin["p_IB"], eta, gamma])
    q_dot = np.concatenate([kin["v_IB"], eta_dot, gamma_dot])
    return q, q_dot


# ---------------------------------------------------------------------------
# Full flows

def free_flight_terms(q, q_dot, params):
    t = el_terms(FREE, q[3:6], q_dot[3:6], q[6:8], q_dot[6:8], params)
    _check_mass(t.M)
    return t


def wire_pulling_terms(r, r_dot, params):
    t = el_terms(PINNED, r[0:3], r_dot[0:3], r[3:5], r_dot[3:5], params)
    _check_mass(t.M)
    return t


def _flow(t, u_f, tau_e):
    rhs = -t.C - t.K + t.Ju.T @ np.asarray(u_f, float)
    if tau_e is not None:
        rhs = rhs + tau_e
    return _solve(t.M, rhs)


def free_flight_flow(q, q_dot, u_f, params, tau_e=None):
    """q_ddot = M_q^-1 (-C_q - K_q + J_uq^T u_f + tau_e,q)."""
    return _flow(free_flight_terms(q, q_dot, params), u_f, tau_e)


def wire_pulling_flow(r, r_dot, u_f, params, tau_e=None):
    """r_ddot = M_r^-1 (-C_r - K_r + J_ur^T u_f + tau_e,r)."""
    return _flow(wire_pulling_terms(r, r_dot, params), u_f, tau_e)


# ---------------------------------------------------------------------------
# Servo-prescribed flows (gamma follows its command kinematically)

def attitude_model(chart, eta, eta_dot, gamma, gamma_dot, gamma_ddot, T, params, tau_e=None):
    """Kernel-level (F, G, Fp, Gp) with gamma prescribed (see the kernel docs)."""
    check_gimbal(eta[1])
    try:
        return _attitude_model(chart, np.asarray(eta, float), np.asarray(eta_dot, float),
                               np.asarray(gamma, float), np.asarray(gamma_dot, float),
                               np.asarray(gamma_ddot, float), float(T), tau_e,
                               params.kernel_vector())
    except np.linalg.LinAlgError:
        raise SingularMass("mass matrix is not positive definite") from None


def pinned_accel(eta, eta_dot, gamma, gamma_dot, gamma_ddot, T, tau_b, params, tau_e=None):
    """eta_ddot in the pinned chart with gamma prescribed.

    ``tau_e`` is a 5-vector generalized disturbance (only its eta rows act).
    """
    F, G, _, _ = attitude_model(PINNED, eta, eta_dot, gamma, gamma_dot, gamma_ddot, T,
                                params, tau_e)
    return F + G @ tau_b


def free_accel(eta, eta_dot, gamma, gamma_dot, gamma_ddot, T, tau_b, params, tau_e=None):
    """[p_ddot, eta_ddot] in free flight with gamma prescribed."""
    F, G, Fp, Gp = attitude_model(FREE, eta, eta_dot, gamma, gamma_dot, gamma_ddot, T,
                                  params, tau_e)
    return np.concatenate([Fp + Gp @ tau_b, F + G @ tau_b])


def servo_torque(terms, r_ddot, u_f_partial, tau_e=None):
    """Joint torques tau_gamma consistent with a full acceleration vector.

    ``u_f_partial`` is ``[T, tau_b]``; the gamma rows of the EL equation are
    solved for the two servo torques.
    """
    n = terms.M.shape[0]
    res = terms.M[n - 2:] @ r_ddot + terms.C[n - 2:] + terms.K[n - 2:]
    res -= terms.Ju[0:4, n - 2:].T @ np.asarray(u_f_partial, float)
    if tau_e is not None:
        res -= tau_e[n - 2:]
    return res


# ---------------------------------------------------------------------------
# Attitude submodels

def attitude_submodel(r, r_dot, T, gamma_ddot, params, tau_e=None):
    """(F_eta, G_eta) with eta_ddot = F_eta + G_eta tau_b in the pinned chart.

    G_eta = M_eta^-1 Q^T and F_eta = M_eta^-1 (-C_eta - K_eta - M_eta,gamma
    gamma_ddot + J_T,eta^T T + tau_e,eta).
    """
    F, G, _, _ = attitude_model(PINNED, r[0:3], r_dot[0:3], r[3:5], r_dot[3:5], gamma_ddot, T,
                                params, tau_e)
    return F, G


def body_input_matrix(eta, J):
    """J^-1 Q^T, the rigid-body input map used by the nominal models."""
    return np.linalg.solve(J, euler_rate_matrix(eta).T)


def nominal_attitude_model(r, r_dot, T, gamma_ddot_hat, nominal, input_model="body"):
    """Nominal pair (F_bar, G_bar) for the pinned chart.

    ``nominal`` is the controller's parameter set (see ``ArmParams.nominal``).
    ``input_model="body"`` gives ``G_bar = J_b_bar^-1 Q^T``; ``"full"`` uses
    the nominal pinned inertia ``M_bar_eta^-1 Q^T`` instead.
    """
    F, G = attitude_submodel(r, r_dot, T, gamma_ddot_hat, nominal)
    if input_model == "body":
        G = body_input_matrix(r[0:3], nominal.J_b)
    elif input_model != "full":
        raise ValueError(f"unknown input_model {input_model!r}")
    return F, G


def free_attitude_submodel(q, q_dot, T, gamma_ddot, params, tau_e=None):
    """Free-flight analogue: returns (F_eta, G_eta, F_p, G_p).

    Translation and attitude are coupled through the arm, so the 6x6 [p, eta]
    block is solved and split into eta_ddot = F_eta + G_eta tau_b and
    p_ddot = F_p + G_p tau_b.
    """
    return attitude_model(FREE, q[3:6], q_dot[3:6], q[6:8], q_dot[6:8], gamma_ddot, T,
                          params, tau_e)


def nominal_free_attitude_model(q, q_dot, T, gamma_ddot_hat, nominal, input_model="body"):
    F, G, _, _ = free_attitude_submodel(q, q_dot, T, gamma_ddot_hat, nominal)
    if input_model == "body":
        G = body_input_matrix(q[3:6], nominal.J_b)
    elif input_model != "full":
        raise ValueError(f"unknown input_model {input_model!r}")
    return F, G


def m_star(eta, gamma, params):
    """Q^-T M_eta Q^-1 assembled term by term (rigid-arm rotation about the pin).

    Each body contributes m_k [d_k]^T [d_k] with d_k its offset from the
    end-effector, plus its rotational inertia re-expressed in {B}.
    """
    s1, s2, sE = arm_offsets(gamma, params)
    R1 = rot_y(gamma[0])
    R2 = rot_y(gamma[0] + gamma[1])
    Ms = params.J_b + R1 @ params.J_1 @ R1.T + R2 @ params.J_2 @ R2.T + R2 @ params.J_E @ R2.T
    for m, s in ((params.m_b, np.zeros(3)), (params.m_1, s1), (params.m_2, s2)):
        D = skew(s - sE)
        Ms = Ms + m * D.T @ D
    return Ms


# ---------------------------------------------------------------------------
# End-effector force

def end_effector_force(terms, r_ddot, T, eta, params):
    """Constraint reaction on the vehicle at the pin (inertial frame).

    From Newton's law for the whole system: sum m_k a_k = T R e3 - m g e3 + F_E.
    """
    R = euler_to_rotation(eta)
    return terms.P @ r_ddot + terms.pbias - T * R[:, 2] + params.m_total * params.g * E3


def quasi_static_force(eta, T, params):
    """Static approximation of F_E; its first component is -T sin(theta) at phi = psi = 0."""
    R = euler_to_rotation(eta)
    return -T * R[:, 2] + params.m_total * params.g * E3
