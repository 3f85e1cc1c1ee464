"""Per-mode reference generators: WP pitch ramp, ST quadratic recovery, FF return home."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateWindow

MIN_WINDOW = 1e-4


@dataclass
class TrajConfig:
    theta_m: float = np.deg2rad(20.0)
    t0_wp: float = 0.0
    td_wp: float = 5.0
    st_window: float = 0.08
    gamma_d: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.gamma_d = np.asarray(self.gamma_d, dtype=float).reshape(2)
        if not 0.0 < self.theta_m < np.pi / 2:
            raise ValueError("theta_m must lie in (0, pi/2)")
        if self.td_wp <= self.t0_wp:
            raise ValueError("td_wp must exceed t0_wp")


@dataclass
class Reference:
    """Desired values; entries that a mode does not define stay ``None``."""

    eta: np.ndarray
    eta_dot: np.ndarray
    eta_ddot: np.ndarray
    p: np.ndarray = None
    p_dot: np.ndarray = None
    psi: float = 0.0
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(2))
    gamma_dot: np.ndarray = field(default_factory=lambda: np.zeros(2))


def wp_reference(t, cfg):
    """Linear pitch ramp to -theta_m over [t0_wp, td_wp), zero afterwards."""
    eta = np.zeros(3)
    eta_dot = np.zeros(3)
    if cfg.t0_wp <= t < cfg.td_wp:
        rate = -cfg.theta_m / (cfg.td_wp - cfg.t0_wp)
        eta[1] = rate * (t - cfg.t0_wp)
        eta_dot[1] = rate
    return Reference(eta, eta_dot, np.zeros(3), gamma=cfg.gamma_d.copy())


def solve_st_coefficients(eta0, eta_dot0, t0, td):
    """Per-axis (c0, c1, c2) of eta_d(t) = c2 t^2 + c1 t + c0 in absolute time.

    Conditions: eta_d(t0) = eta0, eta_d'(t0) = eta_dot0, eta_d(td) = 0.
    Returns an array of shape (3, 3) with rows (c0, c1, c2) per axis.
    """
    if td - t0 < MIN_WINDOW:
        raise DegenerateWindow(f"ST window {td - t0:.3g} s is shorter than {MIN_WINDOW} s")
    A = np.array([[1.0, t0, t0 * t0],
                  [0.0, 1.0, 2.0 * t0],
                  [1.0, td, td * td]])
    rhs = np.vstack([np.asarray(eta0, float), np.asarray(eta_dot0, float), np.zeros(3)])
    return np.linalg.solve(A, rhs).T


def st_reference(t, coeffs, td, z_hold, gamma_d=None):
    """Quadratic attitude recovery on [t0, td); altitude held at entry value."""
    c0, c1, c2 = coeffs[:, 0], coeffs[:, 1], coeffs[:, 2]
    if t < td:
        eta = c2 * t * t + c1 * t + c0
        eta_dot = 2.0 * c2 * t + c1
        eta_ddot = 2.0 * c2
    else:
        eta = np.zeros(3)
        eta_dot = np.zeros(3)
        eta_ddot = np.zeros(3)
    p = np.array([np.nan, np.nan, z_hold])  # x-y follow the current state
    return Reference(eta, eta_dot, eta_ddot, p=p, p_dot=np.zeros(3),
                     gamma=np.zeros(2) if gamma_d is None else np.asarray(gamma_d, float))


@dataclass(frozen=True)
class Home:
    """Pose latched at t0_wp."""

    p: np.ndarray
    psi: float


def ff_reference(t, home, gamma_d=None):
    return Reference(np.array([0.0, 0.0, home.psi]), np.zeros(3), np.zeros(3),
                     p=np.array(home.p, dtype=float), p_dot=np.zeros(3), psi=home.psi,
                     gamma=np.zeros(2) if gamma_d is None else np.asarray(gamma_d, float))
