"""Rotation, skew and Euler-rate kinematics (Z-Y-X intrinsic convention).

Frames are z-up.  ``R = Rz(psi) @ Ry(theta) @ Rx(phi)`` maps body vectors
into the inertial frame, and the body angular velocity is ``omega = Q @ eta_dot``.
"""

import numpy as np

from .errors import GimbalLock

# |theta| at or beyond this raises GimbalLock.
GIMBAL_MARGIN = 1e-3


def skew(v):
    """Cross-product matrix: ``skew(v) @ w == np.cross(v, w)``."""
    x, y, z = v
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def vee(S):
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_rotation(eta):
    """Body-to-inertial rotation for Euler angles ``eta = (phi, theta, psi)``."""
    phi, theta, psi = eta
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    return np.array([
        [cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf],
        [sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf],
        [-st, ct * sf, ct * cf],
    ])


def check_gimbal(theta, margin=GIMBAL_MARGIN):
    if abs(theta) >= np.pi / 2 - margin:
        raise GimbalLock(f"pitch {theta:.6f} rad is within {margin} of +-pi/2")


def euler_rate_matrix(eta, eta_dot=None):
    """Return ``Q`` with ``omega_body = Q @ eta_dot``.

    When ``eta_dot`` is given, returns ``(Q, Q_dot)``.
    """
    phi, theta, _ = eta
    check_gimbal(theta)
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    Q = np.array([[1.0, 0.0, -st],
                  [0.0, cf, sf * ct],
                  [0.0, -sf, cf * ct]])
    if eta_dot is None:
        return Q
    dphi, dtheta, _ = eta_dot
    Q_dot = np.array([
        [0.0, 0.0, -ct * dtheta],
        [0.0, -sf * dphi, cf * ct * dphi - sf * st * dtheta],
        [0.0, -cf * dphi, -sf * ct * dphi - cf * st * dtheta],
    ])
    return Q, Q_dot


def euler_rate_inverse(eta):
    """Closed-form ``Q^-1`` (eta_dot = Q^-1 omega)."""
    phi, theta, _ = eta
    check_gimbal(theta)
    cf, sf = np.cos(phi), np.sin(phi)
    ct, tt = np.cos(theta), np.tan(theta)
    return np.array([[1.0, sf * tt, cf * tt],
                     [0.0, cf, -sf],
                     [0.0, sf / ct, cf / ct]])


def euler_from_rotation(R):
    """Inverse of :func:`euler_to_rotation` on the branch |theta| < pi/2."""
    theta = -np.arcsin(np.clip(R[2, 0], -1.0, 1.0))
    phi = np.arctan2(R[2, 1], R[2, 2])
    psi = np.arctan2(R[1, 0], R[0, 0])
    return np.array([phi, theta, psi])
