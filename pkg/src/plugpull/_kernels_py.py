"""Pure-Python Euler-Lagrange kernel (fallback for ``_kernels_c``).

Both implementations share one signature::

    el_terms(chart, eta, eta_dot, gamma, gamma_dot, geo) -> tuple

``geo`` is the flat float64 vector built by ``ArmParams.kernel_vector()``::

    [mount(3), l1, l2, m_b, m_1, m_2, g, J_b(9), J_1(9), J_2(9), J_E(9)]

``chart`` is 0 for free flight (q = [p, eta, gamma], n = 8) and 1 for the
pinned end-effector chart (r = [eta, gamma], n = 5).  The return tuple is
``(M, C, K, Ju, P, pbias, JvE, aE)``:

    M      n x n mass matrix
    C      Coriolis/centrifugal vector (includes gyroscopic terms)
    K      gravity vector
    Ju     6 x n input Jacobian for u_f = [T, tau_b, tau_gamma]
    P      3 x n sum of m_k * Jv_k (total linear momentum Jacobian)
    pbias  3     sum of m_k * (Jv_k_dot @ qdot)
    JvE    3 x n end-effector linear velocity Jacobian
    aE     3     end-effector velocity-product acceleration

Link k has CoM offset s_k(gamma) in the body frame; both joints rotate about
the body y axis (planar arm).  The end-effector frame coincides with link 2.
"""

import numpy as np

GEO_SIZE = 45
_EY = np.array([0.0, 1.0, 0.0])


def _skew(v):
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _seg(a, length):
    # Ry(a) @ (0, 0, -length) and its first two derivatives in a.
    c, s = np.cos(a), np.sin(a)
    u = np.array([-length * s, 0.0, -length * c])
    du = np.array([-length * c, 0.0, length * s])
    ddu = np.array([length * s, 0.0, length * c])
    return u, du, ddu


def arm_offsets(gamma, gamma_dot, geo):
    """Body-frame offsets of link CoMs and end-effector.

    Returns lists ``s`` (3,), ``S`` (3x2 Jacobian in gamma) and ``sdd``
    (velocity-product second derivative) for bodies [B, 1, 2, E].
    """
    mount = geo[0:3]
    l1, l2 = geo[3], geo[4]
    a1 = gamma[0]
    a12 = gamma[0] + gamma[1]
    w1 = gamma_dot[0]
    w12 = gamma_dot[0] + gamma_dot[1]

    u1h, du1h, ddu1h = _seg(a1, 0.5 * l1)
    u1, du1, ddu1 = _seg(a1, l1)
    u2h, du2h, ddu2h = _seg(a12, 0.5 * l2)
    u2, du2, ddu2 = _seg(a12, l2)

    zero3 = np.zeros(3)
    s = [zero3, mount + u1h, mount + u1 + u2h, mount + u1 + u2]
    S = [np.zeros((3, 2)),
         np.column_stack([du1h, zero3]),
         np.column_stack([du1 + du2h, du2h]),
         np.column_stack([du1 + du2, du2])]
    sdd = [zero3,
           ddu1h * w1 * w1,
           ddu1 * w1 * w1 + ddu2h * w12 * w12,
           ddu1 * w1 * w1 + ddu2 * w12 * w12]
    return s, S, sdd


def el_terms(chart, eta, eta_dot, gamma, gamma_dot, geo):
    eta = np.asarray(eta, dtype=float)
    eta_dot = np.asarray(eta_dot, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    gamma_dot = np.asarray(gamma_dot, dtype=float)
    geo = np.asarray(geo, dtype=float)

    masses = (geo[5], geo[6], geo[7], 0.0)
    g = geo[8]
    inertias = (geo[9:18].reshape(3, 3), geo[18:27].reshape(3, 3),
                geo[27:36].reshape(3, 3), geo[36:45].reshape(3, 3))

    phi, theta, psi = eta
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    R = np.array([
        [cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf],
        [sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf],
        [-st, ct * sf, ct * cf],
    ])
    Q = np.array([[1.0, 0.0, -st], [0.0, cf, sf * ct], [0.0, -sf, cf * ct]])
    dphi, dtheta = eta_dot[0], eta_dot[1]
    Q_dot = np.array([
        [0.0, 0.0, -ct * dtheta],
        [0.0, -sf * dphi, cf * ct * dphi - sf * st * dtheta],
        [0.0, -cf * dphi, -sf * ct * dphi - cf * st * dtheta],
    ])
    w = Q @ eta_dot
    wd_bias = Q_dot @ eta_dot

    s, S, sdd = arm_offsets(gamma, gamma_dot, geo)
    alphas = (0.0, gamma[0], gamma[0] + gamma[1], gamma[0] + gamma[1])
    alpha_dots = (0.0, gamma_dot[0], gamma_dot[0] + gamma_dot[1],
                  gamma_dot[0] + gamma_dot[1])
    axis_rows = (np.zeros(2), np.array([1.0, 0.0]), np.ones(2), np.ones(2))

    if chart == 0:
        n, off = 8, 3
    else:
        n, off = 5, 0
        sE, SE, sddE = s[3], S[3], sdd[3]
        e3 = np.array([0.0, 0.0, 1.0])
        thrust_row = np.concatenate([e3 @ _skew(sE) @ Q, -e3 @ SE])
        s = [sk - sE for sk in s]
        S = [Sk - SE for Sk in S]
        sdd = [sk - sddE for sk in sdd]

    M = np.zeros((n, n))
    C = np.zeros(n)
    K = np.zeros(n)
    P = np.zeros((3, n))
    pbias = np.zeros(3)
    JvE = None
    aE = None

    for k in range(4):
        o, So, ob = s[k], S[k], sdd[k]
        Jv = np.zeros((3, n))
        if chart == 0:
            Jv[:, 0:3] = np.eye(3)
        Jv[:, off:off + 3] = -R @ _skew(o) @ Q
        Jv[:, off + 3:off + 5] = R @ So
        od = So @ gamma_dot
        a = R @ (np.cross(w, np.cross(w, o)) + 2.0 * np.cross(w, od) + ob
                 + np.cross(wd_bias, o))

        Rk = _ry(alphas[k])
        Jw = np.zeros((3, n))
        Jw[:, off:off + 3] = Rk.T @ Q
        Jw[:, off + 3:off + 5] = np.outer(Rk.T @ _EY, axis_rows[k])
        wk = Rk.T @ (w + _EY * alpha_dots[k])
        ak = -alpha_dots[k] * np.cross(_EY, Rk.T @ w) + Rk.T @ wd_bias

        m = masses[k]
        Ik = inertias[k]
        M += m * (Jv.T @ Jv) + Jw.T @ Ik @ Jw
        C += m * (Jv.T @ a) + Jw.T @ (Ik @ ak + np.cross(wk, Ik @ wk))
        K += m * g * Jv[2]
        P += m * Jv
        pbias += m * a
        if k == 3:
            JvE, aE = Jv, a

    Ju = np.zeros((6, n))
    if chart == 0:
        Ju[0, 0:3] = R[:, 2]
    else:
        Ju[0] = thrust_row
    Ju[1:4, off:off + 3] = Q
    Ju[4:6, off + 3:off + 5] = np.eye(2)
    return M, C, K, Ju, P, pbias, JvE, aE


def attitude_model(chart, eta, eta_dot, gamma, gamma_dot, gamma_ddot, T, tau_e, geo):
    """Attitude submodel with gamma prescribed.

    Returns ``(F, G, Fp, Gp)`` with ``eta_ddot = F + G tau_b`` and, in the free
    chart, ``p_ddot = Fp + Gp tau_b`` (``Fp, Gp`` are ``None`` when pinned).
    ``tau_e`` is the generalized disturbance of the chart (length n).
    """
    M, C, K, Ju, _, _, _, _ = el_terms(chart, eta, eta_dot, gamma, gamma_dot, geo)
    n = M.shape[0]
    k = n - 2
    rhs = -C[:k] - K[:k] - M[:k, k:] @ np.asarray(gamma_ddot, float) + Ju[0, :k] * T
    if tau_e is not None:
        rhs = rhs + np.asarray(tau_e, float)[:k]
    B = np.zeros((k, 3))
    B[k - 3:] = Ju[1:4, k - 3:k].T
    L = np.linalg.cholesky(M[:k, :k])
    sol = np.linalg.solve(L.T, np.linalg.solve(L, np.column_stack([rhs, B])))
    if chart == 0:
        return sol[3:6, 0], sol[3:6, 1:4], sol[0:3, 0], sol[0:3, 1:4]
    return sol[:, 0], sol[:, 1:4], None, None
