# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Euler-Lagrange kernel.

Same contract as ``_kernels_py.el_terms``; all intermediate algebra runs on
fixed-size C arrays, only the outputs are numpy arrays.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos

cnp.import_array()

GEO_SIZE = 45


cdef inline void _cross(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline void _seg(double a, double length, double* u, double* du, double* ddu) noexcept nogil:
    cdef double c = cos(a), s = sin(a)
    u[0] = -length * s
    u[1] = 0.0
    u[2] = -length * c
    du[0] = -length * c
    du[1] = 0.0
    du[2] = length * s
    ddu[0] = length * s
    ddu[1] = 0.0
    ddu[2] = length * c


def el_terms(int chart, double[::1] eta, double[::1] eta_dot, double[::1] gamma,
             double[::1] gamma_dot, double[::1] geo):
    cdef int n = 8 if chart == 0 else 5
    cdef int off = 3 if chart == 0 else 0

    M_a = np.zeros((n, n))
    C_a = np.zeros(n)
    K_a = np.zeros(n)
    Ju_a = np.zeros((6, n))
    P_a = np.zeros((3, n))
    pb_a = np.zeros(3)
    JvE_a = np.zeros((3, n))
    aE_a = np.zeros(3)
    cdef double[:, ::1] M = M_a
    cdef double[::1] C = C_a
    cdef double[::1] K = K_a
    cdef double[:, ::1] Ju = Ju_a
    cdef double[:, ::1] P = P_a
    cdef double[::1] pbias = pb_a
    cdef double[:, ::1] JvE = JvE_a
    cdef double[::1] aE = aE_a

    cdef double R[3][3]
    cdef double Q[3][3]
    cdef double Qd[3][3]
    cdef double w[3]
    cdef double wdb[3]
    cdef double s[4][3]
    cdef double S[4][3][2]
    cdef double sdd[4][3]
    cdef double Jv[3][8]
    cdef double Jw[3][8]
    cdef double IJw[3][8]
    cdef double X[3][3]
    cdef double o[3]
    cdef double od[3]
    cdef double t1[3]
    cdef double t2[3]
    cdef double t3[3]
    cdef double tmp[3]
    cdef double a[3]
    cdef double Rk[3][3]
    cdef double wk[3]
    cdef double ak[3]
    cdef double Iw[3]
    cdef double hk[3]
    cdef double Rtw[3]
    cdef double eyk[3]
    cdef double thrust_row[5]
    cdef double masses[4]
    cdef double alphas[4]
    cdef double adots[4]
    cdef double axis[4][2]
    cdef double u1h[3], du1h[3], ddu1h[3], u1[3], du1[3], ddu1[3]
    cdef double u2h[3], du2h[3], ddu2h[3], u2[3], du2[3], ddu2[3]
    cdef int i, j, r, c, k, l
    cdef double m, acc, ca, sa
    cdef double g = geo[8]
    cdef double sk_[3][3]

    cdef double cf = cos(eta[0]), sf = sin(eta[0])
    cdef double ct = cos(eta[1]), st = sin(eta[1])
    cdef double cp = cos(eta[2]), sp = sin(eta[2])
    cdef double dphi = eta_dot[0], dtheta = eta_dot[1]

    R[0][0] = cp * ct
    R[0][1] = cp * st * sf - sp * cf
    R[0][2] = cp * st * cf + sp * sf
    R[1][0] = sp * ct
    R[1][1] = sp * st * sf + cp * cf
    R[1][2] = sp * st * cf - cp * sf
    R[2][0] = -st
    R[2][1] = ct * sf
    R[2][2] = ct * cf

    Q[0][0] = 1.0
    Q[0][1] = 0.0
    Q[0][2] = -st
    Q[1][0] = 0.0
    Q[1][1] = cf
    Q[1][2] = sf * ct
    Q[2][0] = 0.0
    Q[2][1] = -sf
    Q[2][2] = cf * ct

    Qd[0][0] = 0.0
    Qd[0][1] = 0.0
    Qd[0][2] = -ct * dtheta
    Qd[1][0] = 0.0
    Qd[1][1] = -sf * dphi
    Qd[1][2] = cf * ct * dphi - sf * st * dtheta
    Qd[2][0] = 0.0
    Qd[2][1] = -cf * dphi
    Qd[2][2] = -sf * ct * dphi - cf * st * dtheta

    for i in range(3):
        w[i] = 0.0
        wdb[i] = 0.0
        for j in range(3):
            w[i] += Q[i][j] * eta_dot[j]
            wdb[i] += Qd[i][j] * eta_dot[j]

    # arm offsets for bodies [B, 1, 2, E]
    cdef double a1 = gamma[0], a12 = gamma[0] + gamma[1]
    cdef double w1 = gamma_dot[0], w12 = gamma_dot[0] + gamma_dot[1]
    _seg(a1, 0.5 * geo[3], u1h, du1h, ddu1h)
    _seg(a1, geo[3], u1, du1, ddu1)
    _seg(a12, 0.5 * geo[4], u2h, du2h, ddu2h)
    _seg(a12, geo[4], u2, du2, ddu2)
    for i in range(3):
        s[0][i] = 0.0
        s[1][i] = geo[i] + u1h[i]
        s[2][i] = geo[i] + u1[i] + u2h[i]
        s[3][i] = geo[i] + u1[i] + u2[i]
        S[0][i][0] = 0.0
        S[0][i][1] = 0.0
        S[1][i][0] = du1h[i]
        S[1][i][1] = 0.0
        S[2][i][0] = du1[i] + du2h[i]
        S[2][i][1] = du2h[i]
        S[3][i][0] = du1[i] + du2[i]
        S[3][i][1] = du2[i]
        sdd[0][i] = 0.0
        sdd[1][i] = ddu1h[i] * w1 * w1
        sdd[2][i] = ddu1[i] * w1 * w1 + ddu2h[i] * w12 * w12
        sdd[3][i] = ddu1[i] * w1 * w1 + ddu2[i] * w12 * w12

    if chart != 0:
        # thrust row e3^T [s_E] Q, -e3^T S_E before re-basing at the pin
        for j in range(3):
            thrust_row[j] = s[3][0] * Q[1][j] - s[3][1] * Q[0][j]
        thrust_row[3] = -S[3][2][0]
        thrust_row[4] = -S[3][2][1]
        for k in range(3):
            for i in range(3):
                s[k][i] -= s[3][i]
                sdd[k][i] -= sdd[3][i]
                S[k][i][0] -= S[3][i][0]
                S[k][i][1] -= S[3][i][1]
        for i in range(3):
            s[3][i] = 0.0
            sdd[3][i] = 0.0
            S[3][i][0] = 0.0
            S[3][i][1] = 0.0

    masses[0] = geo[5]
    masses[1] = geo[6]
    masses[2] = geo[7]
    masses[3] = 0.0
    alphas[0] = 0.0
    alphas[1] = a1
    alphas[2] = a12
    alphas[3] = a12
    adots[0] = 0.0
    adots[1] = w1
    adots[2] = w12
    adots[3] = w12
    axis[0][0] = 0.0
    axis[0][1] = 0.0
    axis[1][0] = 1.0
    axis[1][1] = 0.0
    axis[2][0] = 1.0
    axis[2][1] = 1.0
    axis[3][0] = 1.0
    axis[3][1] = 1.0

    for k in range(4):
        m = masses[k]
        for i in range(3):
            o[i] = s[k][i]
        for r in range(3):
            for j in range(n):
                Jv[r][j] = 0.0
                Jw[r][j] = 0.0
        if chart == 0:
            Jv[0][0] = 1.0
            Jv[1][1] = 1.0
            Jv[2][2] = 1.0

        # -R [o] Q
        sk_[0][0] = 0.0
        sk_[0][1] = -o[2]
        sk_[0][2] = o[1]
        sk_[1][0] = o[2]
        sk_[1][1] = 0.0
        sk_[1][2] = -o[0]
        sk_[2][0] = -o[1]
        sk_[2][1] = o[0]
        sk_[2][2] = 0.0
        for i in range(3):
            for j in range(3):
                acc = 0.0
                for l in range(3):
                    acc += sk_[i][l] * Q[l][j]
                X[i][j] = acc
        for r in range(3):
            for j in range(3):
                acc = 0.0
                for i in range(3):
                    acc += R[r][i] * X[i][j]
                Jv[r][off + j] = -acc
            for c in range(2):
                acc = 0.0
                for i in range(3):
                    acc += R[r][i] * S[k][i][c]
                Jv[r][off + 3 + c] = acc

        for i in range(3):
            od[i] = S[k][i][0] * gamma_dot[0] + S[k][i][1] * gamma_dot[1]
        _cross(w, o, t1)
        _cross(w, t1, t2)
        _cross(w, od, t3)
        _cross(wdb, o, t1)
        for i in range(3):
            tmp[i] = t2[i] + 2.0 * t3[i] + sdd[k][i] + t1[i]
        for r in range(3):
            a[r] = R[r][0] * tmp[0] + R[r][1] * tmp[1] + R[r][2] * tmp[2]

        # Rk = Ry(alpha_k); rows of Rk^T
        ca = cos(alphas[k])
        sa = sin(alphas[k])
        Rk[0][0] = ca
        Rk[0][1] = 0.0
        Rk[0][2] = -sa
        Rk[1][0] = 0.0
        Rk[1][1] = 1.0
        Rk[1][2] = 0.0
        Rk[2][0] = sa
        Rk[2][1] = 0.0
        Rk[2][2] = ca    # this is Ry(alpha)^T
        for r in range(3):
            for j in range(3):
                Jw[r][off + j] = Rk[r][0] * Q[0][j] + Rk[r][1] * Q[1][j] + Rk[r][2] * Q[2][j]
            eyk[r] = Rk[r][1]
            Jw[r][off + 3] = eyk[r] * axis[k][0]
            Jw[r][off + 4] = eyk[r] * axis[k][1]
        for r in range(3):
            Rtw[r] = Rk[r][0] * w[0] + Rk[r][1] * w[1] + Rk[r][2] * w[2]
            wk[r] = Rtw[r] + eyk[r] * adots[k]
        # ey x (Rk^T w), ey = (0, 1, 0)
        t1[0] = Rtw[2]
        t1[1] = 0.0
        t1[2] = -Rtw[0]
        for r in range(3):
            ak[r] = -adots[k] * t1[r] + Rk[r][0] * wdb[0] + Rk[r][1] * wdb[1] + Rk[r][2] * wdb[2]

        # inertia in own frame
        for r in range(3):
            for j in range(n):
                acc = 0.0
                for i in range(3):
                    acc += geo[9 + 9 * k + 3 * r + i] * Jw[i][j]
                IJw[r][j] = acc
            Iw[r] = 0.0
            hk[r] = 0.0
            for i in range(3):
                Iw[r] += geo[9 + 9 * k + 3 * r + i] * wk[i]
                hk[r] += geo[9 + 9 * k + 3 * r + i] * ak[i]
        _cross(wk, Iw, t1)
        for r in range(3):
            hk[r] += t1[r]

        for i in range(n):
            for j in range(i, n):
                acc = 0.0
                for r in range(3):
                    acc += m * Jv[r][i] * Jv[r][j] + Jw[r][i] * IJw[r][j]
                M[i, j] += acc
            acc = 0.0
            for r in range(3):
                acc += m * Jv[r][i] * a[r] + Jw[r][i] * hk[r]
            C[i] += acc
            K[i] += m * g * Jv[2][i]
            for r in range(3):
                P[r, i] += m * Jv[r][i]
        for r in range(3):
            pbias[r] += m * a[r]
        if k == 3:
            for r in range(3):
                aE[r] = a[r]
                for j in range(n):
                    JvE[r, j] = Jv[r][j]

    for i in range(n):
        for j in range(i):
            M[i, j] = M[j, i]

    if chart == 0:
        Ju[0, 0] = R[0][2]
        Ju[0, 1] = R[1][2]
        Ju[0, 2] = R[2][2]
    else:
        for j in range(5):
            Ju[0, j] = thrust_row[j]
    for i in range(3):
        for j in range(3):
            Ju[1 + i, off + j] = Q[i][j]
    Ju[4, off + 3] = 1.0
    Ju[5, off + 4] = 1.0
    return M_a, C_a, K_a, Ju_a, P_a, pb_a, JvE_a, aE_a


def attitude_model(int chart, double[::1] eta, double[::1] eta_dot, double[::1] gamma,
                   double[::1] gamma_dot, double[::1] gamma_ddot, double T, tau_e,
                   double[::1] geo):
    """Attitude submodel with gamma prescribed; see ``_kernels_py.attitude_model``."""
    M_a, C_a, K_a, Ju_a, _, _, _, _ = el_terms(chart, eta, eta_dot, gamma, gamma_dot, geo)
    cdef double[:, ::1] M = M_a
    cdef double[::1] C = C_a
    cdef double[::1] K = K_a
    cdef double[:, ::1] Ju = Ju_a
    cdef int n = M.shape[0]
    cdef int k = n - 2
    cdef int i, j, c, l
    cdef double L[6][6]
    cdef double X[6][4]
    cdef double acc
    cdef double[::1] te
    if tau_e is not None:
        te = np.ascontiguousarray(tau_e, dtype=np.float64)

    # right-hand sides: column 0 drift, columns 1..3 body-torque input
    for i in range(k):
        acc = -C[i] - K[i] + Ju[0, i] * T
        for j in range(2):
            acc -= M[i, k + j] * gamma_ddot[j]
        if tau_e is not None:
            acc += te[i]
        X[i][0] = acc
        for c in range(3):
            X[i][1 + c] = Ju[1 + c, i]   # rows of Q^T live in the eta block

    # Cholesky of the k x k leading block
    for i in range(k):
        for j in range(i + 1):
            acc = M[i, j]
            for l in range(j):
                acc -= L[i][l] * L[j][l]
            if i == j:
                if acc <= 0.0:
                    raise np.linalg.LinAlgError("mass matrix is not positive definite")
                L[i][i] = acc ** 0.5
            else:
                L[i][j] = acc / L[j][j]
    for c in range(4):
        for i in range(k):
            acc = X[i][c]
            for l in range(i):
                acc -= L[i][l] * X[l][c]
            X[i][c] = acc / L[i][i]
        for i in range(k - 1, -1, -1):
            acc = X[i][c]
            for l in range(i + 1, k):
                acc -= L[l][i] * X[l][c]
            X[i][c] = acc / L[i][i]

    cdef int e0 = k - 3
    F = np.empty(3)
    G = np.empty((3, 3))
    cdef double[::1] Fv = F
    cdef double[:, ::1] Gv = G
    for i in range(3):
        Fv[i] = X[e0 + i][0]
        for c in range(3):
            Gv[i, c] = X[e0 + i][1 + c]
    if chart != 0:
        return F, G, None, None
    Fp = np.empty(3)
    Gp = np.empty((3, 3))
    cdef double[::1] Fpv = Fp
    cdef double[:, ::1] Gpv = Gp
    for i in range(3):
        Fpv[i] = X[i][0]
        for c in range(3):
            Gpv[i, c] = X[i][1 + c]
    return F, G, Fp, Gp
