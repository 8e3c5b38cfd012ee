# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the hot loops.

Mirrors :mod:`misprice._kernels_py` operation for operation; see that
module for the kernel contracts. Selected automatically by
``misprice.backend`` when available.
"""

from libc.math cimport exp

import numpy as np


cdef inline double _clip(double x, double lo, double hi) nogil:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


cdef void _posted(double a, double b, double c, double p_min, double p_max,
                  Py_ssize_t n, double[::1] u, double[:, ::1] v,
                  double[::1] out) nogil:
    cdef Py_ssize_t i, j
    cdef double su, sv, ubar, vbar, vii, bi, p
    for i in range(n):
        su = 0.0
        sv = 0.0
        for j in range(n):
            if j != i:
                su += u[j]
                sv += v[i, j]
        ubar = su / (n - 1)
        vbar = sv / (n - 1)
        vii = v[i, i]
        bi = b * vii - c * vbar
        if bi > 0.0:
            p = _clip(((a + c * ubar) * vii - c * u[i] * vbar) / (2.0 * bi),
                      p_min, p_max)
        else:
            p = p_max
        out[i] = p


cdef void _rhs(double a, double b, double c, double p_min, double p_max,
               Py_ssize_t n, double tau, double[::1] u, double[:, ::1] v,
               double[::1] p, double[::1] du, double[:, ::1] dv) nogil:
    cdef Py_ssize_t i, j
    cdef double ei
    _posted(a, b, c, p_min, p_max, n, u, v, p)
    for i in range(n):
        du[i] = p[i] - u[i]
    for i in range(n):
        ei = du[i]
        for j in range(n):
            dv[i, j] = tau * ei * du[j]


def ode_run(double a, double b, double c, double p_min, double p_max,
            u0, v0, double tau0, hs, Py_ssize_t record_every):
    cdef Py_ssize_t n = len(u0)
    u_arr = np.array(u0, dtype=np.float64)
    v_arr = np.array(v0, dtype=np.float64)
    hs_arr = np.ascontiguousarray(hs, dtype=np.float64)
    cdef double[::1] u = u_arr
    cdef double[:, ::1] v = v_arr
    cdef double[::1] steps = hs_arr
    cdef Py_ssize_t n_steps = steps.shape[0]

    cdef Py_ssize_t n_rec = 2 + (n_steps // record_every if record_every > 0 else 0)
    taus_arr = np.empty(n_rec, dtype=np.float64)
    us_arr = np.empty((n_rec, n), dtype=np.float64)
    vs_arr = np.empty((n_rec, n, n), dtype=np.float64)
    ps_arr = np.empty((n_rec, n), dtype=np.float64)
    cdef double[::1] taus = taus_arr
    cdef double[:, ::1] us = us_arr
    cdef double[:, :, ::1] vs = vs_arr
    cdef double[:, ::1] ps = ps_arr

    p_buf = np.empty(n, dtype=np.float64)
    du_buf = np.empty((4, n), dtype=np.float64)
    dv_buf = np.empty((4, n, n), dtype=np.float64)
    ut_buf = np.empty(n, dtype=np.float64)
    vt_buf = np.empty((n, n), dtype=np.float64)
    cdef double[::1] p = p_buf
    cdef double[:, ::1] du = du_buf
    cdef double[:, :, ::1] dv = dv_buf
    cdef double[::1] ut = ut_buf
    cdef double[:, ::1] vt = vt_buf

    cdef Py_ssize_t m = 0
    cdef Py_ssize_t k, i, j
    cdef double s, h, tau_a, tau_m, tau_b, w

    with nogil:
        # record step 0
        taus[m] = tau0
        _posted(a, b, c, p_min, p_max, n, u, v, p)
        for i in range(n):
            us[m, i] = u[i]
            ps[m, i] = p[i]
            for j in range(n):
                vs[m, i, j] = v[i, j]
        m += 1

        s = 0.0
        for k in range(n_steps):
            h = steps[k]
            tau_a = tau0 * exp(s)
            tau_m = tau0 * exp(s + 0.5 * h)
            tau_b = tau0 * exp(s + h)

            _rhs(a, b, c, p_min, p_max, n, tau_a, u, v, p, du[0], dv[0])
            for i in range(n):
                ut[i] = u[i] + 0.5 * h * du[0, i]
                for j in range(n):
                    vt[i, j] = v[i, j] + 0.5 * h * dv[0, i, j]
            _rhs(a, b, c, p_min, p_max, n, tau_m, ut, vt, p, du[1], dv[1])
            for i in range(n):
                ut[i] = u[i] + 0.5 * h * du[1, i]
                for j in range(n):
                    vt[i, j] = v[i, j] + 0.5 * h * dv[1, i, j]
            _rhs(a, b, c, p_min, p_max, n, tau_m, ut, vt, p, du[2], dv[2])
            for i in range(n):
                ut[i] = u[i] + h * du[2, i]
                for j in range(n):
                    vt[i, j] = v[i, j] + h * dv[2, i, j]
            _rhs(a, b, c, p_min, p_max, n, tau_b, ut, vt, p, du[3], dv[3])

            w = h / 6.0
            for i in range(n):
                u[i] = u[i] + w * (du[0, i] + 2.0 * du[1, i] + 2.0 * du[2, i] + du[3, i])
                for j in range(n):
                    v[i, j] = v[i, j] + w * (dv[0, i, j] + 2.0 * dv[1, i, j]
                                             + 2.0 * dv[2, i, j] + dv[3, i, j])
            s = s + h
            if (k + 1) % record_every == 0 or k + 1 == n_steps:
                taus[m] = tau0 * exp(s)
                _posted(a, b, c, p_min, p_max, n, u, v, p)
                for i in range(n):
                    us[m, i] = u[i]
                    ps[m, i] = p[i]
                    for j in range(n):
                        vs[m, i, j] = v[i, j]
                m += 1

    return taus_arr[:m].copy(), us_arr[:m].copy(), vs_arr[:m].copy(), ps_arr[:m].copy()


def pipeline(double a, double b, double c, double p_min, double p_max,
             Py_ssize_t k_explore, Py_ssize_t t_exploit, expl, shocks):
    expl_arr = np.ascontiguousarray(expl, dtype=np.float64)
    shocks_arr = np.ascontiguousarray(shocks, dtype=np.float64)
    cdef double[:, ::1] ex = expl_arr
    cdef double[:, ::1] sh = shocks_arr
    cdef Py_ssize_t n = ex.shape[1]
    cdef Py_ssize_t total = k_explore + t_exploit
    cdef double cross = c / (n - 1)

    prices_arr = np.empty((total, n), dtype=np.float64)
    quantities_arr = np.empty((total, n), dtype=np.float64)
    mean_p_arr = np.zeros(n, dtype=np.float64)
    mean_q_arr = np.zeros(n, dtype=np.float64)
    c_pq_arr = np.zeros(n, dtype=np.float64)
    m2_arr = np.zeros((n, n), dtype=np.float64)
    d_old_arr = np.empty(n, dtype=np.float64)
    d_new_arr = np.empty(n, dtype=np.float64)
    cur_arr = np.empty(n, dtype=np.float64)
    nxt_arr = np.empty(n, dtype=np.float64)
    q_arr = np.empty(n, dtype=np.float64)

    cdef double[:, ::1] prices = prices_arr
    cdef double[:, ::1] quantities = quantities_arr
    cdef double[::1] mean_p = mean_p_arr
    cdef double[::1] mean_q = mean_q_arr
    cdef double[::1] c_pq = c_pq_arr
    cdef double[:, ::1] m2 = m2_arr
    cdef double[::1] d_old = d_old_arr
    cdef double[::1] d_new = d_new_arr
    cdef double[::1] cur = cur_arr
    cdef double[::1] nxt = nxt_arr
    cdef double[::1] q = q_arr

    cdef int status = 0
    cdef Py_ssize_t t, i, j
    cdef double sp, dq, m2ii, beta, alpha, pi, nn, di

    with nogil:
        for t in range(total):
            if t < k_explore:
                for i in range(n):
                    cur[i] = ex[t, i]
            else:
                for i in range(n):
                    cur[i] = nxt[i]

            sp = 0.0
            for i in range(n):
                sp += cur[i]
            for i in range(n):
                q[i] = a - b * cur[i] + cross * (sp - cur[i]) + sh[t, i]

            for i in range(n):
                prices[t, i] = cur[i]
                quantities[t, i] = q[i]

            nn = t + 1
            for i in range(n):
                d_old[i] = cur[i] - mean_p[i]
                mean_p[i] = mean_p[i] + d_old[i] / nn
                d_new[i] = cur[i] - mean_p[i]
            for i in range(n):
                di = d_old[i]
                for j in range(i, n):
                    m2[i, j] = m2[i, j] + di * d_new[j]
            for i in range(n):
                dq = q[i] - mean_q[i]
                mean_q[i] = mean_q[i] + dq / nn
                c_pq[i] = c_pq[i] + d_old[i] * (q[i] - mean_q[i])

            if k_explore - 1 <= t and t < total - 1:
                for i in range(n):
                    m2ii = m2[i, i]
                    if m2ii <= 0.0:
                        status = 1
                        break
                    beta = c_pq[i] / m2ii
                    if beta < 0.0:
                        alpha = mean_q[i] - beta * mean_p[i]
                        pi = _clip(-alpha / (2.0 * beta), p_min, p_max)
                    else:
                        pi = p_max
                    nxt[i] = pi
                if status:
                    break

        if status == 0:
            for i in range(n):
                for j in range(i):
                    m2[i, j] = m2[j, i]

    return status, prices_arr, quantities_arr, mean_p_arr, mean_q_arr, m2_arr, c_pq_arr


def symmetric_run(double a, double b, double c, double p_min, double p_max,
                  double s, double sigma, hs, Py_ssize_t record_every):
    cdef double sig2 = sigma * sigma
    cdef double u = s
    cdef double cc = 0.0
    hs_arr = np.ascontiguousarray(hs, dtype=np.float64)
    cdef double[::1] steps = hs_arr
    cdef Py_ssize_t n_steps = steps.shape[0]

    cdef Py_ssize_t n_rec = 2 + (n_steps // record_every if record_every > 0 else 0)
    taus_arr = np.empty(n_rec, dtype=np.float64)
    us_arr = np.empty(n_rec, dtype=np.float64)
    cs_arr = np.empty(n_rec, dtype=np.float64)
    ps_arr = np.empty(n_rec, dtype=np.float64)
    cdef double[::1] taus = taus_arr
    cdef double[::1] us = us_arr
    cdef double[::1] cs = cs_arr
    cdef double[::1] ps = ps_arr

    cdef Py_ssize_t m = 0
    cdef Py_ssize_t k
    cdef double sk, h, tau_a, tau_m, tau_b
    cdef double e1, e2, e3, e4, du1, du2, du3, du4, dc1, dc2, dc3, dc4
    cdef double u2, u3, u4, c2, c3, c4

    with nogil:
        taus[m] = 1.0
        us[m] = u
        cs[m] = cc
        ps[m] = _sym_price(a, b, c, p_min, p_max, sig2, u, cc)
        m += 1
        sk = 0.0
        for k in range(n_steps):
            h = steps[k]
            tau_a = exp(sk)
            tau_m = exp(sk + 0.5 * h)
            tau_b = exp(sk + h)

            e1 = _sym_price(a, b, c, p_min, p_max, sig2, u, cc) - u
            du1 = e1
            dc1 = tau_a * e1 * e1
            u2 = u + 0.5 * h * du1
            c2 = cc + 0.5 * h * dc1
            e2 = _sym_price(a, b, c, p_min, p_max, sig2, u2, c2) - u2
            du2 = e2
            dc2 = tau_m * e2 * e2
            u3 = u + 0.5 * h * du2
            c3 = cc + 0.5 * h * dc2
            e3 = _sym_price(a, b, c, p_min, p_max, sig2, u3, c3) - u3
            du3 = e3
            dc3 = tau_m * e3 * e3
            u4 = u + h * du3
            c4 = cc + h * dc3
            e4 = _sym_price(a, b, c, p_min, p_max, sig2, u4, c4) - u4
            du4 = e4
            dc4 = tau_b * e4 * e4

            u = u + h / 6.0 * (du1 + 2.0 * du2 + 2.0 * du3 + du4)
            cc = cc + h / 6.0 * (dc1 + 2.0 * dc2 + 2.0 * dc3 + dc4)
            sk = sk + h
            if (k + 1) % record_every == 0 or k + 1 == n_steps:
                taus[m] = exp(sk)
                us[m] = u
                cs[m] = cc
                ps[m] = _sym_price(a, b, c, p_min, p_max, sig2, u, cc)
                m += 1

    return taus_arr[:m].copy(), us_arr[:m].copy(), cs_arr[:m].copy(), ps_arr[:m].copy()


cdef inline double _sym_price(double a, double b, double c, double p_min,
                              double p_max, double sig2, double u,
                              double cc) nogil:
    return _clip((a * (cc + sig2) + c * sig2 * u)
                 / (2.0 * ((b - c) * cc + b * sig2)), p_min, p_max)
