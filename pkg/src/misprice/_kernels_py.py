"""Pure-Python kernels for the hot loops.

These are the reference implementations; ``misprice._kernels`` (the Cython
extension) mirrors them operation for operation. ``misprice.backend``
selects whichever is available at import time. Plain floats and lists are
deliberate: for the small firm counts the theory module uses, per-element
ndarray access would dominate the runtime.

Kernel contracts:

ode_run
    Classical RK4 in log time s = log(tau) on the running-mean /
    accumulated-covariance state over a caller-supplied step schedule.
    du/ds = P(u, v) - u and dv/ds = tau * e e^T with e = P(u, v) - u,
    where P is the posted-price map. Records (tau, u, v, P) at step 0,
    every ``record_every`` steps and at the final step. The schedule is
    fixed a priori (no error control); callers prepend a geometrically
    graded ramp to resolve the fast covariance transient near tau = 1.

pipeline
    Discrete explore-then-exploit recursion: ``k_explore`` periods of given
    exploration prices, then each period every firm refits its own-price
    OLS (Welford moments) and posts the myopic profit maximizer for the
    next period. Returns full price/quantity paths and the terminal
    empirical moments.

symmetric_run
    Scalar reduction of ode_run for exchangeable symmetric initial states.
"""

from __future__ import annotations

import math

import numpy as np


def _posted(a, b, c, p_min, p_max, n, u, v, out):
    """Posted-price map written into ``out`` (lists of floats)."""
    for i in range(n):
        su = 0.0
        sv = 0.0
        row = v[i]
        for j in range(n):
            if j != i:
                su += u[j]
                sv += row[j]
        ubar = su / (n - 1)
        vbar = sv / (n - 1)
        vii = row[i]
        bi = b * vii - c * vbar
        if bi > 0.0:
            p = ((a + c * ubar) * vii - c * u[i] * vbar) / (2.0 * bi)
            if p < p_min:
                p = p_min
            elif p > p_max:
                p = p_max
        else:
            p = p_max
        out[i] = p


def ode_run(a, b, c, p_min, p_max, u0, v0, tau0, hs, record_every):
    """Integrate the moment dynamics over the step schedule ``hs``.

    Returns (taus, us, vs, ps) as float64 arrays with shapes
    (M,), (M, n), (M, n, n), (M, n).
    """
    hs = [float(x) for x in hs]
    n_steps = len(hs)
    n = len(u0)
    u = [float(x) for x in u0]
    v = [[float(v0[i][j]) for j in range(n)] for i in range(n)]
    p = [0.0] * n

    du = [[0.0] * n for _ in range(4)]
    dv = [[[0.0] * n for _ in range(n)] for _ in range(4)]
    ut = [0.0] * n
    vt = [[0.0] * n for _ in range(n)]

    taus = []
    us = []
    vs = []
    ps = []

    def rhs(tau, uu, vv, duo, dvo):
        _posted(a, b, c, p_min, p_max, n, uu, vv, p)
        for i in range(n):
            duo[i] = p[i] - uu[i]
        for i in range(n):
            ei = duo[i]
            rowo = dvo[i]
            for j in range(n):
                rowo[j] = tau * ei * duo[j]

    def record(s_now):
        tau = tau0 * math.exp(s_now)
        _posted(a, b, c, p_min, p_max, n, u, v, p)
        taus.append(tau)
        us.append(list(u))
        vs.append([list(row) for row in v])
        ps.append(list(p))

    record(0.0)
    s = 0.0
    for k in range(n_steps):
        h = hs[k]
        tau_a = tau0 * math.exp(s)
        tau_m = tau0 * math.exp(s + 0.5 * h)
        tau_b = tau0 * math.exp(s + h)

        rhs(tau_a, u, v, du[0], dv[0])
        for i in range(n):
            ut[i] = u[i] + 0.5 * h * du[0][i]
            for j in range(n):
                vt[i][j] = v[i][j] + 0.5 * h * dv[0][i][j]
        rhs(tau_m, ut, vt, du[1], dv[1])
        for i in range(n):
            ut[i] = u[i] + 0.5 * h * du[1][i]
            for j in range(n):
                vt[i][j] = v[i][j] + 0.5 * h * dv[1][i][j]
        rhs(tau_m, ut, vt, du[2], dv[2])
        for i in range(n):
            ut[i] = u[i] + h * du[2][i]
            for j in range(n):
                vt[i][j] = v[i][j] + h * dv[2][i][j]
        rhs(tau_b, ut, vt, du[3], dv[3])

        w = h / 6.0
        for i in range(n):
            u[i] += w * (du[0][i] + 2.0 * du[1][i] + 2.0 * du[2][i] + du[3][i])
            vi = v[i]
            for j in range(n):
                vi[j] += w * (dv[0][i][j] + 2.0 * dv[1][i][j] + 2.0 * dv[2][i][j] + dv[3][i][j])
        s += h
        if (k + 1) % record_every == 0 or k + 1 == n_steps:
            record(s)

    return (
        np.asarray(taus, dtype=float),
        np.asarray(us, dtype=float),
        np.asarray(vs, dtype=float),
        np.asarray(ps, dtype=float),
    )


def pipeline(a, b, c, p_min, p_max, k_explore, t_exploit, expl, shocks):
    """Explore-then-exploit recursion; see module docstring.

    ``expl`` is the (k_explore, n) matrix of exploration prices and
    ``shocks`` the (k_explore + t_exploit, n) matrix of demand shocks.

    Returns (status, prices, quantities, mean_p, mean_q, m2, c_pq) where
    status is 0 on success and 1 when the exploration history carried zero
    price variance for some firm; m2 is the (symmetric) centered
    sum-of-squares matrix of prices and c_pq the per-firm centered
    price-quantity cross sum.
    """
    expl_l = [[float(x) for x in row] for row in np.asarray(expl, dtype=float)]
    shocks_l = [[float(x) for x in row] for row in np.asarray(shocks, dtype=float)]
    n = len(expl_l[0]) if k_explore > 0 else 0
    total = k_explore + t_exploit
    cross = c / (n - 1)

    prices = np.empty((total, n), dtype=float)
    quantities = np.empty((total, n), dtype=float)

    mean_p = [0.0] * n
    mean_q = [0.0] * n
    c_pq = [0.0] * n
    m2 = [[0.0] * n for _ in range(n)]
    d_old = [0.0] * n
    d_new = [0.0] * n
    cur = [0.0] * n
    nxt = [0.0] * n
    q = [0.0] * n
    status = 0

    for t in range(total):
        if t < k_explore:
            row = expl_l[t]
            for i in range(n):
                cur[i] = row[i]
        else:
            for i in range(n):
                cur[i] = nxt[i]

        sp = 0.0
        for i in range(n):
            sp += cur[i]
        sh = shocks_l[t]
        for i in range(n):
            q[i] = a - b * cur[i] + cross * (sp - cur[i]) + sh[i]

        prices[t] = cur
        quantities[t] = q

        # Welford updates for price means/co-movements and price-quantity
        # cross sums; upper triangle of m2 only, mirrored by the caller.
        nn = t + 1
        for i in range(n):
            d_old[i] = cur[i] - mean_p[i]
            mean_p[i] += d_old[i] / nn
            d_new[i] = cur[i] - mean_p[i]
        for i in range(n):
            di = d_old[i]
            mi = m2[i]
            for j in range(i, n):
                mi[j] += di * d_new[j]
        for i in range(n):
            dq = q[i] - mean_q[i]
            mean_q[i] += dq / nn
            c_pq[i] += d_old[i] * (q[i] - mean_q[i])

        if k_explore - 1 <= t < total - 1:
            for i in range(n):
                m2ii = m2[i][i]
                if m2ii <= 0.0:
                    status = 1
                    break
                beta = c_pq[i] / m2ii
                if beta < 0.0:
                    alpha = mean_q[i] - beta * mean_p[i]
                    pi = -alpha / (2.0 * beta)
                    if pi < p_min:
                        pi = p_min
                    elif pi > p_max:
                        pi = p_max
                else:
                    pi = p_max
                nxt[i] = pi
            if status:
                break

    m2_arr = np.empty((n, n), dtype=float)
    for i in range(n):
        for j in range(n):
            m2_arr[i, j] = m2[i][j] if j >= i else m2[j][i]
    return (
        status,
        prices,
        quantities,
        np.asarray(mean_p, dtype=float),
        np.asarray(mean_q, dtype=float),
        m2_arr,
        np.asarray(c_pq, dtype=float),
    )


def symmetric_run(a, b, c, p_min, p_max, s, sigma, hs, record_every):
    """Scalar symmetric reduction of ode_run.

    State (u, C): common running mean and common accumulated cross
    covariance; the own variance is v = C + sigma**2 identically. The
    common posted price is the clipped value of
    (a (C + sigma^2) + c sigma^2 u) / (2 ((b - c) C + b sigma^2)).

    Returns (taus, us, cs, ps) float64 arrays.
    """
    hs = [float(x) for x in hs]
    n_steps = len(hs)
    sig2 = sigma * sigma

    def price(u, cc):
        p = (a * (cc + sig2) + c * sig2 * u) / (2.0 * ((b - c) * cc + b * sig2))
        if p < p_min:
            return p_min
        if p > p_max:
            return p_max
        return p

    u = float(s)
    cc = 0.0
    taus = []
    us = []
    cs = []
    ps = []

    def record(s_now):
        taus.append(math.exp(s_now))
        us.append(u)
        cs.append(cc)
        ps.append(price(u, cc))

    record(0.0)
    sk = 0.0
    for k in range(n_steps):
        h = hs[k]
        tau_a = math.exp(sk)
        tau_m = math.exp(sk + 0.5 * h)
        tau_b = math.exp(sk + h)

        e1 = price(u, cc) - u
        du1, dc1 = e1, tau_a * e1 * e1
        u2, c2 = u + 0.5 * h * du1, cc + 0.5 * h * dc1
        e2 = price(u2, c2) - u2
        du2, dc2 = e2, tau_m * e2 * e2
        u3, c3 = u + 0.5 * h * du2, cc + 0.5 * h * dc2
        e3 = price(u3, c3) - u3
        du3, dc3 = e3, tau_m * e3 * e3
        u4, c4 = u + h * du3, cc + h * dc3
        e4 = price(u4, c4) - u4
        du4, dc4 = e4, tau_b * e4 * e4

        u += h / 6.0 * (du1 + 2.0 * du2 + 2.0 * du3 + du4)
        cc += h / 6.0 * (dc1 + 2.0 * dc2 + 2.0 * dc3 + dc4)
        sk += h
        if (k + 1) % record_every == 0 or k + 1 == n_steps:
            record(sk)

    return (
        np.asarray(taus, dtype=float),
        np.asarray(us, dtype=float),
        np.asarray(cs, dtype=float),
        np.asarray(ps, dtype=float),
    )
