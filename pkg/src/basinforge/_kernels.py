"""Compiled propagation kernels.

Everything here works on plain float arrays so it can be jitted in nopython
mode: ``par`` is the packed parameter vector built by ``ModelParams.pack()``
and ``y`` holds ``(q, v)`` or, for the variational system, ``(q, v, dq1, dv1,
dq2, dv2)``.  Status codes: 0 ok, 1 step underflow, 2 non-finite state,
3 stopped early because the cubic energy fell below ``stop_energy``.
"""
import math

import numpy as np
from numba import njit

OK = 0
UNDERFLOW = 1
NONFINITE = 2
STOPPED = 3

TWO_PI = 2.0 * math.pi
LADDER = 1.3

# packed parameter slots, see models.P_*
_MODEL, _EPS, _KIND, _G0, _T0, _A0 = 0, 1, 2, 3, 4, 5


@njit(cache=True)
def gamma_at(par, t):
    kind = int(par[_KIND])
    g0 = par[_G0]
    T0 = par[_T0]
    if kind == 0 or T0 == 0.0:
        return g0
    if kind == 1:
        if t < T0:
            return g0 * t / T0
        return g0
    return -g0 * math.expm1(-t / T0)


@njit(cache=True)
def knee_after(par, t):
    """Next non-analytic point of gamma(t) after t, or +inf."""
    if int(par[_KIND]) == 1 and par[_T0] > 0.0 and t < par[_T0]:
        return par[_T0]
    return np.inf


@njit(cache=True)
def rhs(par, t, y, dy):
    eps = par[_EPS]
    g = gamma_at(par, t)
    q = y[0]
    v = y[1]
    if int(par[_MODEL]) == 0:
        amp = 1.0 + eps * math.cos(t)
        dy[0] = v
        dy[1] = -amp * q * q * q - g * v
        if y.shape[0] == 6:
            jq = -3.0 * amp * q * q
            dy[2] = y[3]
            dy[3] = jq * y[2] - g * y[3]
            dy[4] = y[5]
            dy[5] = jq * y[4] - g * y[5]
    else:
        s2 = math.sin(2.0 * q)
        c2 = math.cos(2.0 * q)
        ct = math.cos(t)
        st = math.sin(t)
        # k = 0 term has a_0 = 0; walk k = 1..7 and mirror to negative k
        ck = 1.0
        sk = 0.0
        force = 0.0
        dforce = 0.0
        for k in range(1, 8):
            ck, sk = ck * ct - sk * st, sk * ct + ck * st
            ap = par[_A0 + 3 + k]
            # sin(2q - kt) = s2 ck - c2 sk ; cos(2q - kt) = c2 ck + s2 sk
            force += ap * (s2 * ck - c2 * sk)
            dforce += ap * (c2 * ck + s2 * sk)
            if k <= 3:
                am = par[_A0 + 3 - k]
                force += am * (s2 * ck + c2 * sk)
                dforce += am * (c2 * ck - s2 * sk)
        dy[0] = v
        dy[1] = 2.0 * eps * force - g * (v - 1.0)
        if y.shape[0] == 6:
            jq = 4.0 * eps * dforce
            dy[2] = y[3]
            dy[3] = jq * y[2] - g * y[3]
            dy[4] = y[5]
            dy[5] = jq * y[4] - g * y[5]


@njit(cache=True)
def _finite(y):
    for i in range(y.shape[0]):
        if not math.isfinite(y[i]):
            return False
    return True


@njit(cache=True)
def _energy(y):
    return 0.5 * y[1] * y[1] + 0.25 * y[0] ** 4


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4) with PI step control


@njit(cache=True)
def _dp_segment(par, y, t, t1, tol, hmax, hmin, h, stop_energy):
    n = y.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    k6 = np.empty(n)
    k7 = np.empty(n)
    yt = np.empty(n)
    ynew = np.empty(n)
    rhs(par, t, y, k1)
    errold = 1e-4
    check_energy = stop_energy > 0.0 and int(par[_MODEL]) == 0
    while t < t1:
        last = False
        if h > hmax:
            h = hmax
        if t + h >= t1:
            h = t1 - t
            last = True
        for i in range(n):
            yt[i] = y[i] + h * (0.2 * k1[i])
        rhs(par, t + 0.2 * h, yt, k2)
        for i in range(n):
            yt[i] = y[i] + h * (3.0 / 40.0 * k1[i] + 9.0 / 40.0 * k2[i])
        rhs(par, t + 0.3 * h, yt, k3)
        for i in range(n):
            yt[i] = y[i] + h * (44.0 / 45.0 * k1[i] - 56.0 / 15.0 * k2[i] + 32.0 / 9.0 * k3[i])
        rhs(par, t + 0.8 * h, yt, k4)
        for i in range(n):
            yt[i] = y[i] + h * (
                19372.0 / 6561.0 * k1[i]
                - 25360.0 / 2187.0 * k2[i]
                + 64448.0 / 6561.0 * k3[i]
                - 212.0 / 729.0 * k4[i]
            )
        rhs(par, t + 8.0 / 9.0 * h, yt, k5)
        for i in range(n):
            yt[i] = y[i] + h * (
                9017.0 / 3168.0 * k1[i]
                - 355.0 / 33.0 * k2[i]
                + 46732.0 / 5247.0 * k3[i]
                + 49.0 / 176.0 * k4[i]
                - 5103.0 / 18656.0 * k5[i]
            )
        rhs(par, t + h, yt, k6)
        for i in range(n):
            ynew[i] = y[i] + h * (
                35.0 / 384.0 * k1[i]
                + 500.0 / 1113.0 * k3[i]
                + 125.0 / 192.0 * k4[i]
                - 2187.0 / 6784.0 * k5[i]
                + 11.0 / 84.0 * k6[i]
            )
        rhs(par, t + h, ynew, k7)
        err = 0.0
        for i in range(n):
            e = h * (
                71.0 / 57600.0 * k1[i]
                - 71.0 / 16695.0 * k3[i]
                + 71.0 / 1920.0 * k4[i]
                - 17253.0 / 339200.0 * k5[i]
                + 22.0 / 525.0 * k6[i]
                - 1.0 / 40.0 * k7[i]
            )
            sc = tol + tol * max(abs(y[i]), abs(ynew[i]))
            r = abs(e) / sc
            if r > err:
                err = r
        if not math.isfinite(err):
            return t, NONFINITE, h
        if err <= 1.0:
            t = t1 if last else t + h
            for i in range(n):
                y[i] = ynew[i]
                k1[i] = k7[i]
            if not _finite(y):
                return t, NONFINITE, h
            if check_energy and _energy(y) < stop_energy:
                return t, STOPPED, h
            e_eff = max(err, 1e-10)
            ratio = 0.9 * e_eff ** (-0.17) * max(errold, 1e-4) ** 0.04
            errold = err
            ratio = min(10.0, max(0.2, ratio))
            if not last:
                h = h * ratio
        else:
            ratio = max(0.2, 0.9 * err ** (-0.2))
            h = h * ratio
            if h < hmin:
                return t, UNDERFLOW, h
    return t, OK, h


@njit(cache=True)
def rk_propagate(par, y, t0, t1, tol, hmax, hmin, h0, stop_energy):
    """Advance y in place from t0 to exactly t1; returns (t, status, h)."""
    t = t0
    h = h0 if h0 > 0.0 else min(0.05, hmax)
    while t < t1:
        stop = min(t1, knee_after(par, t))
        t, status, h = _dp_segment(par, y, t, stop, tol, hmax, hmin, h, stop_energy)
        if status != OK:
            return t, status, h
    return t, OK, h


# ---------------------------------------------------------------------------
# Taylor series (cubic model only)


@njit(cache=True)
def taylor_coeffs(par, q0, v0, t0, order, c):
    """Fill c[0..order] with the Taylor coefficients of q about t0."""
    eps = par[_EPS]
    kind = int(par[_KIND])
    g0 = par[_G0]
    T0 = par[_T0]
    m = order + 1
    f = np.zeros(m)
    g = np.zeros(m)
    q2 = np.zeros(m)
    q3 = np.zeros(m)
    cs = math.cos(t0)
    sn = math.sin(t0)
    fact = 1.0
    for k in range(m):
        if k > 0:
            fact *= k
        r = k % 4
        if r == 0:
            f[k] = cs / fact
        elif r == 1:
            f[k] = -sn / fact
        elif r == 2:
            f[k] = -cs / fact
        else:
            f[k] = sn / fact
    # gamma(t0 + s) as a series in s; linear pieces never straddle the knee
    ng = 1
    if kind == 0 or T0 == 0.0:
        g[0] = g0
    elif kind == 1:
        if t0 < T0:
            g[0] = g0 * t0 / T0
            g[1] = g0 / T0
            ng = 2
        else:
            g[0] = g0
    else:
        decay = math.exp(-t0 / T0)
        g[0] = g0 * (1.0 - decay)
        term = -g0 * decay
        for k in range(1, m):
            term *= -1.0 / (T0 * k)
            g[k] = term
        ng = m
    c[0] = q0
    c[1] = v0
    for k in range(order - 1):
        s = 0.0
        for j in range(k + 1):
            s += c[j] * c[k - j]
        q2[k] = s
        s = 0.0
        for j in range(k + 1):
            s += q2[j] * c[k - j]
        q3[k] = s
        s = 0.0
        for j in range(k + 1):
            s += f[j] * q3[k - j]
        fq3 = s
        s = 0.0
        for j in range(min(k + 1, ng)):
            s += g[j] * (k - j + 1) * c[k - j + 1]
        c[k + 2] = -(q3[k] + eps * fq3 + s) / ((k + 1) * (k + 2))


@njit(cache=True)
def taylor_eval(c, order, h):
    """Series value, first and second derivative at offset h."""
    x = c[order]
    dx = order * c[order]
    ddx = order * (order - 1) * c[order]
    for k in range(order - 1, -1, -1):
        x = x * h + c[k]
        if k >= 1:
            dx = dx * h + k * c[k]
        if k >= 2:
            ddx = ddx * h + k * (k - 1) * c[k]
    return x, dx, ddx


@njit(cache=True)
def taylor_residual(par, c, order, t0, h):
    x, dx, ddx = taylor_eval(c, order, h)
    t = t0 + h
    return abs(ddx + (1.0 + par[_EPS] * math.cos(t)) * x * x * x + gamma_at(par, t) * dx)


@njit(cache=True)
def taylor_choose_step(par, c, order, t0, h_start, cap, tol, hmin):
    """Walk the geometric ladder; returns (h, status)."""
    h = min(h_start, cap)
    if taylor_residual(par, c, order, t0, h) <= tol:
        while h < cap:
            nxt = min(h * LADDER, cap)
            if taylor_residual(par, c, order, t0, nxt) <= tol:
                h = nxt
            else:
                break
        return h, OK
    while True:
        h = h / LADDER
        if h < hmin:
            return h, UNDERFLOW
        if taylor_residual(par, c, order, t0, h) <= tol:
            return h, OK


@njit(cache=True)
def taylor_propagate(par, y, t0, t1, tol, order, hmax, hmin, h0, stop_energy):
    """Advance (q, v) in place from t0 to exactly t1; returns (t, status, h)."""
    c = np.empty(order + 1)
    t = t0
    h_ladder = h0 if h0 > 0.0 else 0.7
    check_energy = stop_energy > 0.0
    while t < t1:
        bound = min(t1, knee_after(par, t))
        cap = min(hmax, bound - t)
        taylor_coeffs(par, y[0], y[1], t, order, c)
        h, status = taylor_choose_step(par, c, order, t, h_ladder, cap, tol, hmin)
        if status != OK:
            return t, status, h
        x, dx, _ = taylor_eval(c, order, h)
        y[0] = x
        y[1] = dx
        if h < cap or cap == hmax:
            h_ladder = h
        t = bound if h == bound - t else t + h
        if not (math.isfinite(y[0]) and math.isfinite(y[1])):
            return t, NONFINITE, h
        if check_energy and _energy(y) < stop_energy:
            return t, STOPPED, h
    return t, OK, h_ladder


@njit(cache=True)
def propagate(method, par, y, t0, t1, tol, order, hmax, hmin, h0, stop_energy):
    if method == 1 and y.shape[0] == 2 and int(par[_MODEL]) == 0:
        return taylor_propagate(par, y, t0, t1, tol, order, hmax, hmin, h0, stop_energy)
    return rk_propagate(par, y, t0, t1, tol, hmax, hmin, h0, stop_energy)


@njit(cache=True)
def strobe(method, par, y, t0, n, sub, tol, order, hmax, hmin, out):
    """Record y at t0 + 2 pi j / sub for j = 1..n*sub into out[j-1]."""
    h = 0.0
    t = t0
    step = TWO_PI / sub
    for j in range(1, n * sub + 1):
        t_next = t0 + j * step
        t, status, h = propagate(method, par, y, t, t_next, tol, order, hmax, hmin, h, 0.0)
        if status != OK:
            return status
        t = t_next
        out[j - 1, 0] = y[0]
        out[j - 1, 1] = y[1]
    return OK
