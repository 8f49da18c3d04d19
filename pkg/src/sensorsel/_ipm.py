"""Compiled log-barrier kernel for the SCA surrogate.

Variables are packed as ``x = [gamma, eta, p]`` over the k candidate sensors.
Constraint order (all ``c(x) <= 0``)::

    [0k, 1k)  interference:  sum_{j != i} h_j p_j + sigma2 - eta_i
    [1k, 2k)  QoS surrogate: 4 u v + (u - v - b)^2 - 4 h p / theta,
              with u = a eta and v = gamma / a
    [2k, 3k)  -gamma
    [3k, 4k)  gamma - 1
    [4k, 5k)  -p
    [5k, 6k)  p - p_max

The QoS surrogate is ``(u + v)^2 - 2 b (u - v) + b^2`` rewritten to avoid
cancellation near the tangent point; ``a = 1`` gives the unscaled bound.
"""

import numpy as np
from numba import njit

OK = 0
MAX_ITER = 1


@njit(cache=True)
def trace_objective(M0, J, g):
    """Value, gradient and Hessian of Tr((M0 + sum g_i J_i)^{-1})."""
    n = M0.shape[0]
    k = g.shape[0]
    M = M0.copy()
    for i in range(k):
        for a in range(n):
            for c in range(n):
                M[a, c] += g[i] * J[i, a, c]
    W = np.linalg.inv(M)
    f = 0.0
    for a in range(n):
        f += W[a, a]
    # K_i = W J_i W and JW_i = J_i W;  grad_i = -Tr K_i,  H_ij = 2 Tr(K_i J_j W)
    JW = np.zeros((k, n, n))
    K = np.zeros((k, n, n))
    grad = np.empty(k)
    for i in range(k):
        for a in range(n):
            for c in range(n):
                s = 0.0
                for e in range(n):
                    s += J[i, a, e] * W[e, c]
                JW[i, a, c] = s
        tr = 0.0
        for a in range(n):
            for c in range(n):
                s = 0.0
                for e in range(n):
                    s += W[a, e] * JW[i, e, c]
                K[i, a, c] = s
            tr += K[i, a, a]
        grad[i] = -tr
    H = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            s = 0.0
            for a in range(n):
                for c in range(n):
                    s += K[i, a, c] * JW[j, c, a]
            H[i, j] = 2.0 * s
            H[j, i] = 2.0 * s
    return f, grad, H


@njit(cache=True)
def constraints(x, h, th, pm, b, a, sigma2):
    k = h.shape[0]
    c = np.empty(6 * k)
    tot = 0.0
    for j in range(k):
        tot += h[j] * x[2 * k + j]
    for i in range(k):
        g = x[i]
        e = x[k + i]
        p = x[2 * k + i]
        c[i] = tot - h[i] * p + sigma2 - e
        u = a[i] * e
        v = g / a[i]
        d = u - v - b[i]
        c[k + i] = 4.0 * u * v + d * d - 4.0 * h[i] * p / th[i]
        c[2 * k + i] = -g
        c[3 * k + i] = g - 1.0
        c[4 * k + i] = -p
        c[5 * k + i] = p - pm[i]
    return c


@njit(cache=True)
def jacobian(x, h, th, b, a):
    k = h.shape[0]
    D = np.zeros((6 * k, 3 * k))
    for i in range(k):
        g = x[i]
        e = x[k + i]
        for j in range(k):
            if j != i:
                D[i, 2 * k + j] = h[j]
        D[i, k + i] = -1.0
        u = a[i] * e
        v = g / a[i]
        D[k + i, i] = 2.0 * (u + v + b[i]) / a[i]
        D[k + i, k + i] = 2.0 * (u + v - b[i]) * a[i]
        D[k + i, 2 * k + i] = -4.0 * h[i] / th[i]
        D[2 * k + i, i] = -1.0
        D[3 * k + i, i] = 1.0
        D[4 * k + i, 2 * k + i] = -1.0
        D[5 * k + i, 2 * k + i] = 1.0
    return D


@njit(cache=True)
def _barrier_phi(x, t, M0, J, h, th, pm, b, a, sigma2):
    c = constraints(x, h, th, pm, b, a, sigma2)
    acc = 0.0
    for v in c:
        if v >= 0.0:
            return np.inf
        acc -= np.log(-v)
    k = h.shape[0]
    M = M0.copy()
    for i in range(k):
        M += x[i] * J[i]
    # M is positive definite whenever gamma >= 0, which the constraints enforce
    W = np.linalg.inv(M)
    f = 0.0
    for a in range(M.shape[0]):
        f += W[a, a]
    return t * f + acc


@njit(cache=True)
def _barrier_newton(x, t, M0, J, h, th, pm, b, a, sigma2):
    """Gradient and Hessian of the barrier function, assembled blockwise."""
    k = h.shape[0]
    c = constraints(x, h, th, pm, b, a, sigma2)
    w = -1.0 / c
    f, gf, Hf = trace_objective(M0, J, x[:k])
    g = np.zeros(3 * k)
    H = np.zeros((3 * k, 3 * k))
    wi = w[:k]
    W1 = 0.0
    W2 = 0.0
    for i in range(k):
        W1 += wi[i]
        W2 += wi[i] * wi[i]
    for i in range(k):
        gi, ei, pi = i, k + i, 2 * k + i
        # objective
        g[gi] += t * gf[i]
        for j in range(k):
            H[gi, j] += t * Hf[i, j]
        # interference rows
        g[ei] -= wi[i]
        g[pi] += h[i] * (W1 - wi[i])
        H[ei, ei] += wi[i] * wi[i]
        for j in range(k):
            pj = 2 * k + j
            if j != i:
                v = -wi[i] * wi[i] * h[j]
                H[ei, pj] += v
                H[pj, ei] += v
                H[pi, pj] += h[i] * h[j] * (W2 - wi[i] * wi[i] - wi[j] * wi[j])
            else:
                H[pi, pi] += h[i] * h[i] * (W2 - wi[i] * wi[i])
        # QoS surrogate row
        q = w[k + i]
        u = a[i] * x[ei]
        v = x[gi] / a[i]
        ag = 2.0 * (u + v + b[i]) / a[i]
        ae = 2.0 * (u + v - b[i]) * a[i]
        ap = -4.0 * h[i] / th[i]
        g[gi] += q * ag
        g[ei] += q * ae
        g[pi] += q * ap
        q2 = q * q
        H[gi, gi] += q2 * ag * ag + 2.0 * q / (a[i] * a[i])
        H[ei, ei] += q2 * ae * ae + 2.0 * q * a[i] * a[i]
        v = q2 * ag * ae + 2.0 * q
        H[gi, ei] += v
        H[ei, gi] += v
        v = q2 * ag * ap
        H[gi, pi] += v
        H[pi, gi] += v
        v = q2 * ae * ap
        H[ei, pi] += v
        H[pi, ei] += v
        H[pi, pi] += q2 * ap * ap
        # boxes
        lo = w[2 * k + i]
        hi = w[3 * k + i]
        g[gi] += hi - lo
        H[gi, gi] += lo * lo + hi * hi
        lo = w[4 * k + i]
        hi = w[5 * k + i]
        g[pi] += hi - lo
        H[pi, pi] += lo * lo + hi * hi
    return g, H


@njit(cache=True)
def _solve_spd(H, rhs):
    """Cholesky solve after symmetric diagonal scaling, with a tiny relative ridge."""
    n = H.shape[0]
    d = np.empty(n)
    for i in range(n):
        d[i] = 1.0 / np.sqrt(max(H[i, i], 1e-300))
    L = np.zeros((n, n))
    for j in range(n):
        s = H[j, j] * d[j] * d[j] + 1e-13
        for m in range(j):
            s -= L[j, m] * L[j, m]
        if s <= 0.0:
            # lost definiteness to rounding; fall back to LU on the scaled matrix
            Hs = H * np.outer(d, d)
            for i in range(n):
                Hs[i, i] += 1e-13
            return d * np.linalg.solve(Hs, rhs * d)
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, n):
            s = H[i, j] * d[i] * d[j]
            for m in range(j):
                s -= L[i, m] * L[j, m]
            L[i, j] = s / L[j, j]
    y = np.empty(n)
    for i in range(n):
        s = rhs[i] * d[i]
        for m in range(i):
            s -= L[i, m] * y[m]
        y[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = y[i]
        for m in range(i + 1, n):
            s -= L[m, i] * y[m]
        y[i] = s / L[i, i]
    return d * y


@njit(cache=True)
def _center(x, t, M0, J, h, th, pm, b, a, sigma2, newton_tol, max_iter):
    """Damped Newton on ``t f(x) - sum log(-c(x))``. Returns (x, steps, ok)."""
    eps = np.finfo(np.float64).eps
    phi = _barrier_phi(x, t, M0, J, h, th, pm, b, a, sigma2)
    for it in range(max_iter):
        g, H = _barrier_newton(x, t, M0, J, h, th, pm, b, a, sigma2)
        dx = _solve_spd(H, -g)
        dec2 = -(g @ dx)
        if dec2 <= 2.0 * max(newton_tol, 64.0 * eps * abs(phi)):
            return x, it, True
        s = 1.0
        while True:
            xn = x + s * dx
            phin = _barrier_phi(xn, t, M0, J, h, th, pm, b, a, sigma2)
            if phin <= phi - 0.25 * s * dec2:
                break
            s *= 0.5
            if s < 1e-14:
                # roundoff floor: no representable descent left
                return x, it, True
        if np.all(xn == x):
            return x, it, True
        x = xn
        phi = phin
    return x, max_iter, False


@njit(cache=True)
def solve(x, M0, J, h, th, pm, b, a, sigma2, t0, mu, gap_tol, newton_tol, max_newton):
    """Barrier method from a strictly feasible ``x``.

    Returns ``(x, lam, newton_steps, status)`` where ``lam = 1 / (-t c(x))``
    are the central-path multiplier estimates at the final weight.
    """
    m = 6 * h.shape[0]
    t = t0
    total = 0
    while True:
        x, steps, ok = _center(x, t, M0, J, h, th, pm, b, a, sigma2, newton_tol, max_newton)
        total += steps
        if not ok:
            c = constraints(x, h, th, pm, b, a, sigma2)
            return x, -1.0 / (t * c), total, MAX_ITER
        if m / t < gap_tol:
            break
        t *= mu
    c = constraints(x, h, th, pm, b, a, sigma2)
    return x, -1.0 / (t * c), total, OK
