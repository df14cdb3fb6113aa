"""
Compiled Newton loops for the forward and inverse solvers.

These mirror the numpy kernels in ``model`` for one cell at a time (d <= 3)
so that a whole time step runs without interpreter overhead. Status codes:
0 converged, 1 Newton cap reached, 2 line search stalled. On failure the
offending cell index is stored in ``info[1]``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_SMALL_RADIUS = 1e-12
DOMAIN_GUARD = 1.0 - 1e-9

OK, NO_CONVERGENCE, STALLED = 0, 1, 2


@njit(cache=True)
def _dot(x, y):
    s = 0.0
    for i in range(x.shape[0]):
        s += x[i] * y[i]
    return s


@njit(cache=True)
def _grad_hess(a_s, j_s, chi, eps, J, Jp, g, Hs):
    """Gradient and Hessian of g(J) = U(J) + chi |J - Jp|_eps into g, Hs."""
    d = J.shape[0]
    r = math.sqrt(_dot(J, J))
    k = 0.5 * math.pi / j_s
    theta = k * r
    c = math.cos(theta)
    d2 = a_s * k / (c * c)
    if r < _SMALL_RADIUS * j_s:
        d1r = a_s * k
        radial = 0.0
        r = 1.0
    else:
        d1r = a_s * math.tan(theta) / r
        radial = (d2 - d1r) / (r * r)
    n2 = eps
    for i in range(d):
        x = J[i] - Jp[i]
        n2 += x * x
    n = math.sqrt(n2)
    for i in range(d):
        xi = J[i] - Jp[i]
        g[i] = d1r * J[i] + chi * xi / n
        for m in range(d):
            xm = J[m] - Jp[m]
            Hs[i, m] = radial * J[i] * J[m] - chi * xi * xm / (n * n2)
        Hs[i, i] += d1r + chi / n


@njit(cache=True)
def _increment(a_s, j_s, chi, eps, J, Jp, step):
    """g(J + step) - g(J) without cancellation; inf outside the domain."""
    d = J.shape[0]
    r0sq = 0.0
    r1sq = 0.0
    num = 0.0
    x0sq = eps
    x1sq = eps
    for i in range(d):
        a = J[i] + step[i]
        r0sq += J[i] * J[i]
        r1sq += a * a
        num += (2.0 * J[i] + step[i]) * step[i]
        x = J[i] - Jp[i]
        x0sq += x * x
        x1sq += (x + step[i]) * (x + step[i])
    r0 = math.sqrt(r0sq)
    r1 = math.sqrt(r1sq)
    if r1 >= j_s:
        return math.inf
    dr = num / (r0 + r1) if r0 + r1 > 0.0 else 0.0
    k = 0.5 * math.pi / j_s
    t0 = k * r0
    dt = k * dr
    rel = -2.0 * math.sin(t0 + 0.5 * dt) * math.sin(0.5 * dt) / math.cos(t0)
    if rel <= -1.0:
        return math.inf
    du = -(2.0 * a_s * j_s / math.pi) * math.log1p(rel)
    den = math.sqrt(x0sq) + math.sqrt(x1sq)
    dn = num_x = 0.0
    for i in range(d):
        x = J[i] - Jp[i]
        num_x += (2.0 * x + step[i]) * step[i]
    if den > 0.0:
        dn = num_x / den
    return du + chi * dn


@njit(cache=True)
def _cholesky(A, L):
    d = A.shape[0]
    for i in range(d):
        for j in range(i + 1):
            s = A[i, j]
            for m in range(j):
                s -= L[i, m] * L[j, m]
            if i == j:
                L[i, i] = math.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
                L[j, i] = 0.0


@njit(cache=True)
def _cho_solve(L, b, out):
    d = b.shape[0]
    for i in range(d):
        s = b[i]
        for m in range(i):
            s -= L[i, m] * out[m]
        out[i] = s / L[i, i]
    for i in range(d - 1, -1, -1):
        s = out[i]
        for m in range(i + 1, d):
            s -= L[m, i] * out[m]
        out[i] = s / L[i, i]


@njit(cache=True)
def _solve_spd(A, b, out):
    """Cholesky solve of a small SPD system A out = b."""
    L = np.empty_like(A)
    _cholesky(A, L)
    _cho_solve(L, b, out)


@njit(cache=True)
def forward_solve(a_s, j_s, chi, H, Jp, eps, tol, abs_floor, rho, sigma, max_newton, max_bt, trace):
    """
    Damped Newton per cell. ``trace`` has shape (K, T, 4) with T = 0 (no
    recording) or T = max_newton; rows hold (tau, increment, slope, |grad|)
    of each accepted step.
    """
    K, d = Jp.shape
    J = Jp.copy()
    iters = np.zeros(K, np.int64)
    g0 = np.zeros(K)
    gfin = np.zeros(K)
    info = np.zeros(3, np.int64)  # status, failing cell, total backtracks
    g = np.empty(d)
    Hs = np.empty((d, d))
    direction = np.empty(d)
    step = np.empty(d)
    record = trace.shape[1] > 0
    for k in range(K):
        Jk = J[k]
        n = 0
        while True:
            _grad_hess(a_s[k], j_s[k], chi[k], eps, Jk, Jp[k], g, Hs)
            for i in range(d):
                g[i] -= H[i]
            gn = math.sqrt(_dot(g, g))
            if n == 0:
                g0[k] = gn
            gfin[k] = gn
            if gn <= max(tol * g0[k], abs_floor[k]):
                break
            if n >= max_newton:
                info[0] = NO_CONVERGENCE
                info[1] = k
                return J, iters, g0, gfin, info
            for i in range(d):
                g[i] = -g[i]
            _solve_spd(Hs, g, direction)
            slope = -_dot(g, direction)
            tau = 1.0
            tries = 0
            limit = DOMAIN_GUARD * j_s[k]
            while True:
                s = 0.0
                for i in range(d):
                    v = Jk[i] + tau * direction[i]
                    s += v * v
                if math.sqrt(s) <= limit:
                    break
                tau *= rho
                tries += 1
            while True:
                for i in range(d):
                    step[i] = tau * direction[i]
                inc = _increment(a_s[k], j_s[k], chi[k], eps, Jk, Jp[k], step) - _dot(H, step)
                if inc <= sigma * tau * slope:
                    break
                tau *= rho
                tries += 1
                if tries > max_bt:
                    info[0] = STALLED
                    info[1] = k
                    return J, iters, g0, gfin, info
            info[2] += tries
            if record:
                trace[k, n, 0] = tau
                trace[k, n, 1] = inc
                trace[k, n, 2] = slope
                trace[k, n, 3] = gn
            for i in range(d):
                Jk[i] += step[i]
            n += 1
        iters[k] = n
    return J, iters, g0, gfin, info


@njit(cache=True)
def _schur_direction(blocks, nu0, grad, out):
    """out = -(blockdiag(blocks) + nu0 E^T E)^-1 grad via the aggregate update."""
    K, d = grad.shape
    y = np.empty((K, d))
    W = np.empty((K, d, d))
    col = np.empty(d)
    tmp = np.empty(d)
    schur = np.eye(d)
    ysum = np.zeros(d)
    L = np.empty((d, d))
    for k in range(K):
        _cholesky(blocks[k], L)
        for i in range(d):
            col[i] = -grad[k, i]
        _cho_solve(L, col, tmp)
        for i in range(d):
            y[k, i] = tmp[i]
            ysum[i] += tmp[i]
        for m in range(d):
            for i in range(d):
                col[i] = 1.0 if i == m else 0.0
            _cho_solve(L, col, tmp)
            for i in range(d):
                W[k, i, m] = tmp[i]
                schur[i, m] += nu0 * tmp[i]
    s = np.empty(d)
    _solve_spd(schur, ysum, s)
    for k in range(K):
        for i in range(d):
            acc = 0.0
            for m in range(d):
                acc += W[k, i, m] * s[m]
            out[k, i] = y[k, i] - nu0 * acc


@njit(cache=True)
def _dense_direction(blocks, nu0, grad, out):
    K, d = grad.shape
    n = K * d
    A = np.zeros((n, n))
    for p in range(K):
        for q in range(K):
            for i in range(d):
                A[p * d + i, q * d + i] = nu0
    for k in range(K):
        for i in range(d):
            for m in range(d):
                A[k * d + i, k * d + m] += blocks[k, i, m]
    rhs = np.empty(n)
    for k in range(K):
        for i in range(d):
            rhs[k * d + i] = -grad[k, i]
    x = np.linalg.solve(A, rhs)
    for k in range(K):
        for i in range(d):
            out[k, i] = x[k * d + i]


@njit(cache=True)
def inverse_solve(a_s, j_s, chi, nu0, B, Jp, J0, eps, tol, abs_floor, rho, sigma, max_newton, max_bt, dense, trace):
    """Coupled damped Newton from J0; ``trace`` has shape (T, 4) as in forward_solve."""
    K, d = Jp.shape
    J = J0.copy()
    grad = np.empty((K, d))
    blocks = np.empty((K, d, d))
    direction = np.empty((K, d))
    step = np.empty((K, d))
    g = np.empty(d)
    residual = np.empty(d)
    info = np.zeros(3, np.int64)
    record = trace.shape[0] > 0
    g0 = 0.0
    gn = 0.0
    n = 0
    while True:
        for i in range(d):
            residual[i] = B[i]
        for k in range(K):
            for i in range(d):
                residual[i] -= J[k, i]
        gsq = 0.0
        for k in range(K):
            _grad_hess(a_s[k], j_s[k], chi[k], eps, J[k], Jp[k], g, blocks[k])
            for i in range(d):
                grad[k, i] = g[i] - nu0 * residual[i]
                gsq += grad[k, i] * grad[k, i]
        gn = math.sqrt(gsq)
        if n == 0:
            g0 = gn
        if gn <= max(tol * g0, abs_floor):
            break
        if n >= max_newton:
            info[0] = NO_CONVERGENCE
            break
        if dense:
            _dense_direction(blocks, nu0, grad, direction)
        else:
            _schur_direction(blocks, nu0, grad, direction)
        slope = 0.0
        for k in range(K):
            for i in range(d):
                slope += grad[k, i] * direction[k, i]
        tau = 1.0
        tries = 0
        while True:
            outside = False
            for k in range(K):
                s = 0.0
                for i in range(d):
                    v = J[k, i] + tau * direction[k, i]
                    s += v * v
                if math.sqrt(s) > DOMAIN_GUARD * j_s[k]:
                    outside = True
                    break
            if not outside:
                break
            tau *= rho
            tries += 1
        while True:
            total = np.zeros(d)
            inc = 0.0
            for k in range(K):
                for i in range(d):
                    step[k, i] = tau * direction[k, i]
                    total[i] += step[k, i]
                inc += _increment(a_s[k], j_s[k], chi[k], eps, J[k], Jp[k], step[k])
            inc += nu0 * (0.5 * _dot(total, total) - _dot(residual, total))
            if inc <= sigma * tau * slope:
                break
            tau *= rho
            tries += 1
            if tries > max_bt:
                info[0] = STALLED
                return J, n, g0, gn, info
        info[2] += tries
        if record:
            trace[n, 0] = tau
            trace[n, 1] = inc
            trace[n, 2] = slope
            trace[n, 3] = gn
        for k in range(K):
            for i in range(d):
                J[k, i] += step[k, i]
        n += 1
    return J, n, g0, gn, info
