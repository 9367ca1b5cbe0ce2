"""Compiled inner/outer loops for quadratic and softplus-ridge problems."""
import math

import numpy as np
from numba import njit

from .averaging import compensated_mean_step
from .sampling import fill_order


@njit(cache=True)
def _sigmoid(t):
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


@njit(cache=True)
def component_grad(P, q, eps, a, j, x, out):
    n = x.shape[0]
    for r in range(n):
        acc = -q[j, r]
        for c in range(n):
            acc += P[j, r, c] * x[c]
        out[r] = acc
    if eps[j] != 0.0:
        t = 0.0
        for c in range(n):
            t += a[j, c] * x[c]
        w = eps[j] * _sigmoid(t)
        for r in range(n):
            out[r] += w * a[j, r]


@njit(cache=True)
def run_kernel(P, q, eps, a, x0, xstar, R, s, K, mode, fixed, key,
               log_cycles, capture_cycles, dense, guard):
    """Run ``K`` cycles.

    Returns ``(status, x_log, xbar_log, abar_log, x_dense, xbar_dense,
    abar_dense, E, orders, inner_max, cap_inner, cap_orders)``; ``status`` is
    -1 on success, otherwise the cycle at which the run diverged.
    """
    m = q.shape[0]
    n = q.shape[1]
    nlog = log_cycles.shape[0]
    ncap = capture_cycles.shape[0]
    x_log = np.zeros((nlog, n))
    xbar_log = np.zeros((nlog, n))
    abar_log = np.zeros(nlog)
    Kd = K if dense else 0
    x_dense = np.zeros((Kd + 1 if dense else 0, n))
    xbar_dense = np.zeros((Kd + 1 if dense else 0, n))
    abar_dense = np.zeros(Kd + 1 if dense else 0)
    E = np.zeros((Kd, n))
    orders = np.zeros((Kd, m), dtype=np.int64)
    inner_max = np.zeros(Kd)
    cap_inner = np.zeros((ncap, m + 1, n))
    cap_orders = np.zeros((ncap, m), dtype=np.int64)

    x = x0.copy()
    xk = np.zeros(n)
    g = np.zeros(n)
    g0 = np.zeros(n)
    order = np.zeros(m, dtype=np.int64)
    xbar = np.zeros(n)
    xbar_c = np.zeros(n)
    abar = np.zeros(1)
    abar_c = np.zeros(1)
    aval = np.zeros(1)
    d0 = 0.0
    for r in range(n):
        d0 += (x0[r] - xstar[r]) ** 2
    limit = guard * max(1.0, math.sqrt(d0))

    li = 0
    ci = 0
    status = -1
    for k in range(K):
        if li < nlog and log_cycles[li] == k:
            x_log[li] = x
            xbar_log[li] = xbar
            abar_log[li] = abar[0]
            li += 1
        if dense:
            x_dense[k] = x
            xbar_dense[k] = xbar
            abar_dense[k] = abar[0]
        fill_order(key, k, mode, fixed, order)
        alpha = R / (k + 1.0) ** s
        captured = ci < ncap and capture_cycles[ci] == k
        for r in range(n):
            xk[r] = x[r]
        for i in range(m):
            j = order[i]
            if dense:
                dist = 0.0
                for r in range(n):
                    dist += (x[r] - xstar[r]) ** 2
                dist = math.sqrt(dist)
                if dist > inner_max[k]:
                    inner_max[k] = dist
            if captured:
                cap_inner[ci, i] = x
            component_grad(P, q, eps, a, j, x, g)
            if dense:
                component_grad(P, q, eps, a, j, xk, g0)
                for r in range(n):
                    E[k, r] += g[r] - g0[r]
            for r in range(n):
                x[r] -= alpha * g[r]
        if captured:
            cap_inner[ci, m] = x
            cap_orders[ci] = order
            ci += 1
        if dense:
            orders[k] = order
        compensated_mean_step(xbar, xbar_c, xk, k + 1.0)
        aval[0] = alpha
        compensated_mean_step(abar, abar_c, aval, k + 1.0)
        dist = 0.0
        for r in range(n):
            dist += (x[r] - xstar[r]) ** 2
        if not math.isfinite(dist) or math.sqrt(dist) > limit:
            status = k
            break
    if status < 0:
        if li < nlog and log_cycles[li] == K:
            x_log[li] = x
            xbar_log[li] = xbar
            abar_log[li] = abar[0]
        if dense:
            x_dense[K] = x
            xbar_dense[K] = xbar
            abar_dense[K] = abar[0]
    return (status, x_log, xbar_log, abar_log, x_dense, xbar_dense, abar_dense,
            E, orders, inner_max, cap_inner, cap_orders)
