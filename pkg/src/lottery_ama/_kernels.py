"""Fused per-profile soft-AMA gradient, compiled with numba.

Computes exactly what ``soft._menu_gradient_numpy`` computes, one profile at
a time, so the ``(B, K)`` temporaries never hit memory.  Softmax terms with
``lam * (s_k - max s) < -EXP_CUTOFF`` are set to zero instead of evaluated;
their true value is below 1e-26 of the leading term.
"""

import math

import numpy as np
from numba import njit

EXP_CUTOFF = 60.0


@njit(cache=True)
def _softmax_into(z, lam, out):
    top = z[0]
    for k in range(1, z.shape[0]):
        if z[k] > top:
            top = z[k]
    total = 0.0
    for k in range(z.shape[0]):
        d = lam * (z[k] - top)
        if d < -EXP_CUTOFF:
            out[k] = 0.0
        else:
            e = math.exp(d)
            out[k] = e
            total += e
    inv = 1.0 / total
    for k in range(z.shape[0]):
        out[k] *= inv


@njit(cache=True)
def fused_menu_gradient(welfare, bids, weights, boosts, lam, g_alloc, g_boost, g_weight):
    """Accumulate gradients into ``g_*`` in place; return the summed revenue.

    ``welfare`` is ``(B, m, K)`` unweighted bidder welfare, ``bids`` ``(B, m, n)``.
    """
    B, m, K = welfare.shape
    n = bids.shape[2]
    scores = np.empty(K)
    without = np.empty(K)
    p_full = np.empty(K)
    q = np.empty(K)
    g_scores = np.empty(K)
    g_without = np.empty((m, K))
    pay = np.empty(m)
    total = 0.0
    for b in range(B):
        for k in range(K):
            s = boosts[k]
            for l in range(m):
                s += weights[l] * welfare[b, l, k]
            scores[k] = s
            g_scores[k] = 0.0
        _softmax_into(scores, lam, p_full)
        for i in range(m):
            wi = weights[i]
            c = 1.0 / wi
            for k in range(K):
                without[k] = scores[k] - wi * welfare[b, i, k]
            _softmax_into(without, lam, q)
            cf = 0.0
            realized = 0.0
            for k in range(K):
                cf += q[k] * without[k]
                realized += p_full[k] * without[k]
            pay[i] = c * (cf - realized)
            total += pay[i]
            for k in range(K):
                g_without[i, k] = c * (q[k] + lam * q[k] * (without[k] - cf) - p_full[k])
                g_scores[k] -= c * lam * p_full[k] * (without[k] - realized)
        for k in range(K):
            h = g_scores[k]
            for i in range(m):
                h += g_without[i, k]
            g_boost[k] += h
            for l in range(m):
                gw = h - g_without[l, k]
                if gw != 0.0:
                    g_weight[l] += gw * welfare[b, l, k]
                    scaled = weights[l] * gw
                    for j in range(n):
                        g_alloc[k, l, j] += scaled * bids[b, l, j]
        for l in range(m):
            g_weight[l] -= pay[l] / weights[l]
    return total
