"""Softmax surrogate of the AMA and its closed-form gradient.

Both the realized outcome and the counterfactual "without bidder i" outcome
are replaced by softmax-weighted expectations over the menu, with the scores
multiplied by a sharpness ``lam`` (large ``lam`` -> hard argmax).  For one
profile, with full scores ``s``, scores without bidder i ``t``,
``q = softmax(lam * t)`` and ``p = softmax(lam * s)``, the soft payment is

    pay_i = (<q, t> - <p, t>) / w_i.

The gradient is reverse accumulation through welfare -> scores -> softmax
-> payment, using

    d<q, t>/dt = q + lam * q * (t - <q, t>)
    d<p, t>/ds = lam * p * (t - <p, t>)
    d<p, t>/dt = p
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lottery_ama.allocations import additive_vjp, sigmoid, unit_demand_vjp, with_null
from lottery_ama.errors import ConfigError, TrainingError
from lottery_ama.mechanism import bidder_welfare
from lottery_ama.params import AmaParams

DEFAULT_SHARPNESS = 100.0

# profiles per chunk are chosen so that one (chunk, K) buffer stays under this
_CHUNK_ELEMENTS = 1 << 20


@dataclass(frozen=True)
class SoftConfig:
    sharpness: float = DEFAULT_SHARPNESS

    def __post_init__(self):
        if not self.sharpness > 0:
            raise ConfigError(f"sharpness must be positive, got {self.sharpness}")


@dataclass
class GradientBundle:
    """Soft revenue and its gradient with respect to every trainable array.

    Keys of ``grads`` match ``AmaParams.trainable()``.
    """

    revenue: float
    grads: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.grads[name]


def _sharpness(cfg) -> float:
    if cfg is None:
        return DEFAULT_SHARPNESS
    if isinstance(cfg, SoftConfig):
        return cfg.sharpness
    return SoftConfig(float(cfg)).sharpness


def soft_choice(scores, cfg: SoftConfig | float | None = None) -> np.ndarray:
    """``softmax(lam * scores)`` along the last axis, max-shifted for stability."""
    lam = _sharpness(cfg)
    z = lam * np.asarray(scores, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _chunks(num_profiles: int, menu_size: int):
    step = max(1, _CHUNK_ELEMENTS // menu_size)
    for start in range(0, num_profiles, step):
        yield slice(start, min(start + step, num_profiles))


def soft_payments(allocations, boosts, weights, bids, cfg=None) -> np.ndarray:
    """Soft per-bidder payments ``(B, m)`` for a fully materialized menu."""
    lam = _sharpness(cfg)
    allocations = np.asarray(allocations, dtype=float)
    boosts = np.asarray(boosts, dtype=float)
    weights = np.asarray(weights, dtype=float)
    v = np.asarray(bids, dtype=float)
    out = np.empty(v.shape[:2])
    for sl in _chunks(v.shape[0], allocations.shape[0]):
        weighted = bidder_welfare(allocations, v[sl]) * weights[None, :, None]
        scores = weighted.sum(axis=1) + boosts
        p_full = soft_choice(scores, lam)
        for i in range(v.shape[1]):
            without = scores - weighted[:, i]
            q = soft_choice(without, lam)
            out[sl, i] = ((q - p_full) * without).sum(axis=1) / weights[i]
    return out


def _check_batch(params: AmaParams, bids) -> np.ndarray:
    v = np.asarray(bids, dtype=float)
    if v.ndim != 3 or v.shape[1:] != (params.num_bidders, params.num_items) or v.shape[0] < 1:
        raise ConfigError(
            f"bid batch of shape {v.shape} does not match parameters with "
            f"m={params.num_bidders}, n={params.num_items}"
        )
    return v


def soft_revenue(params: AmaParams, bids, cfg: SoftConfig | float | None = None) -> float:
    """Mean over the batch of the total soft payment."""
    v = _check_batch(params, bids)
    pay = soft_payments(params.allocations(), np.concatenate([[0.0], params.boosts]), params.weights(), v, cfg)
    return float(pay.sum(axis=1).mean())


def _menu_gradient_numpy(allocations, boosts, weights, bids, lam):
    """Revenue sum and its gradient w.r.t. the full menu, boosts and weights.

    Returns sums over the batch (not means).
    """
    K, m, n = allocations.shape
    total = 0.0
    g_alloc = np.zeros((K, m, n))
    g_boost = np.zeros(K)
    g_weight = np.zeros(m)
    for sl in _chunks(bids.shape[0], K):
        v = bids[sl]
        welfare = bidder_welfare(allocations, v)
        weighted = welfare * weights[None, :, None]
        scores = weighted.sum(axis=1) + boosts
        p_full = soft_choice(scores, lam)
        g_scores = np.zeros_like(scores)
        g_without = []
        pay_sums = np.empty(m)
        for i in range(m):
            without = scores - weighted[:, i]
            q = soft_choice(without, lam)
            cf = (q * without).sum(axis=1, keepdims=True)
            realized = (p_full * without).sum(axis=1, keepdims=True)
            c = 1.0 / weights[i]
            pay_sums[i] = c * (cf - realized).sum()
            g_without.append(c * (q + lam * q * (without - cf) - p_full))
            g_scores -= c * lam * p_full * (without - realized)
        total += pay_sums.sum()
        # every score (full or without-i) carries the boost once
        h = g_scores + sum(g_without)
        g_boost += h.sum(axis=0)
        for l in range(m):
            g_welfare = h - g_without[l]
            g_alloc[:, l, :] += weights[l] * (g_welfare.T @ v[:, l, :])
            g_weight[l] += (g_welfare * welfare[:, l, :]).sum() - pay_sums[l] / weights[l]
    return total, g_alloc, g_boost, g_weight


def _menu_gradient_fused(allocations, boosts, weights, bids, lam):
    from lottery_ama._kernels import fused_menu_gradient

    K, m, n = allocations.shape
    g_alloc = np.zeros((K, m, n))
    g_boost = np.zeros(K)
    g_weight = np.zeros(m)
    total = 0.0
    for sl in _chunks(bids.shape[0], K * m):
        v = np.ascontiguousarray(bids[sl])
        welfare = bidder_welfare(allocations, v)
        total += fused_menu_gradient(welfare, v, weights, boosts, lam, g_alloc, g_boost, g_weight)
    return total, g_alloc, g_boost, g_weight


ENGINES = {"numpy": _menu_gradient_numpy, "fused": _menu_gradient_fused}


def soft_revenue_gradient(params: AmaParams, bids, cfg: SoftConfig | float | None = None,
                          engine: str = "fused") -> GradientBundle:
    """Soft revenue and its exact gradient for every trainable parameter.

    ``engine="fused"`` runs the compiled per-profile kernel; ``"numpy"`` is
    the vectorised reference implementation of the same formulas.
    """
    v = _check_batch(params, bids)
    lam = _sharpness(cfg)
    if engine not in ENGINES:
        raise ConfigError(f"unknown gradient engine {engine!r}")
    slots, cache = params.slots_forward()
    weights = params.weights()
    total, g_alloc, g_boost, g_weight = ENGINES[engine](
        with_null(slots), np.concatenate([[0.0], params.boosts]), weights, v, lam
    )
    scale = 1.0 / v.shape[0]
    grads = {"boosts": g_boost[1:] * scale}
    g_slots = g_alloc[1:] * scale
    if params.menu_kind == "lottery":
        if params.feasibility == "additive":
            grads["logits"] = additive_vjp(cache, g_slots)
        else:
            grads["logits"], grads["col_logits"] = unit_demand_vjp(cache, g_slots)
    if not params.freeze_weights:
        grads["weight_raw"] = g_weight * scale * sigmoid(params.weight_raw)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = tuple(int(i) for i in np.argwhere(~np.isfinite(g))[0])
            raise TrainingError(f"non-finite gradient for {name} at index {bad}")
    revenue = total * scale
    if not np.isfinite(revenue):
        raise TrainingError("non-finite soft revenue")
    return GradientBundle(revenue, grads)
