"""Always-feasible parameterizations of lottery allocations.

Additive class: logits of shape ``(m + 1, n)``.  Each item column goes
through a softmax over the bidders plus one dummy row meaning "unsold"; the
dummy row is then dropped, so column sums never exceed 1.

Unit-demand class: row logits ``(m, n + 1)`` and column logits ``(m + 1, n)``.
After softplus, rows of the first are normalized to sum to 1 (the extra
column is the "no item" slot) and columns of the second likewise (the extra
row is the "unsold" slot).  The allocation is the entrywise minimum of the
two normalized matrices on the real ``m x n`` block, so both row and column
sums stay at most 1.

Every function accepts arbitrary leading batch axes (usually the menu axis).
The ``*_vjp`` functions map a gradient with respect to the allocation back to
the logits.
"""

from __future__ import annotations

import numpy as np

from lottery_ama.errors import ConfigError, ParameterError

NORMALIZER_GUARD = 1e-12


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_finite(name: str, x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        bad = np.argwhere(~np.isfinite(x))[0]
        raise ParameterError(f"non-finite {name} at index {tuple(int(i) for i in bad)}")


def additive_forward(logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(allocation, probs)`` where ``probs`` keeps the dummy row."""
    logits = np.asarray(logits, dtype=float)
    _check_finite("additive logits", logits)
    z = logits - logits.max(axis=-2, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=-2, keepdims=True)
    return probs[..., :-1, :], probs


def additive_vjp(probs: np.ndarray, grad_alloc: np.ndarray) -> np.ndarray:
    g = np.zeros_like(probs)
    g[..., :-1, :] = grad_alloc
    return probs * (g - (g * probs).sum(axis=-2, keepdims=True))


def materialize_additive(logits) -> np.ndarray:
    """Feasible additive allocation(s) from ``(..., m + 1, n)`` logits."""
    return additive_forward(logits)[0]


def _normalize(x: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    denom = x.sum(axis=axis, keepdims=True) + NORMALIZER_GUARD
    return x / denom, denom


def _normalize_vjp(normed: np.ndarray, denom: np.ndarray, grad: np.ndarray, axis: int) -> np.ndarray:
    return (grad - (grad * normed).sum(axis=axis, keepdims=True)) / denom


class UnitDemandCache:
    __slots__ = ("row_logits", "col_logits", "rows", "row_denom", "cols", "col_denom", "take_row")

    def __init__(self, **kw):
        for k, v in kw.items():
            setattr(self, k, v)


def unit_demand_forward(row_logits, col_logits) -> tuple[np.ndarray, UnitDemandCache]:
    row_logits = np.asarray(row_logits, dtype=float)
    col_logits = np.asarray(col_logits, dtype=float)
    _check_finite("unit-demand row logits", row_logits)
    _check_finite("unit-demand column logits", col_logits)
    m, n1 = row_logits.shape[-2:]
    if col_logits.shape[-2:] != (m + 1, n1 - 1) or row_logits.shape[:-2] != col_logits.shape[:-2]:
        raise ConfigError(
            f"row logits {row_logits.shape} and column logits {col_logits.shape} "
            "must be (..., m, n + 1) and (..., m + 1, n)"
        )
    rows, row_denom = _normalize(softplus(row_logits), axis=-1)
    cols, col_denom = _normalize(softplus(col_logits), axis=-2)
    r = rows[..., :, :-1]
    c = cols[..., :-1, :]
    take_row = r <= c
    alloc = np.where(take_row, r, c)
    cache = UnitDemandCache(
        row_logits=row_logits, col_logits=col_logits, rows=rows, row_denom=row_denom,
        cols=cols, col_denom=col_denom, take_row=take_row,
    )
    return alloc, cache


def unit_demand_vjp(cache: UnitDemandCache, grad_alloc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g_rows = np.zeros_like(cache.rows)
    g_cols = np.zeros_like(cache.cols)
    g_rows[..., :, :-1] = np.where(cache.take_row, grad_alloc, 0.0)
    g_cols[..., :-1, :] = np.where(cache.take_row, 0.0, grad_alloc)
    g_row_sp = _normalize_vjp(cache.rows, cache.row_denom, g_rows, axis=-1)
    g_col_sp = _normalize_vjp(cache.cols, cache.col_denom, g_cols, axis=-2)
    return g_row_sp * sigmoid(cache.row_logits), g_col_sp * sigmoid(cache.col_logits)


def materialize_unit_demand(row_logits, col_logits) -> np.ndarray:
    """Feasible unit-demand allocation(s) from row and column logits."""
    return unit_demand_forward(row_logits, col_logits)[0]


def with_null(allocations: np.ndarray) -> np.ndarray:
    """Prepend the all-zero null allocation to a ``(K, m, n)`` stack."""
    allocations = np.asarray(allocations, dtype=float)
    return np.concatenate([np.zeros((1,) + allocations.shape[1:]), allocations], axis=0)


def materialize_menu(logits, feasibility: str, col_logits=None) -> np.ndarray:
    """Materialize every learnable slot and prepend the null allocation.

    ``feasibility`` is ``"additive"``, ``"unit-demand"`` (which also needs
    ``col_logits``) or ``"fixed"``, in which case ``logits`` is already a
    ``(K, m, n)`` menu of allocations and passes through untouched.
    """
    if feasibility == "additive":
        slots = materialize_additive(logits)
    elif feasibility == "unit-demand":
        if col_logits is None:
            raise ConfigError("unit-demand menus need column logits")
        slots = materialize_unit_demand(logits, col_logits)
    elif feasibility == "fixed":
        slots = np.asarray(logits, dtype=float)
    else:
        raise ConfigError(f"unknown menu kind {feasibility!r}")
    return with_null(slots)
