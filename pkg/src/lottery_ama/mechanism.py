"""Exact affine maximizer auctions.

An AMA holds a finite menu of allocation matrices ``a_k`` with boosts ``b_k``
and a positive weight per bidder.  Given bids ``v`` it picks

    k* = argmax_k  sum_i w_i <a_k[i], v[i]> + b_k

and charges bidder ``i`` the drop in the others' weighted, boosted welfare
caused by its presence, divided by ``w_i``.  Index 0 of every menu is the
null outcome (allocate nothing, boost 0).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from os import PathLike
from typing import NamedTuple

import numpy as np

from lottery_ama.errors import ConfigError, InvariantViolation

FEASIBILITY_CLASSES = ("additive", "unit-demand")
FEASIBILITY_TOL = 1e-9
NEGATIVE_PAYMENT_TOL = 1e-6
ENUMERATION_LIMIT = 10**6
FORMAT_VERSION = 1

# rows of the batch evaluated at once in run_batch; bounds the B x K buffers
_CHUNK_ELEMENTS = 1 << 22


def check_feasibility(allocations: np.ndarray, feasibility: str, tol: float = FEASIBILITY_TOL) -> None:
    """Raise ``ConfigError`` unless every matrix in ``allocations`` is feasible.

    ``allocations`` may be a single ``(m, n)`` matrix or a stack ``(K, m, n)``.
    """
    if feasibility not in FEASIBILITY_CLASSES:
        raise ConfigError(f"unknown feasibility class {feasibility!r}")
    a = np.asarray(allocations, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ConfigError("allocation contains non-finite entries")
    if a.size and (a.min() < -tol or a.max() > 1 + tol):
        raise ConfigError("allocation entries must lie in [0, 1]")
    # sum over bidders, per item
    if a.size and a.sum(axis=-2).max() > 1 + tol:
        raise ConfigError("an item is over-allocated")
    if feasibility == "unit-demand" and a.size and a.sum(axis=-1).max() > 1 + tol:
        raise ConfigError("a unit-demand bidder receives more than one item")


@dataclass(frozen=True, eq=False)
class AmaMechanism:
    """Menu of ``K`` (allocation, boost) outcomes plus per-bidder weights.

    Attributes:
        allocations: ``(K, m, n)`` array; ``allocations[0]`` is all zeros.
        boosts: ``(K,)`` array with ``boosts[0] == 0``.
        weights: ``(m,)`` strictly positive bidder weights.
        feasibility: ``"additive"`` or ``"unit-demand"``.
    """

    allocations: np.ndarray
    boosts: np.ndarray
    weights: np.ndarray
    feasibility: str = "additive"

    def __post_init__(self):
        allocations = np.array(self.allocations, dtype=float)
        boosts = np.array(self.boosts, dtype=float).reshape(-1)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if allocations.ndim != 3:
            raise ConfigError(f"allocations must be (K, m, n), got shape {allocations.shape}")
        K, m, _ = allocations.shape
        if K < 1:
            raise ConfigError("menu must contain at least the null outcome")
        if boosts.shape != (K,):
            raise ConfigError(f"expected {K} boosts, got {boosts.shape[0]}")
        if weights.shape != (m,):
            raise ConfigError(f"expected {m} weights, got {weights.shape[0]}")
        if not (np.all(np.isfinite(boosts)) and np.all(np.isfinite(weights))):
            raise ConfigError("boosts and weights must be finite")
        if np.any(weights <= 0):
            raise ConfigError("bidder weights must be strictly positive")
        if np.any(allocations[0] != 0) or boosts[0] != 0:
            raise ConfigError("index 0 must be the null outcome with zero boost")
        check_feasibility(allocations, self.feasibility)
        for arr in (allocations, boosts, weights):
            arr.setflags(write=False)
        object.__setattr__(self, "allocations", allocations)
        object.__setattr__(self, "boosts", boosts)
        object.__setattr__(self, "weights", weights)

    @property
    def num_bidders(self) -> int:
        return self.allocations.shape[1]

    @property
    def num_items(self) -> int:
        return self.allocations.shape[2]

    @property
    def menu_size(self) -> int:
        return self.allocations.shape[0]

    @classmethod
    def from_menu(cls, allocations, boosts=None, weights=None, feasibility="additive") -> "AmaMechanism":
        """Build a mechanism from a menu that already starts with the null outcome."""
        allocations = np.asarray(allocations, dtype=float)
        K, m, _ = allocations.shape
        boosts = np.zeros(K) if boosts is None else boosts
        weights = np.ones(m) if weights is None else weights
        return cls(allocations, boosts, weights, feasibility)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "m": self.num_bidders,
            "n": self.num_items,
            "feasibility_class": self.feasibility,
            "weights": self.weights.tolist(),
            "boosts": self.boosts.tolist(),
            "allocations": self.allocations.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AmaMechanism":
        required = {"format_version", "m", "n", "feasibility_class", "weights", "boosts", "allocations"}
        missing = required - set(doc)
        if missing:
            raise ConfigError(f"mechanism document missing fields: {sorted(missing)}")
        if doc["format_version"] != FORMAT_VERSION:
            raise ConfigError(f"unsupported mechanism format_version {doc['format_version']!r}")
        allocations = np.array(doc["allocations"], dtype=float)
        if allocations.ndim != 3 or allocations.shape[1:] != (doc["m"], doc["n"]):
            raise ConfigError("allocations do not match the declared m and n")
        return cls(allocations, doc["boosts"], doc["weights"], doc["feasibility_class"])


def save_mechanism(mech: AmaMechanism, path: str | PathLike) -> None:
    # json writes floats with repr(), which round-trips float64 exactly
    with open(path, "w") as fh:
        json.dump(mech.to_dict(), fh)


def load_mechanism(path: str | PathLike) -> AmaMechanism:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not a valid mechanism document ({exc})") from exc
    return AmaMechanism.from_dict(doc)


class AuctionOutcome(NamedTuple):
    winner_index: int
    allocation: np.ndarray
    payments: np.ndarray
    utilities: np.ndarray


class BatchOutcome(NamedTuple):
    """Vectorised outcome over ``B`` profiles: winners ``(B,)``, payments and utilities ``(B, m)``."""

    winners: np.ndarray
    payments: np.ndarray
    utilities: np.ndarray


def _as_bid_batch(mech: AmaMechanism, bids) -> np.ndarray:
    v = np.asarray(bids, dtype=float)
    if v.ndim == 2:
        v = v[None]
    if v.ndim != 3 or v.shape[1:] != (mech.num_bidders, mech.num_items):
        raise ConfigError(
            f"bids of shape {np.shape(bids)} do not match mechanism with "
            f"m={mech.num_bidders}, n={mech.num_items}"
        )
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise ConfigError("bids must be finite and nonnegative")
    return v


def bidder_welfare(allocations: np.ndarray, bids: np.ndarray) -> np.ndarray:
    """Unweighted value of every menu entry to every bidder: ``(B, m, K)``."""
    m = bids.shape[1]
    out = np.empty((bids.shape[0], m, allocations.shape[0]))
    for i in range(m):
        out[:, i, :] = bids[:, i, :] @ allocations[:, i, :].T
    return out


def score_allocations(mech: AmaMechanism, bids, exclude: int | None = None) -> np.ndarray:
    """Weighted, boosted welfare of every menu entry for one bid profile.

    With ``exclude=i`` bidder i's welfare term is dropped from every score;
    the menu and boosts stay as they are.
    """
    v = _as_bid_batch(mech, bids)
    if v.shape[0] != 1:
        raise ConfigError("score_allocations takes a single (m, n) bid profile")
    if exclude is not None and not 0 <= exclude < mech.num_bidders:
        raise ConfigError(f"exclude must be a bidder index in [0, {mech.num_bidders}), got {exclude}")
    welfare = bidder_welfare(mech.allocations, v)[0] * mech.weights[:, None]
    scores = mech.boosts.copy()
    for i in range(mech.num_bidders):
        if i != exclude:
            scores += welfare[i]
    return scores


def run_batch(mech: AmaMechanism, bids) -> BatchOutcome:
    """Run the exact auction on each profile of a ``(B, m, n)`` batch.

    Ties in the argmax go to the lowest menu index.
    """
    v = _as_bid_batch(mech, bids)
    B, m, _ = v.shape
    K = mech.menu_size
    winners = np.empty(B, dtype=np.int64)
    payments = np.empty((B, m))
    utilities = np.empty((B, m))
    chunk = max(1, _CHUNK_ELEMENTS // (K * m))
    w = mech.weights
    for start in range(0, B, chunk):
        sl = slice(start, min(start + chunk, B))
        welfare = bidder_welfare(mech.allocations, v[sl])
        weighted = welfare * w[None, :, None]
        rows = np.arange(welfare.shape[0])
        k_star = np.argmax(weighted.sum(axis=1) + mech.boosts, axis=1)
        winners[sl] = k_star
        for i in range(m):
            others = np.broadcast_to(mech.boosts, (rows.size, K)) + sum(
                (weighted[:, l] for l in range(m) if l != i), np.zeros((rows.size, K)))
            # max and the realized entry come from the same array, so p >= 0 exactly
            pay = (others.max(axis=1) - others[rows, k_star]) / w[i]
            payments[sl, i] = pay
            utilities[sl, i] = welfare[rows, i, k_star] - pay
    if payments.size and payments.min() < -NEGATIVE_PAYMENT_TOL:
        raise InvariantViolation(f"negative payment {payments.min():.3e} from the exact auction")
    return BatchOutcome(winners, payments, utilities)


def run_auction(mech: AmaMechanism, bids) -> AuctionOutcome:
    """Run the exact auction on a single ``(m, n)`` bid profile."""
    v = _as_bid_batch(mech, bids)
    if v.shape[0] != 1:
        raise ConfigError("run_auction takes a single (m, n) bid profile; use run_batch")
    out = run_batch(mech, v)
    k = int(out.winners[0])
    return AuctionOutcome(k, mech.allocations[k].copy(), out.payments[0], out.utilities[0])


def utility_of_report(mech: AmaMechanism, true_values, report, bidder: int, others) -> float:
    """Utility, at its true values, of ``bidder`` submitting ``report``.

    ``others`` is a full ``(m, n)`` profile; its row ``bidder`` is replaced by
    the report before running the auction.
    """
    bids = np.array(others, dtype=float)
    bids[bidder] = report
    out = run_auction(mech, bids)
    return float(out.allocation[bidder] @ np.asarray(true_values, dtype=float) - out.payments[bidder])


def count_deterministic_allocations(m: int, n: int, feasibility: str) -> int:
    if feasibility == "additive":
        return (m + 1) ** n
    if feasibility == "unit-demand":
        # partial matchings between n items and m bidders
        return sum(math.comb(n, k) * math.perm(m, k) for k in range(min(m, n) + 1))
    raise ConfigError(f"unknown feasibility class {feasibility!r}")


def enumerate_deterministic_allocations(m: int, n: int, feasibility: str = "additive") -> np.ndarray:
    """Every feasible 0/1 allocation, null first, as a ``(K, m, n)`` array.

    Order is lexicographic in the per-item disposition (0 = unsold,
    ``i + 1`` = bidder ``i``), item 0 varying slowest.
    """
    if m < 1 or n < 1:
        raise ConfigError("need at least one bidder and one item")
    count = count_deterministic_allocations(m, n, feasibility)
    if count > ENUMERATION_LIMIT:
        raise ConfigError(
            f"{count} deterministic allocations for m={m}, n={n} ({feasibility}) "
            f"exceeds the enumeration limit of {ENUMERATION_LIMIT}"
        )
    out = []
    for owners in itertools.product(range(m + 1), repeat=n):
        taken = [o for o in owners if o]
        if feasibility == "unit-demand" and len(taken) != len(set(taken)):
            continue
        a = np.zeros((m, n))
        for j, o in enumerate(owners):
            if o:
                a[o - 1, j] = 1.0
        out.append(a)
    return np.stack(out)
