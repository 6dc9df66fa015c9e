"""Reference mechanisms: Myerson per item, grand bundle, VCG, deterministic AMA."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, optimize

from lottery_ama.errors import ConfigError
from lottery_ama.mechanism import AmaMechanism, enumerate_deterministic_allocations
from lottery_ama.optim import TrainConfig, TrainTrace, train
from lottery_ama.valuations import DistributionSpec, sample_batch, spawn_streams

RESERVE_GRID_POINTS = 1000
MIN_RESERVE_SAMPLES = 10_000


@dataclass(frozen=True)
class ReservePriceAuction:
    """Second-price auction with a reserve, on single items or on the grand bundle."""

    reserve: float
    scope: str = "per-item"

    def __post_init__(self):
        if self.reserve < 0:
            raise ConfigError("reserve must be nonnegative")
        if self.scope not in ("per-item", "grand-bundle"):
            raise ConfigError(f"unknown reserve scope {self.scope!r}")

    def revenue(self, bids) -> np.ndarray:
        """Per-profile revenue for a ``(B, m, n)`` batch."""
        bids = np.asarray(bids, dtype=float)
        if self.scope == "grand-bundle":
            return second_price_with_reserve(bids.sum(axis=2), self.reserve)
        per_item = [second_price_with_reserve(bids[:, :, j], self.reserve) for j in range(bids.shape[2])]
        return np.sum(per_item, axis=0)


def second_price_with_reserve(values, reserve: float) -> np.ndarray:
    """Revenue of a single-good second-price auction with reserve, per row of ``(B, m)`` values."""
    values = np.asarray(values, dtype=float)
    ordered = np.sort(values, axis=1)
    top = ordered[:, -1]
    second = ordered[:, -2] if values.shape[1] > 1 else np.zeros(values.shape[0])
    return np.where(top >= reserve, np.maximum(second, reserve), 0.0)


def myerson_uniform_item(bidders: int, lo: float = 0.0, hi: float = 1.0) -> tuple[float, float]:
    """Optimal reserve and expected revenue for one item, i.i.d. ``U[lo, hi]`` bidders.

    The virtual value ``2v - hi`` crosses zero at ``hi / 2``, so the reserve
    is ``max(lo, hi / 2)``.  Expected revenue is the expected positive part
    of the highest virtual value, integrated numerically.
    """
    if bidders < 1:
        raise ConfigError("need at least one bidder")
    if not 0 <= lo < hi:
        raise ConfigError("need 0 <= lo < hi")
    reserve = max(lo, hi / 2)
    width = hi - lo

    def integrand(v):
        cdf = (v - lo) / width
        return (2 * v - hi) * cdf ** (bidders - 1) / width

    value, _ = integrate.quad(integrand, reserve, hi, epsabs=1e-13, epsrel=1e-13)
    return reserve, bidders * value


def separate_myerson_revenue(bidders: int, items: int, lo: float = 0.0, hi: float = 1.0) -> float:
    return items * myerson_uniform_item(bidders, lo, hi)[1]


def myerson_monte_carlo(spec: DistributionSpec, samples: int, rng) -> tuple[float, float]:
    """Simulated separate-item revenue (mean, standard error) at the Myerson reserve."""
    if spec.family != "uniform-additive":
        raise ConfigError("separate Myerson reserves are implemented for uniform values only")
    reserve, _ = myerson_uniform_item(spec.m, spec.low, spec.high)
    rev = ReservePriceAuction(reserve).revenue(sample_batch(spec, samples, rng))
    return float(rev.mean()), float(rev.std(ddof=1) / np.sqrt(samples))


def best_reserve(values, grid_points: int = RESERVE_GRID_POINTS) -> float:
    """Reserve maximizing empirical second-price revenue on ``(B, m)`` values.

    Dense grid over ``[0, max value]`` followed by bounded refinement between
    the neighbours of the best grid point.  Concavity is not assumed.
    """
    values = np.asarray(values, dtype=float)
    top = float(values.max())
    if top <= 0:
        return 0.0
    ordered = np.sort(values, axis=1)
    highest = ordered[:, -1]
    second = ordered[:, -2] if values.shape[1] > 1 else np.zeros(values.shape[0])

    def revenue(r):
        return np.where(highest >= r, np.maximum(second, r), 0.0).mean()

    grid = np.linspace(0.0, top, grid_points)
    revs = np.array([revenue(r) for r in grid])
    best = int(np.argmax(revs))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid_points - 1)]
    res = optimize.minimize_scalar(lambda r: -revenue(r), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-7})
    return float(res.x) if -res.fun > revs[best] else float(grid[best])


def grand_bundle_revenue(spec: DistributionSpec, train_samples: int = 100_000, test_samples: int = 100_000,
                         seed: int = 0) -> tuple[float, float, float]:
    """Grand-bundle reserve auction: ``(reserve, held-out mean revenue, standard error)``.

    Each bidder is reduced to its total bundle value; the reserve is tuned on
    one sample and evaluated on a disjoint one.
    """
    if min(train_samples, test_samples) < MIN_RESERVE_SAMPLES:
        warnings.warn(f"fewer than {MIN_RESERVE_SAMPLES} samples; reserve estimate will be noisy", stacklevel=2)
    train_rng, test_rng = spawn_streams(seed, 2)
    reserve = best_reserve(sample_batch(spec, train_samples, train_rng).sum(axis=2))
    rev = ReservePriceAuction(reserve, "grand-bundle").revenue(sample_batch(spec, test_samples, test_rng))
    return reserve, float(rev.mean()), float(rev.std(ddof=1) / np.sqrt(test_samples)) if test_samples > 1 else 0.0


def vcg_payments(bids, feasibility: str = "additive") -> np.ndarray:
    """VCG payments ``(B, m)`` computed directly, without any AMA machinery.

    Additive bidders: each item is a separate second-price auction.
    Unit-demand bidders: welfare-maximizing assignment via the Hungarian
    algorithm, with and without each bidder.
    """
    bids = np.asarray(bids, dtype=float)
    B, m, n = bids.shape
    if feasibility == "additive":
        pay = np.zeros((B, m))
        rows = np.arange(B)
        for j in range(n):
            col = bids[:, :, j]
            winner = np.argmax(col, axis=1)
            others = col.copy()
            others[rows, winner] = -np.inf
            second = others.max(axis=1) if m > 1 else np.zeros(B)
            pay[rows, winner] += np.maximum(second, 0.0)
        return pay
    if feasibility != "unit-demand":
        raise ConfigError(f"unknown feasibility class {feasibility!r}")

    def best(values):
        if values.shape[0] == 0:
            return 0.0, None
        r, c = optimize.linear_sum_assignment(values, maximize=True)
        return values[r, c].sum(), (r, c)

    pay = np.zeros((B, m))
    for b in range(B):
        total, (r, c) = best(bids[b])
        received = np.zeros(m)
        received[r] = bids[b][r, c]
        for i in range(m):
            without, _ = best(np.delete(bids[b], i, axis=0))
            pay[b, i] = without - (total - received[i])
    return pay


def vcg_mechanism(m: int, n: int, feasibility: str = "additive") -> AmaMechanism:
    """Zero-boost, unit-weight AMA over every deterministic allocation."""
    return AmaMechanism.from_menu(enumerate_deterministic_allocations(m, n, feasibility), feasibility=feasibility)


def reserve_mechanism(m: int, n: int, reserve: float, scope: str = "per-item") -> AmaMechanism:
    """The reserve-price auction written as an additive AMA.

    Per item: every deterministic allocation, boost ``-reserve`` per item
    handed out.  Grand bundle: null plus "everything to bidder i" with boost
    ``-reserve``.  The weighted-VCG payment of either menu is the
    second-highest relevant value, floored at the reserve.
    """
    ReservePriceAuction(reserve, scope)
    if scope == "per-item":
        menu = enumerate_deterministic_allocations(m, n, "additive")
        return AmaMechanism.from_menu(menu, -reserve * menu.sum(axis=(1, 2)))
    menu = np.zeros((m + 1, m, n))
    for i in range(m):
        menu[i + 1, i, :] = 1.0
    return AmaMechanism.from_menu(menu, np.concatenate([[0.0], np.full(m, -reserve)]))


def train_deterministic_ama(spec: DistributionSpec, feasibility: str, cfg: TrainConfig) -> tuple[AmaMechanism, TrainTrace]:
    """Train boosts (and optionally weights) over the enumerated deterministic menu."""
    return train(replace(cfg, mechanism_kind="deterministic"), spec, feasibility)


__all__ = [
    "ReservePriceAuction",
    "best_reserve",
    "grand_bundle_revenue",
    "myerson_monte_carlo",
    "myerson_uniform_item",
    "reserve_mechanism",
    "second_price_with_reserve",
    "separate_myerson_revenue",
    "train_deterministic_ama",
    "vcg_mechanism",
    "vcg_payments",
]
