"""Valuation distributions.

All built-in families draw each bidder's value vector independently from
the same per-bidder distribution:

* ``uniform-additive`` - every item value i.i.d. ``U[low, high]``;
* ``spherical`` - a finite support of ``P`` points built by
  :func:`build_spherical_support`;
* ``discrete-points`` - an explicit support with probabilities (e.g. from CSV).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from os import PathLike

import numpy as np

from lottery_ama.errors import ConfigError

FAMILIES = ("uniform-additive", "spherical", "discrete-points")
PROB_TOL = 1e-12
CSV_PROB_TOL = 1e-9


def build_spherical_support(n: int, points: int, seed: int, scale: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    """Random "spherical" support: geometric ladder of random directions.

    Draws ``points`` directions uniformly on the nonnegative orthant of the
    unit sphere in ``R^n`` (absolute values of Gaussians, normalized).  Point
    ``t`` is scaled by ``scale**t`` and the whole set is divided so the
    largest point has norm 1.  Point ``t`` has probability proportional to
    ``scale**-t``: high values are rare, which is the regime where lotteries
    extract more revenue than deterministic menus.

    Returns ``(support, probs)`` with shapes ``(points, n)`` and ``(points,)``.
    """
    if points < 2 or n < 1:
        raise ConfigError("spherical support needs points >= 2 and n >= 1")
    if not scale > 1:
        raise ConfigError("spherical scale factor must exceed 1")
    rng = np.random.default_rng(seed)
    directions = np.abs(rng.standard_normal((points, n)))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    ladder = scale ** np.arange(points, dtype=float)
    support = directions * (ladder / ladder[-1])[:, None]
    probs = 1.0 / ladder
    return support, probs / probs.sum()


def load_support_csv(path: str | PathLike) -> tuple[np.ndarray, np.ndarray]:
    """Read a discrete support from CSV with header ``v_1,...,v_n,prob``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ConfigError(f"{path}: empty support file") from None
        n = len(header) - 1
        expected = [f"v_{j + 1}" for j in range(n)] + ["prob"]
        if n < 1 or header != expected:
            raise ConfigError(f"{path}: header must be {','.join(expected) or 'v_1,...,v_n,prob'}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n + 1:
                raise ConfigError(f"{path}:{lineno}: expected {n + 1} columns, got {len(row)}")
            try:
                rows.append([float(x) for x in row])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ConfigError(f"{path}: no support points")
    data = np.array(rows)
    if not np.all(np.isfinite(data)) or np.any(data < 0):
        raise ConfigError(f"{path}: values and probabilities must be finite and nonnegative")
    probs = data[:, -1]
    if abs(probs.sum() - 1.0) > CSV_PROB_TOL:
        raise ConfigError(f"{path}: probabilities sum to {probs.sum():.12g}, not 1")
    return data[:, :-1], probs


@dataclass
class DistributionSpec:
    """Per-bidder valuation distribution for an ``m x n`` setting."""

    family: str
    m: int
    n: int
    low: float = 0.0
    high: float = 1.0
    points: int = 5
    scale: float = 2.0
    support_seed: int = 0
    support: np.ndarray | None = field(default=None, repr=False)
    probs: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown valuation family {self.family!r}; expected one of {FAMILIES}")
        if self.m < 1 or self.n < 1:
            raise ConfigError("need at least one bidder and one item")
        if self.family == "uniform-additive" and not 0 <= self.low < self.high:
            raise ConfigError("uniform family needs 0 <= low < high")
        if self.family == "spherical" and self.support is None:
            self.support, self.probs = build_spherical_support(self.n, self.points, self.support_seed, self.scale)
        if self.family in ("spherical", "discrete-points"):
            if self.support is None or self.probs is None:
                raise ConfigError("discrete family needs explicit support points and probabilities")
            self.support = np.asarray(self.support, dtype=float).reshape(-1, self.n)
            self.probs = np.asarray(self.probs, dtype=float).reshape(-1)
            if self.probs.shape[0] != self.support.shape[0] or self.probs.shape[0] < 1:
                raise ConfigError("support and probabilities disagree in length")
            if np.any(self.support < 0) or np.any(self.probs < 0):
                raise ConfigError("support values and probabilities must be nonnegative")
            if abs(self.probs.sum() - 1.0) > PROB_TOL:
                raise ConfigError(f"probabilities sum to {self.probs.sum():.15g}, not 1")
            self.points = self.support.shape[0]

    @classmethod
    def uniform(cls, m: int, n: int, low: float = 0.0, high: float = 1.0) -> "DistributionSpec":
        return cls("uniform-additive", m, n, low=low, high=high)

    @classmethod
    def spherical(cls, m: int, n: int, points: int = 5, support_seed: int = 0, scale: float = 2.0) -> "DistributionSpec":
        return cls("spherical", m, n, points=points, support_seed=support_seed, scale=scale)

    @classmethod
    def discrete(cls, m: int, support, probs) -> "DistributionSpec":
        support = np.atleast_2d(np.asarray(support, dtype=float))
        return cls("discrete-points", m, support.shape[1], support=support, probs=probs)

    @classmethod
    def from_csv(cls, m: int, path: str | PathLike) -> "DistributionSpec":
        support, probs = load_support_csv(path)
        return cls.discrete(m, support, probs)

    @property
    def setting(self) -> str:
        return f"{self.m}x{self.n}-{self.family}"

    def value_upper(self) -> np.ndarray:
        """Largest possible value of each item, used to bound misreport search."""
        if self.family == "uniform-additive":
            return np.full(self.n, self.high)
        return self.support.max(axis=0)

    def value_lower(self) -> np.ndarray:
        if self.family == "uniform-additive":
            return np.full(self.n, self.low)
        return np.zeros(self.n)

    def value_mean(self) -> np.ndarray:
        """Expected value of each item for a single bidder."""
        if self.family == "uniform-additive":
            return np.full(self.n, 0.5 * (self.low + self.high))
        return self.probs @ self.support


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def spawn_streams(seed: int, count: int) -> list[np.random.Generator]:
    """Independent, reproducible generators derived from one seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def sample_batch(spec: DistributionSpec, count: int, rng) -> np.ndarray:
    """``count`` i.i.d. bid profiles as a ``(count, m, n)`` array."""
    if count < 1:
        raise ConfigError("sample count must be at least 1")
    rng = as_generator(rng)
    if spec.family == "uniform-additive":
        return rng.uniform(spec.low, spec.high, size=(count, spec.m, spec.n))
    idx = rng.choice(spec.points, size=(count, spec.m), p=spec.probs)
    return spec.support[idx]
