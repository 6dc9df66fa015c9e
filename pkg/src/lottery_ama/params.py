"""Learnable AMA state and its conversion to an exact mechanism."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from os import PathLike

import numpy as np

from lottery_ama.allocations import (
    additive_forward,
    materialize_menu,
    softplus,
    unit_demand_forward,
)
from lottery_ama.errors import ConfigError
from lottery_ama.mechanism import FEASIBILITY_CLASSES, AmaMechanism, enumerate_deterministic_allocations

WEIGHT_FLOOR = 1e-6
MENU_KINDS = ("lottery", "deterministic")

# softplus(raw) + floor == 1 at this raw value
UNIT_WEIGHT_RAW = float(np.log(np.expm1(1.0 - WEIGHT_FLOOR)))


@dataclass
class AmaParams:
    """Unconstrained parameters of a lottery or deterministic AMA.

    Only the ``K`` learnable slots live here; the null outcome is added when
    the menu is materialized, so a mechanism built from these parameters has
    ``K + 1`` outcomes.

    For ``menu_kind == "lottery"`` the allocations come from ``logits`` (and
    ``col_logits`` for unit-demand).  For ``"deterministic"`` they are the
    fixed 0/1 matrices in ``menu`` and only boosts (and optionally weights)
    are trained.
    """

    feasibility: str
    menu_kind: str
    boosts: np.ndarray
    weight_raw: np.ndarray
    logits: np.ndarray | None = None
    col_logits: np.ndarray | None = None
    menu: np.ndarray | None = None
    freeze_weights: bool = True
    slot_ids: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.feasibility not in FEASIBILITY_CLASSES:
            raise ConfigError(f"unknown feasibility class {self.feasibility!r}")
        if self.menu_kind not in MENU_KINDS:
            raise ConfigError(f"unknown menu kind {self.menu_kind!r}")
        if self.menu_kind == "deterministic" and self.menu is None:
            raise ConfigError("deterministic parameters need a fixed menu")
        if self.menu_kind == "lottery" and self.logits is None:
            raise ConfigError("lottery parameters need allocation logits")
        if self.menu_kind == "lottery" and self.feasibility == "unit-demand" and self.col_logits is None:
            raise ConfigError("unit-demand lottery parameters need column logits")
        if self.slot_ids is None:
            self.slot_ids = np.arange(self.num_slots)

    @property
    def num_slots(self) -> int:
        return self.boosts.shape[0]

    @property
    def num_bidders(self) -> int:
        return self.weight_raw.shape[0]

    @property
    def num_items(self) -> int:
        if self.menu_kind == "deterministic":
            return self.menu.shape[2]
        if self.feasibility == "additive":
            return self.logits.shape[2]
        return self.col_logits.shape[2]

    def weights(self) -> np.ndarray:
        if self.freeze_weights:
            return np.ones(self.num_bidders)
        return softplus(self.weight_raw) + WEIGHT_FLOOR

    def trainable(self) -> dict[str, np.ndarray]:
        """Named views of every array the optimizer is allowed to move."""
        out = {"boosts": self.boosts}
        if self.menu_kind == "lottery":
            out["logits"] = self.logits
            if self.feasibility == "unit-demand":
                out["col_logits"] = self.col_logits
        if not self.freeze_weights:
            out["weight_raw"] = self.weight_raw
        return out

    def slots_forward(self):
        """Materialized learnable slots ``(K, m, n)`` and the cache for the backward pass."""
        if self.menu_kind == "deterministic":
            return self.menu, None
        if self.feasibility == "additive":
            return additive_forward(self.logits)
        return unit_demand_forward(self.logits, self.col_logits)

    def allocations(self) -> np.ndarray:
        """Full menu ``(K + 1, m, n)`` with the null outcome first."""
        if self.menu_kind == "deterministic":
            return materialize_menu(self.menu, "fixed")
        return materialize_menu(self.logits, self.feasibility, self.col_logits)

    def to_mechanism(self) -> AmaMechanism:
        return AmaMechanism(
            self.allocations(),
            np.concatenate([[0.0], self.boosts]),
            self.weights(),
            self.feasibility,
        )

    def copy(self) -> "AmaParams":
        return copy.deepcopy(self)

    def subset(self, slots) -> "AmaParams":
        """Parameters restricted to the given learnable slot positions."""
        slots = np.asarray(slots, dtype=np.int64)
        take = lambda x: None if x is None else x[slots].copy()
        return AmaParams(
            feasibility=self.feasibility,
            menu_kind=self.menu_kind,
            boosts=self.boosts[slots].copy(),
            weight_raw=self.weight_raw.copy(),
            logits=take(self.logits),
            col_logits=take(self.col_logits),
            menu=take(self.menu),
            freeze_weights=self.freeze_weights,
            slot_ids=self.slot_ids[slots].copy(),
        )

    def save(self, path: str | PathLike) -> None:
        arrays = {k: v for k, v in vars(self).items() if isinstance(v, np.ndarray)}
        np.savez(
            path,
            feasibility=np.array(self.feasibility),
            menu_kind=np.array(self.menu_kind),
            freeze_weights=np.array(self.freeze_weights),
            **arrays,
        )

    @classmethod
    def load(cls, path: str | PathLike) -> "AmaParams":
        with np.load(path) as data:
            kw = {k: data[k] for k in data.files}
        return cls(
            feasibility=str(kw.pop("feasibility")),
            menu_kind=str(kw.pop("menu_kind")),
            freeze_weights=bool(kw.pop("freeze_weights")),
            **kw,
        )


def init_lottery(m: int, n: int, feasibility: str, num_slots: int, rng: np.random.Generator,
                 freeze_weights: bool = True) -> AmaParams:
    """Standard-normal allocation logits, zero boosts, unit weights."""
    if num_slots < 1:
        raise ConfigError("menu_size must be at least 1")
    if feasibility == "additive":
        logits = rng.standard_normal((num_slots, m + 1, n))
        col_logits = None
    elif feasibility == "unit-demand":
        logits = rng.standard_normal((num_slots, m, n + 1))
        col_logits = rng.standard_normal((num_slots, m + 1, n))
    else:
        raise ConfigError(f"unknown feasibility class {feasibility!r}")
    return AmaParams(
        feasibility=feasibility,
        menu_kind="lottery",
        boosts=np.zeros(num_slots),
        weight_raw=np.full(m, UNIT_WEIGHT_RAW),
        logits=logits,
        col_logits=col_logits,
        freeze_weights=freeze_weights,
    )


def init_deterministic(m: int, n: int, feasibility: str, freeze_weights: bool = True) -> AmaParams:
    """Every deterministic feasible allocation as a fixed menu with zero boosts."""
    menu = enumerate_deterministic_allocations(m, n, feasibility)[1:]
    return AmaParams(
        feasibility=feasibility,
        menu_kind="deterministic",
        boosts=np.zeros(menu.shape[0]),
        weight_raw=np.full(m, UNIT_WEIGHT_RAW),
        menu=menu,
        freeze_weights=freeze_weights,
    )

