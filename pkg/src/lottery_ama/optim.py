"""Adam training loop for AMA parameters.

Every step draws a fresh batch of valuations, computes the soft revenue
gradient and takes an Adam step uphill.  The returned mechanism is the exact
(hard argmax) AMA built from the final parameters.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from lottery_ama.errors import ConfigError, TrainingError
from lottery_ama.mechanism import AmaMechanism, run_batch, save_mechanism
from lottery_ama.params import MENU_KINDS, AmaParams, init_deterministic, init_lottery
from lottery_ama.soft import SoftConfig, soft_revenue_gradient
from lottery_ama.valuations import DistributionSpec, sample_batch, spawn_streams

log = logging.getLogger(__name__)

BOOST_INITS = ("reserve", "zero")


@dataclass
class TrainConfig:
    steps: int = 9000
    batch_size: int = 2**15
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    sharpness: float = 100.0
    menu_size: int = 4096
    seed: int = 0
    freeze_weights: bool = True
    mechanism_kind: str = "lottery"
    boost_init: str = "reserve"
    reserve_fraction: float = 0.5
    eval_every: int = 500
    eval_samples: int = 10_000
    profile: str = "paper"

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.menu_size < 1:
            raise ConfigError("menu_size must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ConfigError("Adam needs 0 <= beta1, beta2 < 1 and eps > 0")
        if self.mechanism_kind not in MENU_KINDS:
            raise ConfigError(f"mechanism_kind must be one of {MENU_KINDS}")
        if self.boost_init not in BOOST_INITS:
            raise ConfigError(f"boost_init must be one of {BOOST_INITS}")
        if self.reserve_fraction < 0:
            raise ConfigError("reserve_fraction must be >= 0")
        if self.eval_every < 1 or self.eval_samples < 1:
            raise ConfigError("eval_every and eval_samples must be >= 1")
        SoftConfig(self.sharpness)

    @classmethod
    def paper(cls, **overrides) -> "TrainConfig":
        """Full-scale budget: 9000 steps, 2^15 profiles per step, 4096 slots."""
        return cls(**{"profile": "paper", **overrides})

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Laptop-scale budget: 3000 steps, 4096 profiles per step, 1024 slots."""
        base = dict(steps=3000, batch_size=4096, menu_size=1024, profile="desk")
        return cls(**{**base, **overrides})

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    """Bias-corrected Adam over a dict of named arrays, updated in place."""

    def __init__(self, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Descend along ``grads``; raises ``TrainingError`` on a non-finite update."""
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        updates = {}
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ConfigError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * (g * g)
            upd = self.lr * (self.m[name] / bc1) / (np.sqrt(self.v[name] / bc2) + self.eps)
            if not np.all(np.isfinite(upd)):
                raise TrainingError(f"non-finite Adam update for {name} at step {self.t}")
            updates[name] = upd
        for name, upd in updates.items():
            params[name] -= upd

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"adam_step": np.array(self.t)}
        for name in self.m:
            out[f"adam_m_{name}"] = self.m[name]
            out[f"adam_v_{name}"] = self.v[name]
        return out


def adam_step(params: dict, grads: dict, state: Adam) -> tuple[dict, Adam]:
    """Functional wrapper around :meth:`Adam.step`; returns updated copies."""
    new = {k: np.array(v, dtype=float, copy=True) for k, v in params.items()}
    state.step(new, grads)
    return new, state


@dataclass
class TrainTrace:
    soft_revenue: list[float] = field(default_factory=list)
    eval_steps: list[int] = field(default_factory=list)
    eval_revenue: list[float] = field(default_factory=list)
    wall_clock_s: float = 0.0
    snapshots: list[str] = field(default_factory=list)
    initial_params: AmaParams | None = None
    final_params: AmaParams | None = None


def initial_params(cfg: TrainConfig, spec: DistributionSpec, feasibility: str, rng) -> AmaParams:
    """Seeded starting point for ``train``.

    With ``boost_init="reserve"`` each slot starts with boost
    ``-reserve_fraction * sum_ij a_ij * E[v_j]``: every unit of an item handed
    out costs a fixed fraction of its mean value, so low profiles fall back to
    the null outcome.  Zero boosts start at the welfare maximizer over the
    menu, which tends to settle in a low-revenue basin without reserves.
    """
    if cfg.mechanism_kind == "deterministic":
        params = init_deterministic(spec.m, spec.n, feasibility, cfg.freeze_weights)
    else:
        params = init_lottery(spec.m, spec.n, feasibility, cfg.menu_size, rng, cfg.freeze_weights)
    if cfg.boost_init == "reserve":
        slots = params.allocations()[1:]
        params.boosts[:] = -cfg.reserve_fraction * np.einsum("kij,j->k", slots, spec.value_mean())
    return params


def exact_revenue(mech: AmaMechanism, bids: np.ndarray) -> float:
    return float(run_batch(mech, bids).payments.sum(axis=1).mean())


def write_checkpoint(directory: Path, tag: str, params: AmaParams, opt: Adam) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    save_mechanism(params.to_mechanism(), directory / f"{tag}.json")
    params.save(directory / f"{tag}.params.npz")
    np.savez(directory / f"{tag}.optim.npz", **opt.state_arrays())


def train(
    cfg: TrainConfig,
    spec: DistributionSpec,
    feasibility: str = "additive",
    params: AmaParams | None = None,
    data_seed: int | None = None,
    checkpoint_dir: str | Path | None = None,
) -> tuple[AmaMechanism, TrainTrace]:
    """Train an AMA on fresh samples from ``spec``.

    ``params`` overrides the seeded initialization (used to restart from a
    given set of slots).  ``data_seed`` decouples the data stream from
    ``cfg.seed``, which otherwise drives initialization, data and the
    held-out evaluation batch.
    """
    init_rng, data_rng, eval_rng = spawn_streams(cfg.seed, 3)
    if data_seed is not None:
        data_rng = spawn_streams(data_seed, 3)[1]
    if params is None:
        params = initial_params(cfg, spec, feasibility, init_rng)
    elif params.num_bidders != spec.m or params.num_items != spec.n:
        raise ConfigError("initial parameters do not match the valuation setting")
    else:
        params = params.copy()
    soft_cfg = SoftConfig(cfg.sharpness)
    opt = Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    trace = TrainTrace(initial_params=params.copy())
    eval_bids = sample_batch(spec, cfg.eval_samples, eval_rng)
    ckpt = Path(checkpoint_dir) if checkpoint_dir is not None else None
    start = time.perf_counter()

    def evaluate(step: int) -> None:
        rev = exact_revenue(params.to_mechanism(), eval_bids)
        trace.eval_steps.append(step)
        trace.eval_revenue.append(rev)
        log.info("step %d: exact revenue %.4f", step, rev)
        if ckpt is not None and step > 0:
            tag = f"step-{step:06d}"
            write_checkpoint(ckpt, tag, params, opt)
            trace.snapshots.append(tag)

    evaluate(0)
    trainable = params.trainable()
    for step in range(1, cfg.steps + 1):
        bids = sample_batch(spec, cfg.batch_size, data_rng)
        try:
            bundle = soft_revenue_gradient(params, bids, soft_cfg)
        except TrainingError as exc:
            raise TrainingError(f"step {step}: {exc}") from exc
        trace.soft_revenue.append(bundle.revenue)
        opt.step(trainable, {k: -g for k, g in bundle.grads.items()})
        if step % cfg.eval_every == 0 and step != cfg.steps:
            evaluate(step)
    if cfg.steps > 0:
        evaluate(cfg.steps)
    trace.wall_clock_s = time.perf_counter() - start
    trace.final_params = params
    return params.to_mechanism(), trace
