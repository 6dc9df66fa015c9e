"""Exact-mode evaluation: revenue, regret audit, menu usage, lottery tickets."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from lottery_ama.errors import ConfigError
from lottery_ama.mechanism import AmaMechanism, count_deterministic_allocations, run_batch
from lottery_ama.optim import TrainConfig, TrainTrace, train
from lottery_ama.params import AmaParams
from lottery_ama.valuations import DistributionSpec, sample_batch, spawn_streams

DEFAULT_TEST_SAMPLES = 100_000

# (bids (B, m, n)) -> (allocations (B, m, n), payments (B, m))
AuctionRule = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


def exact_rule(mech: AmaMechanism) -> AuctionRule:
    def rule(bids):
        out = run_batch(mech, bids)
        return mech.allocations[out.winners], out.payments

    return rule


@dataclass(frozen=True)
class RevenueEstimate:
    mean: float
    se: float
    samples: int


def evaluate_revenue(mech: AmaMechanism, spec: DistributionSpec, samples: int = DEFAULT_TEST_SAMPLES,
                     seed: int = 0) -> RevenueEstimate:
    """Mean total payment of the exact auction over fresh profiles, with standard error."""
    if (spec.m, spec.n) != (mech.num_bidders, mech.num_items):
        raise ConfigError("mechanism and valuation setting disagree on m or n")
    bids = sample_batch(spec, samples, spawn_streams(seed, 1)[0])
    rev = run_batch(mech, bids).payments.sum(axis=1)
    se = float(rev.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return RevenueEstimate(float(rev.mean()), se, samples)


@dataclass
class RegretReport:
    """Largest utility gain from misreporting found by a heuristic search.

    The search is not a certificate: it samples candidate misreports, it does
    not solve the best-response problem.
    """

    max_regret: np.ndarray
    best_misreport: np.ndarray
    profiles: int
    misreports_per_profile: int
    method: str = "heuristic misreport search"

    @property
    def overall(self) -> float:
        return float(self.max_regret.max())


def candidate_misreports(truth: np.ndarray, lower: np.ndarray, upper: np.ndarray, budget: int,
                         rng: np.random.Generator) -> np.ndarray:
    """``(P, budget, n)`` misreports for ``(P, n)`` true value vectors.

    Candidates, in order: all zeros, truth x 0.5, truth x 2, single-coordinate
    perturbations of the truth (one redrawn uniformly in the box, one pushed
    to the box edge), then uniform draws from the value box.
    """
    P, n = truth.shape
    cands = [np.zeros_like(truth), 0.5 * truth, 2.0 * truth]
    for j in range(n):
        redraw = truth.copy()
        redraw[:, j] = rng.uniform(lower[j], upper[j], size=P)
        edge = truth.copy()
        edge[:, j] = np.where(truth[:, j] > 0.5 * (lower[j] + upper[j]), lower[j], upper[j])
        cands += [redraw, edge]
    out = np.stack(cands[:budget], axis=1)
    if out.shape[1] < budget:
        extra = rng.uniform(lower, upper, size=(P, budget - out.shape[1], n))
        out = np.concatenate([out, extra], axis=1)
    return out


def estimate_regret(mech: AmaMechanism | None, spec: DistributionSpec, profiles: int = 200,
                    misreports_per: int = 64, seed: int = 0, rule: AuctionRule | None = None) -> RegretReport:
    """Search misreports for every bidder on sampled profiles.

    ``rule`` replaces the exact AMA (e.g. to audit a non-truthful payment
    rule); by default the exact auction of ``mech`` is used.
    """
    if profiles < 1 or misreports_per < 1:
        raise ConfigError("regret search needs at least one profile and one misreport")
    if rule is None:
        if mech is None:
            raise ConfigError("need a mechanism or an auction rule")
        rule = exact_rule(mech)
    sample_rng, search_rng = spawn_streams(seed, 2)
    bids = sample_batch(spec, profiles, sample_rng)
    m, n = spec.m, spec.n
    alloc, pay = rule(bids)
    truthful = np.einsum("bij,bij->bi", alloc, bids) - pay
    lower, upper = spec.value_lower(), spec.value_upper()
    max_regret = np.zeros(m)
    best = np.zeros((m, n))
    for i in range(m):
        reports = candidate_misreports(bids[:, i, :], lower, upper, misreports_per, search_rng)
        trial = np.repeat(bids[:, None], misreports_per, axis=1)
        trial[:, :, i, :] = reports
        a, p = rule(trial.reshape(-1, m, n))
        a = a.reshape(profiles, misreports_per, m, n)[:, :, i, :]
        p = p.reshape(profiles, misreports_per, m)[:, :, i]
        gain = np.einsum("bkj,bj->bk", a, bids[:, i, :]) - p - truthful[:, i, None]
        flat = int(np.argmax(gain))
        b, k = divmod(flat, misreports_per)
        max_regret[i] = max(0.0, float(gain[b, k]))
        best[i] = reports[b, k]
    return RegretReport(max_regret, best, profiles, misreports_per)


@dataclass
class UsageReport:
    used_indices: np.ndarray
    count_used: int
    count_at_initialization: int
    count_deterministic: int


def allocation_usage(mech: AmaMechanism, spec: DistributionSpec, samples: int = DEFAULT_TEST_SAMPLES,
                     seed: int = 0) -> UsageReport:
    """Menu indices chosen by the exact argmax on at least one sampled profile."""
    bids = sample_batch(spec, samples, spawn_streams(seed, 1)[0])
    used = np.unique(run_batch(mech, bids).winners)
    return UsageReport(
        used_indices=used,
        count_used=int(used.size),
        count_at_initialization=mech.menu_size - 1,
        count_deterministic=count_deterministic_allocations(mech.num_bidders, mech.num_items, mech.feasibility),
    )


def jaccard_usage_similarity(a, b) -> float:
    """``|A & B| / |A | B|`` of two used-index sets (two empty sets count as identical)."""
    a, b = set(np.asarray(a).tolist()), set(np.asarray(b).tolist())
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


@dataclass
class ArmResult:
    name: str
    revenues: list[float] = field(default_factory=list)
    mechanisms: list[AmaMechanism] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.revenues))

    @property
    def best(self) -> float:
        return float(np.max(self.revenues))


@dataclass
class TicketReport:
    slots: np.ndarray
    ticket: ArmResult
    random: ArmResult

    def rows(self) -> list[dict]:
        return [
            {"arm": arm.name, "allocations": int(self.slots.size), "mean_revenue": arm.mean, "best_revenue": arm.best}
            for arm in (self.ticket, self.random)
        ]


def winning_ticket(trace: TrainTrace, spec: DistributionSpec, samples: int = DEFAULT_TEST_SAMPLES,
                   seed: int = 0) -> tuple[AmaParams, np.ndarray]:
    """Initial values of the slots the trained mechanism actually uses."""
    if trace.initial_params is None or trace.final_params is None:
        raise ConfigError("training run has no recorded initial-parameter snapshot")
    if trace.initial_params.menu_kind != "lottery":
        raise ConfigError("winning tickets need a lottery menu")
    usage = allocation_usage(trace.final_params.to_mechanism(), spec, samples, seed)
    slots = usage.used_indices[usage.used_indices > 0] - 1
    if slots.size == 0:
        raise ConfigError("trained mechanism never uses a learnable allocation")
    return trace.initial_params.subset(slots), slots


def lottery_ticket_experiment(trace: TrainTrace, spec: DistributionSpec, feasibility: str, cfg: TrainConfig,
                              data_seeds=(0, 1, 2, 3), init_seed_offset: int = 1000,
                              test_samples: int = DEFAULT_TEST_SAMPLES, usage_samples: int = DEFAULT_TEST_SAMPLES,
                              eval_seed: int = 0) -> TicketReport:
    """Retrain the winning ticket vs. equally small random menus.

    Ticket arm: the used slots' initial values, retrained once per data seed.
    Random arm: a fresh random initialization of the same size per data seed
    (init seed ``init_seed_offset + data_seed``), trained on the same data.
    """
    ticket, slots = winning_ticket(trace, spec, usage_samples, eval_seed)
    small = replace(cfg, menu_size=int(slots.size), mechanism_kind="lottery",
                    freeze_weights=ticket.freeze_weights)
    arms = ArmResult("winning-ticket"), ArmResult("small-random")
    for ds in data_seeds:
        runs = (
            train(replace(small, seed=ds), spec, feasibility, params=ticket, data_seed=ds)[0],
            train(replace(small, seed=init_seed_offset + ds), spec, feasibility, data_seed=ds)[0],
        )
        for arm, mech in zip(arms, runs):
            arm.mechanisms.append(mech)
            arm.revenues.append(evaluate_revenue(mech, spec, test_samples, eval_seed).mean)
    return TicketReport(slots, *arms)
