"""Flat key-value experiment configs.

A config file is a single YAML (or JSON) mapping whose values are scalars::

    experiment_id: uniform-2x2
    profile: desk
    family: uniform-additive
    feasibility: additive
    m: 2
    n: 2
    steps: 3000
    menu_size: 1024

``profile`` picks the default training budget (``paper`` or ``desk``);
any TrainConfig field given explicitly overrides it.  Unknown keys are
rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from os import PathLike
from pathlib import Path

import yaml

from lottery_ama.errors import ConfigError
from lottery_ama.mechanism import FEASIBILITY_CLASSES
from lottery_ama.optim import TrainConfig
from lottery_ama.valuations import DistributionSpec

TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
DISTRIBUTION_KEYS = {"family", "m", "n", "low", "high", "points", "scale", "support_seed", "support_csv"}
EXPERIMENT_KEYS = {"experiment_id", "feasibility", "test_samples", "regret_profiles", "regret_misreports"}
ALLOWED_KEYS = TRAIN_KEYS | DISTRIBUTION_KEYS | EXPERIMENT_KEYS
REQUIRED_KEYS = {"family", "m", "n"}


@dataclass
class ExperimentConfig:
    experiment_id: str
    feasibility: str
    distribution: DistributionSpec
    train: TrainConfig
    test_samples: int = 100_000
    regret_profiles: int = 200
    regret_misreports: int = 64

    @property
    def setting(self) -> str:
        return f"{self.distribution.setting}-{self.feasibility}"


def parse_config(doc: dict, base_dir: str | PathLike = ".", seed: int | None = None) -> ExperimentConfig:
    """Validate a flat mapping and build the experiment objects from it."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a flat key-value mapping")
    unknown = set(doc) - ALLOWED_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    nested = [k for k, v in doc.items() if isinstance(v, (dict, list))]
    if nested:
        raise ConfigError(f"config values must be scalars: {', '.join(sorted(nested))}")
    missing = REQUIRED_KEYS - set(doc)
    if missing:
        raise ConfigError(f"missing config keys: {', '.join(sorted(missing))}")

    train_kw = {k: doc[k] for k in TRAIN_KEYS & set(doc)}
    if seed is not None:
        train_kw["seed"] = seed
    profile = train_kw.pop("profile", "paper")
    try:
        if profile == "desk":
            train_cfg = TrainConfig.desk(**train_kw)
        elif profile == "paper":
            train_cfg = TrainConfig.paper(**train_kw)
        else:
            raise ConfigError(f"profile must be 'paper' or 'desk', got {profile!r}")
    except TypeError as exc:
        raise ConfigError(str(exc)) from None

    family = doc["family"]
    feasibility = doc.get("feasibility", "unit-demand" if family == "spherical" else "additive")
    if feasibility not in FEASIBILITY_CLASSES:
        raise ConfigError(f"feasibility must be one of {FEASIBILITY_CLASSES}")
    m, n = int(doc["m"]), int(doc["n"])
    if family == "discrete-points":
        if "support_csv" not in doc:
            raise ConfigError("discrete-points family needs support_csv")
        spec = DistributionSpec.from_csv(m, Path(base_dir) / doc["support_csv"])
        if spec.n != n:
            raise ConfigError(f"support file has {spec.n} items, config says n={n}")
    else:
        if "support_csv" in doc:
            raise ConfigError("support_csv only applies to the discrete-points family")
        dist_kw = {k: doc[k] for k in ("low", "high", "points", "scale", "support_seed") if k in doc}
        spec = DistributionSpec(family, m, n, **dist_kw)

    return ExperimentConfig(
        experiment_id=str(doc.get("experiment_id", f"{spec.setting}-{train_cfg.mechanism_kind}")),
        feasibility=feasibility,
        distribution=spec,
        train=train_cfg,
        test_samples=int(doc.get("test_samples", 100_000)),
        regret_profiles=int(doc.get("regret_profiles", 200)),
        regret_misreports=int(doc.get("regret_misreports", 64)),
    )


def load_config(path: str | PathLike, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(doc, base_dir=path.parent, seed=seed)
