"""CSV result rows, one per (experiment, seed)."""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass
from os import PathLike
from pathlib import Path

RESULT_COLUMNS = (
    "experiment_id",
    "setting",
    "mechanism_kind",
    "K",
    "steps",
    "batch",
    "revenue_mean",
    "revenue_se",
    "max_regret",
    "used_allocations",
    "wall_clock_s",
    "seed",
)


@dataclass
class ResultRow:
    experiment_id: str
    setting: str
    mechanism_kind: str
    K: int | str = ""
    steps: int | str = ""
    batch: int | str = ""
    revenue_mean: float | str = ""
    revenue_se: float | str = ""
    max_regret: float | str = ""
    used_allocations: int | str = ""
    wall_clock_s: float | str = ""
    seed: int | str = ""


def append_result(path: str | PathLike, row: ResultRow) -> None:
    """Append ``row``; writes the header first if the file is new or empty."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        if new:
            writer.writeheader()
        writer.writerow(asdict(row))


def read_results(path: str | PathLike) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_stem(experiment_id: str, seed: int) -> str:
    """Artifact filename stem; seed plus a microsecond timestamp keeps runs apart."""
    stamp = time.strftime("%Y%m%dT%H%M%S") + f"{time.time() % 1:.6f}"[1:].replace(".", "")
    return f"{experiment_id}-seed{seed}-{stamp}"
