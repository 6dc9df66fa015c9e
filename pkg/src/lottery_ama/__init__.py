"""Learning randomized affine maximizer auctions by gradient descent."""

from lottery_ama.errors import (
    AmaError,
    ConfigError,
    InvariantViolation,
    NumericalError,
    ParameterError,
    TrainingError,
)
from lottery_ama.mechanism import (
    AmaMechanism,
    AuctionOutcome,
    enumerate_deterministic_allocations,
    load_mechanism,
    run_auction,
    run_batch,
    save_mechanism,
    score_allocations,
    utility_of_report,
)

__version__ = "0.1.0"

__all__ = [
    "AmaError",
    "AmaMechanism",
    "AuctionOutcome",
    "ConfigError",
    "InvariantViolation",
    "NumericalError",
    "ParameterError",
    "TrainingError",
    "enumerate_deterministic_allocations",
    "load_mechanism",
    "run_auction",
    "run_batch",
    "save_mechanism",
    "score_allocations",
    "utility_of_report",
]
