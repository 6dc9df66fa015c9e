import numpy as np
import pytest

from lottery_ama.mechanism import AmaMechanism


def brute_force_auction(allocations, boosts, weights, bids):
    """Loop-level AMA: scores, argmax, counterfactual payments, utilities.

    Written independently of the vectorised implementation; used as an oracle.
    """
    K = len(allocations)
    m = len(weights)

    def score(k, skip=None):
        total = boosts[k]
        for i in range(m):
            if i == skip:
                continue
            total += weights[i] * sum(a * v for a, v in zip(allocations[k][i], bids[i]))
        return total

    scores = [score(k) for k in range(K)]
    best = 0
    for k in range(1, K):
        if scores[k] > scores[best]:
            best = k
    payments, utilities = [], []
    for i in range(m):
        cf = max(score(k, skip=i) for k in range(K))
        p = (cf - score(best, skip=i)) / weights[i]
        payments.append(p)
        utilities.append(sum(a * v for a, v in zip(allocations[best][i], bids[i])) - p)
    return scores, best, payments, utilities


@pytest.fixture
def one_item_menu():
    """1 item, 2 bidders, menu {null, item->bidder1, item->bidder2}."""
    return np.array([[[0.0], [0.0]], [[1.0], [0.0]], [[0.0], [1.0]]])


@pytest.fixture
def random_mechanism():
    def make(m, n, K, seed=0, feasibility="additive", weights=True):
        from lottery_ama.allocations import materialize_additive, materialize_unit_demand, with_null

        rng = np.random.default_rng(seed)
        if feasibility == "additive":
            slots = materialize_additive(rng.normal(scale=2.0, size=(K, m + 1, n)))
        else:
            slots = materialize_unit_demand(rng.normal(scale=2.0, size=(K, m, n + 1)),
                                            rng.normal(scale=2.0, size=(K, m + 1, n)))
        boosts = np.concatenate([[0.0], rng.normal(scale=0.3, size=K)])
        w = rng.uniform(0.5, 2.0, size=m) if weights else np.ones(m)
        return AmaMechanism(with_null(slots), boosts, w, feasibility)

    return make
