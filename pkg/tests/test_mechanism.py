import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_force_auction
from lottery_ama.errors import ConfigError
from lottery_ama.mechanism import (
    AmaMechanism,
    count_deterministic_allocations,
    enumerate_deterministic_allocations,
    load_mechanism,
    run_auction,
    run_batch,
    save_mechanism,
    score_allocations,
    utility_of_report,
)


@pytest.fixture
def boosted(one_item_menu):
    return AmaMechanism(one_item_menu, [0.0, 0.3, 0.0], [1.0, 1.0])


@pytest.fixture
def vickrey(one_item_menu):
    return AmaMechanism(one_item_menu, [0.0, 0.0, 0.0], [1.0, 1.0])


class TestScores:
    def test_boosted_scores(self, boosted, one_item_menu):
        bids = np.array([[0.5], [0.6]])
        np.testing.assert_allclose(score_allocations(boosted, bids), [0.0, 0.8, 0.6], atol=1e-15)
        oracle, *_ = brute_force_auction(one_item_menu, [0, 0.3, 0], [1, 1], bids)
        np.testing.assert_allclose(score_allocations(boosted, bids), oracle, atol=1e-15)

    def test_exclusion_keeps_menu_and_boosts(self, boosted):
        bids = np.array([[0.5], [0.6]])
        np.testing.assert_allclose(score_allocations(boosted, bids, exclude=0), [0.0, 0.3, 0.6], atol=1e-15)

    def test_zero_bids_zero_boosts(self, vickrey):
        assert np.all(score_allocations(vickrey, np.zeros((2, 1))) == 0)

    def test_dimension_mismatch(self, vickrey):
        with pytest.raises(ConfigError):
            score_allocations(vickrey, np.zeros((3, 1)))
        with pytest.raises(ConfigError):
            score_allocations(vickrey, np.zeros((2, 1)), exclude=2)


class TestRunAuction:
    def test_vickrey(self, vickrey):
        out = run_auction(vickrey, np.array([[0.8], [0.5]]))
        assert out.winner_index == 1
        np.testing.assert_allclose(out.payments, [0.5, 0.0], atol=1e-15)
        np.testing.assert_allclose(out.utilities, [0.3, 0.0], atol=1e-15)

    def test_boosted_payment(self, boosted):
        out = run_auction(boosted, np.array([[0.5], [0.6]]))
        assert out.winner_index == 1
        np.testing.assert_allclose(out.payments, [0.3, 0.0], atol=1e-12)
        np.testing.assert_allclose(out.utilities, [0.2, 0.0], atol=1e-12)

    def test_zero_bids_choose_null(self, vickrey):
        out = run_auction(vickrey, np.zeros((2, 1)))
        assert out.winner_index == 0
        assert np.all(out.payments == 0)

    @pytest.mark.parametrize("feasibility", ["additive", "unit-demand"])
    def test_matches_brute_force(self, random_mechanism, feasibility):
        mech = random_mechanism(3, 2, 12, seed=4, feasibility=feasibility)
        rng = np.random.default_rng(1)
        for _ in range(50):
            bids = rng.uniform(size=(3, 2))
            _, best, pay, util = brute_force_auction(mech.allocations, mech.boosts, mech.weights, bids)
            out = run_auction(mech, bids)
            assert out.winner_index == best
            np.testing.assert_allclose(out.payments, pay, atol=1e-12)
            np.testing.assert_allclose(out.utilities, util, atol=1e-12)

    def test_batch_equals_single(self, random_mechanism):
        mech = random_mechanism(2, 3, 30, seed=2)
        bids = np.random.default_rng(0).uniform(size=(40, 2, 3))
        batch = run_batch(mech, bids)
        for b in range(40):
            out = run_auction(mech, bids[b])
            assert out.winner_index == batch.winners[b]
            np.testing.assert_allclose(out.payments, batch.payments[b], atol=1e-12)

    def test_tie_break_lowest_index(self, one_item_menu):
        mech = AmaMechanism(one_item_menu, [0, 0, 0], [1, 1])
        assert run_auction(mech, np.array([[0.4], [0.4]])).winner_index == 1
        for _ in range(5):
            assert run_auction(mech, np.array([[0.4], [0.4]])).winner_index == 1

    def test_common_rescaling_keeps_winner(self, random_mechanism):
        mech = random_mechanism(2, 2, 20, seed=5)
        scaled = AmaMechanism(mech.allocations, 3.7 * mech.boosts, 3.7 * mech.weights)
        bids = np.random.default_rng(3).uniform(size=(500, 2, 2))
        np.testing.assert_array_equal(run_batch(mech, bids).winners, run_batch(scaled, bids).winners)


class TestValidation:
    def test_null_outcome_required(self, one_item_menu):
        with pytest.raises(ConfigError):
            AmaMechanism(one_item_menu[::-1], [0, 0, 0], [1, 1])
        with pytest.raises(ConfigError):
            AmaMechanism(one_item_menu, [0.1, 0, 0], [1, 1])

    def test_positive_weights(self, one_item_menu):
        with pytest.raises(ConfigError):
            AmaMechanism(one_item_menu, [0, 0, 0], [1, 0])

    def test_overallocation(self):
        menu = np.zeros((2, 2, 1))
        menu[1] = 0.6
        with pytest.raises(ConfigError):
            AmaMechanism(menu, [0, 0], [1, 1])

    def test_unit_demand_row_sums(self):
        menu = np.zeros((2, 1, 2))
        menu[1] = 1.0
        AmaMechanism(menu, [0, 0], [1], "additive")
        with pytest.raises(ConfigError):
            AmaMechanism(menu, [0, 0], [1], "unit-demand")


class TestEnumeration:
    @staticmethod
    def brute_force(m, n, feasibility):
        """All 0/1 m x n matrices filtered by the constraints."""
        found = []
        for bits in range(2 ** (m * n)):
            a = np.array([(bits >> s) & 1 for s in range(m * n)], dtype=float).reshape(m, n)
            if a.sum(axis=0).max() > 1:
                continue
            if feasibility == "unit-demand" and a.sum(axis=1).max() > 1:
                continue
            found.append(a)
        return found

    @pytest.mark.parametrize("m,n,feasibility,count", [
        (2, 1, "additive", 3),
        (2, 2, "additive", 9),
        (2, 4, "unit-demand", 21),
        (3, 2, "unit-demand", 13),
        (1, 3, "additive", 8),
    ])
    def test_counts_against_brute_force(self, m, n, feasibility, count):
        menu = enumerate_deterministic_allocations(m, n, feasibility)
        oracle = self.brute_force(m, n, feasibility)
        assert len(menu) == len(oracle) == count == count_deterministic_allocations(m, n, feasibility)
        assert np.all(menu[0] == 0)
        assert {a.tobytes() for a in menu} == {a.tobytes() for a in oracle}

    def test_deterministic_order(self):
        a = enumerate_deterministic_allocations(2, 3)
        b = enumerate_deterministic_allocations(2, 3)
        np.testing.assert_array_equal(a, b)

    def test_guard(self):
        with pytest.raises(ConfigError, match="enumeration limit"):
            enumerate_deterministic_allocations(3, 10)


class TestUtilityOfReport:
    def test_truthful_report_matches_run_auction(self, random_mechanism):
        mech = random_mechanism(2, 2, 10, seed=8)
        bids = np.random.default_rng(2).uniform(size=(2, 2))
        out = run_auction(mech, bids)
        for i in range(2):
            assert utility_of_report(mech, bids[i], bids[i], i, bids) == pytest.approx(out.utilities[i], abs=1e-15)

    def test_zero_report_nothing_received(self, vickrey):
        bids = np.array([[0.8], [0.5]])
        assert utility_of_report(vickrey, bids[0], [0.0], 0, bids) == 0.0

    def test_vickrey_overbid_in_winning_range(self, vickrey):
        bids = np.array([[0.8], [0.5]])
        assert utility_of_report(vickrey, [0.8], [0.55], 0, bids) == pytest.approx(0.3, abs=1e-15)


def _mech_from_seed(seed):
    from lottery_ama.allocations import materialize_additive, with_null

    rng = np.random.default_rng(seed)
    slots = materialize_additive(rng.normal(scale=2.0, size=(8, 3, 2)))
    return AmaMechanism(with_null(slots), np.concatenate([[0.0], rng.normal(scale=0.3, size=8)]),
                        rng.uniform(0.5, 2.0, size=2))


values = st.lists(st.floats(0, 1), min_size=2, max_size=2)


class TestIncentiveProperties:
    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 50), truth=values, other=values, report=values, bidder=st.integers(0, 1))
    def test_truthful_is_dominant(self, seed, truth, other, report, bidder):
        mech = _mech_from_seed(seed)
        bids = np.array([other, other])
        bids[bidder] = truth
        honest = utility_of_report(mech, truth, truth, bidder, bids)
        lie = utility_of_report(mech, truth, report, bidder, bids)
        assert honest >= lie - 1e-9

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 50), a=values, b=values)
    def test_ir_and_nonnegative_payments(self, seed, a, b):
        out = run_auction(_mech_from_seed(seed), np.array([a, b]))
        assert np.all(out.payments >= -1e-9)
        assert np.all(out.utilities >= -1e-9)

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 50), x=values, y=values, other=values)
    def test_utility_convex_in_own_type(self, seed, x, y, other):
        mech = _mech_from_seed(seed)
        bids = np.array([x, other])

        def u(t):
            return utility_of_report(mech, t, t, 0, bids)

        mid = (np.array(x) + np.array(y)) / 2
        assert u(mid) <= (u(x) + u(y)) / 2 + 1e-9


class TestSerialization:
    def test_round_trip_is_exact(self, random_mechanism, tmp_path):
        mech = random_mechanism(3, 4, 25, seed=11, feasibility="unit-demand")
        save_mechanism(mech, tmp_path / "m.json")
        back = load_mechanism(tmp_path / "m.json")
        np.testing.assert_array_equal(back.allocations, mech.allocations)
        np.testing.assert_array_equal(back.boosts, mech.boosts)
        np.testing.assert_array_equal(back.weights, mech.weights)
        assert back.feasibility == "unit-demand"

    def test_schema_fields(self, vickrey, tmp_path):
        save_mechanism(vickrey, tmp_path / "m.json")
        doc = json.loads((tmp_path / "m.json").read_text())
        assert set(doc) == {"format_version", "m", "n", "feasibility_class", "weights", "boosts", "allocations"}
        assert (doc["m"], doc["n"]) == (2, 1)
        assert len(doc["allocations"]) == len(doc["boosts"]) == 3

    def test_rejects_bad_documents(self, vickrey, tmp_path):
        doc = vickrey.to_dict()
        doc["allocations"] = doc["allocations"][1:]
        doc["boosts"] = doc["boosts"][1:]
        with pytest.raises(ConfigError):
            AmaMechanism.from_dict(doc)
        (tmp_path / "x.json").write_text("{not json")
        with pytest.raises(ConfigError):
            load_mechanism(tmp_path / "x.json")
