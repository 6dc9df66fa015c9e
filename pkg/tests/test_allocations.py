import numpy as np
import pytest

from lottery_ama.allocations import (
    additive_forward,
    additive_vjp,
    materialize_additive,
    materialize_menu,
    materialize_unit_demand,
    unit_demand_forward,
    unit_demand_vjp,
)
from lottery_ama.errors import ParameterError
from lottery_ama.mechanism import check_feasibility, enumerate_deterministic_allocations

TOL = 1e-9


class TestAdditive:
    def test_uniform_logits(self):
        a, probs = additive_forward(np.zeros((3, 4)))
        np.testing.assert_allclose(a, 1 / 3, atol=1e-15)
        np.testing.assert_allclose(probs[-1], 1 / 3, atol=1e-15)

    def test_saturated_logit(self):
        logits = np.zeros((3, 2))
        logits[0, 1] = 50.0
        a = materialize_additive(logits)
        assert abs(a[0, 1] - 1) < 1e-9
        assert a[1, 1] < 1e-9

    def test_feasible_for_random_draws(self):
        rng = np.random.default_rng(0)
        a = materialize_additive(rng.normal(scale=5.0, size=(10_000, 3, 4)))
        sums = a.sum(axis=-2)
        assert sums.min() >= 0 and sums.max() <= 1 + TOL
        check_feasibility(a, "additive")

    def test_monotone_in_own_logit(self):
        rng = np.random.default_rng(1)
        logits = rng.normal(size=(3, 2))
        base = materialize_additive(logits)[1, 0]
        logits[1, 0] += 0.5
        assert materialize_additive(logits)[1, 0] > base

    def test_rejects_non_finite(self):
        with pytest.raises(ParameterError):
            materialize_additive(np.array([[0.0, np.nan], [0.0, 0.0]]))


class TestUnitDemand:
    def test_equal_logits(self):
        a = materialize_unit_demand(np.zeros((2, 5)), np.zeros((3, 4)))
        np.testing.assert_allclose(a, 0.2, atol=1e-12)
        np.testing.assert_allclose(a.sum(axis=1), 0.8, atol=1e-12)
        np.testing.assert_allclose(a.sum(axis=0), 0.4, atol=1e-12)

    def test_rows_saturated_toward_dummy(self):
        rows = np.full((2, 5), -60.0)
        rows[:, -1] = 60.0
        a = materialize_unit_demand(rows, np.zeros((3, 4)))
        assert a.max() < 1e-20

    def test_feasible_for_random_draws(self):
        rng = np.random.default_rng(2)
        a = materialize_unit_demand(rng.normal(scale=5.0, size=(10_000, 2, 5)),
                                    rng.normal(scale=5.0, size=(10_000, 3, 4)))
        assert a.min() >= 0
        assert a.sum(axis=-1).max() <= 1 + TOL
        assert a.sum(axis=-2).max() <= 1 + TOL
        check_feasibility(a, "unit-demand")


def _central_difference(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f(x)
        x[idx] = old - h
        down = f(x)
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


class TestJacobians:
    def test_additive_vjp(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(size=(2, 3, 4))
        w = rng.normal(size=(2, 2, 4))
        _, probs = additive_forward(logits)
        analytic = additive_vjp(probs, w)
        numeric = _central_difference(lambda x: (materialize_additive(x) * w).sum(), logits)
        np.testing.assert_allclose(analytic, numeric, atol=1e-8)

    def test_unit_demand_vjp(self):
        rng = np.random.default_rng(4)
        rows, cols = rng.normal(size=(3, 2, 5)), rng.normal(size=(3, 3, 4))
        w = rng.normal(size=(3, 2, 4))
        _, cache = unit_demand_forward(rows, cols)
        g_rows, g_cols = unit_demand_vjp(cache, w)
        num_rows = _central_difference(lambda x: (materialize_unit_demand(x, cols) * w).sum(), rows)
        num_cols = _central_difference(lambda x: (materialize_unit_demand(rows, x) * w).sum(), cols)
        np.testing.assert_allclose(g_rows, num_rows, atol=1e-8)
        np.testing.assert_allclose(g_cols, num_cols, atol=1e-8)


class TestMenu:
    def test_single_slot(self):
        menu = materialize_menu(np.zeros((1, 3, 2)), "additive")
        assert menu.shape == (2, 2, 2)
        assert np.all(menu[0] == 0)
        np.testing.assert_allclose(menu[1], 1 / 3)

    def test_large_random_menu_feasible(self):
        rng = np.random.default_rng(5)
        menu = materialize_menu(rng.normal(size=(2048, 2, 5)), "unit-demand", rng.normal(size=(2048, 3, 4)))
        assert menu.shape == (2049, 2, 4)
        assert np.all(menu[0] == 0)
        check_feasibility(menu, "unit-demand")

    def test_fixed_menu_passes_through(self):
        enumerated = enumerate_deterministic_allocations(2, 2)
        np.testing.assert_array_equal(materialize_menu(enumerated[1:], "fixed"), enumerated)
