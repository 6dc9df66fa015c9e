import numpy as np
import pytest

from lottery_ama.errors import ConfigError, TrainingError
from lottery_ama.mechanism import AmaMechanism, load_mechanism
from lottery_ama.optim import Adam, TrainConfig, adam_step, train
from lottery_ama.params import AmaParams
from lottery_ama.evaluation import evaluate_revenue
from lottery_ama.valuations import DistributionSpec

SMALL = dict(steps=150, batch_size=512, menu_size=32, eval_every=50, eval_samples=2000)


class TestAdam:
    def test_zero_gradient_is_fixed_point(self):
        params = {"x": np.array([1.0, -2.0])}
        new, _ = adam_step(params, {"x": np.zeros(2)}, Adam())
        np.testing.assert_array_equal(new["x"], params["x"])

    def test_first_step_is_signed_learning_rate(self):
        params = {"x": np.zeros(3)}
        g = np.array([0.3, -4.0, 1e-3])
        new, state = adam_step(params, {"x": g}, Adam(lr=0.01))
        np.testing.assert_allclose(new["x"], -0.01 * np.sign(g), rtol=1e-4)
        assert state.t == 1

    def test_identical_slots_stay_identical(self):
        opt = Adam()
        params = {"x": np.array([0.5, 0.5])}
        rng = np.random.default_rng(0)
        for _ in range(20):
            g = rng.normal()
            opt.step(params, {"x": np.array([g, g])})
        assert params["x"][0] == params["x"][1]

    def test_non_finite_update_aborts(self):
        with pytest.raises(TrainingError, match="step 1"):
            Adam().step({"x": np.zeros(2)}, {"x": np.array([np.nan, 0.0])})


class TestTrainConfig:
    def test_profiles(self):
        paper, desk = TrainConfig.paper(), TrainConfig.desk()
        assert (paper.steps, paper.batch_size, paper.learning_rate, paper.sharpness) == (9000, 2**15, 0.01, 100.0)
        assert paper.menu_size == 4096
        assert (desk.steps, desk.batch_size, desk.menu_size) == (3000, 4096, 1024)

    @pytest.mark.parametrize("bad", [dict(batch_size=0), dict(learning_rate=0.0), dict(menu_size=0),
                                     dict(sharpness=-1.0), dict(mechanism_kind="neural"),
                                     dict(boost_init="random"), dict(reserve_fraction=-0.1)])
    def test_validation(self, bad):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


def test_zero_steps_returns_initialization():
    spec = DistributionSpec.uniform(2, 2)
    cfg = TrainConfig(**{**SMALL, "steps": 0})
    mech, trace = train(cfg, spec)
    np.testing.assert_array_equal(mech.allocations, trace.initial_params.to_mechanism().allocations)
    np.testing.assert_array_equal(mech.boosts[1:], trace.initial_params.boosts)
    assert mech.boosts[0] == 0
    assert trace.soft_revenue == []


def test_reserve_boost_initialization():
    spec = DistributionSpec.uniform(2, 2)
    _, trace = train(TrainConfig(**{**SMALL, "steps": 0}), spec)
    p = trace.initial_params
    # each unit of an item costs half its mean value of 0.5
    np.testing.assert_allclose(p.boosts, -0.25 * p.allocations()[1:].sum(axis=(1, 2)), atol=1e-15)
    _, trace = train(TrainConfig(boost_init="zero", **{**SMALL, "steps": 0}), spec)
    np.testing.assert_array_equal(trace.initial_params.boosts, 0.0)


def test_seed_determinism():
    spec = DistributionSpec.uniform(2, 2)
    cfg = TrainConfig(**{**SMALL, "steps": 30})
    a, _ = train(cfg, spec)
    b, _ = train(cfg, spec)
    np.testing.assert_array_equal(a.allocations, b.allocations)
    np.testing.assert_array_equal(a.boosts, b.boosts)


def test_monopoly_price_for_single_uniform_bidder():
    spec = DistributionSpec.uniform(1, 1)
    cfg = TrainConfig(steps=400, batch_size=4096, mechanism_kind="deterministic", eval_every=100)
    mech, _ = train(cfg, spec)
    assert mech.menu_size == 2
    price = -mech.boosts[1]
    assert price == pytest.approx(0.5, abs=0.03)
    assert evaluate_revenue(mech, spec, 100_000).mean == pytest.approx(0.25, abs=0.005)


@pytest.mark.parametrize("seed", range(3))
def test_training_improves_exact_revenue(seed):
    spec = DistributionSpec.uniform(2, 2)
    mech, trace = train(TrainConfig(seed=seed, **SMALL), spec)
    start = evaluate_revenue(trace.initial_params.to_mechanism(), spec, 20_000)
    end = evaluate_revenue(mech, spec, 20_000)
    assert end.mean >= start.mean
    assert isinstance(mech, AmaMechanism)


def test_unit_demand_with_learned_weights():
    spec = DistributionSpec.spherical(2, 4)
    mech, trace = train(TrainConfig(freeze_weights=False, **SMALL), spec, "unit-demand")
    assert np.all(mech.weights > 0)
    assert not np.allclose(mech.weights, 1.0)
    assert trace.final_params.feasibility == "unit-demand"


def test_checkpoints(tmp_path):
    spec = DistributionSpec.uniform(2, 2)
    cfg = TrainConfig(**{**SMALL, "steps": 100})
    mech, trace = train(cfg, spec, checkpoint_dir=tmp_path)
    assert trace.snapshots == ["step-000050", "step-000100"]
    final = load_mechanism(tmp_path / "step-000100.json")
    np.testing.assert_array_equal(final.allocations, mech.allocations)
    restored = AmaParams.load(tmp_path / "step-000100.params.npz")
    np.testing.assert_array_equal(restored.logits, trace.final_params.logits)
    with np.load(tmp_path / "step-000100.optim.npz") as state:
        assert int(state["adam_step"]) == 100
        assert state["adam_m_logits"].shape == restored.logits.shape


def test_restart_params_must_match_setting():
    spec = DistributionSpec.uniform(2, 2)
    _, trace = train(TrainConfig(**{**SMALL, "steps": 0}), spec)
    with pytest.raises(ConfigError):
        train(TrainConfig(**{**SMALL, "steps": 1}), DistributionSpec.uniform(3, 2), params=trace.initial_params)
