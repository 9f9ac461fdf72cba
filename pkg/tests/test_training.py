"""Loss functions, Adam against a reference implementation, fit mechanics, metrics."""

import math

import numpy as np
import pytest

from spectral_forecaster.data import WindowSample, WindowSet
from spectral_forecaster.errors import ConfigError, NumericError
from spectral_forecaster.nn import Linear, Module
from spectral_forecaster.numeric import Tensor, backward, no_grad
from spectral_forecaster.training import (
    LR_GRID,
    AdamState,
    Metrics,
    TrainConfig,
    adam_step,
    evaluate,
    fit,
    mae,
    mse_loss,
    write_loss_curve,
    write_metrics_csv,
)


class LinearStub(Module):
    """Bare lookback-to-horizon linear map with the training-loop interface."""

    def __init__(self, lookback, horizon, rng):
        super().__init__()
        self.lin = Linear(lookback, horizon, rng)

    def forward(self, x, rng=None):
        return self.lin(x if isinstance(x, Tensor) else Tensor(np.asarray(x, float)))

    def predict(self, x):
        was_training = self.training
        self.eval()
        with no_grad():
            out = self.forward(x).data
        if was_training:
            self.train()
        return out


def window_set(x, y, n_val=8, n_test=8):
    """Wrap row arrays (n, L) and (n, H) into a WindowSet of 1-channel samples."""
    samples = [
        WindowSample(input=xi[None, :], target=yi[None, :], origin=i)
        for i, (xi, yi) in enumerate(zip(x, y))
    ]
    n = len(samples)
    return WindowSet(
        train=samples[: n - n_val - n_test],
        val=samples[n - n_val - n_test: n - n_test],
        test=samples[n - n_test:],
        mean=np.zeros(1),
        std=np.ones(1),
    )


class TestLosses:
    def test_equal_inputs_give_zero(self):
        x = np.random.default_rng(0).standard_normal((3, 4))
        assert mse_loss(x, x).item() == 0.0
        assert mae(x, x) == 0.0

    def test_cited_values(self):
        assert mse_loss(np.array([0.0, 0.0]), np.array([1.0, 1.0])).item() == 1.0
        assert mae(np.array([0.0, 0.0]), np.array([1.0, 1.0])) == 1.0
        assert mse_loss(np.array([0.0, 2.0]), np.array([1.0, 1.0])).item() == 1.0
        assert mae(np.array([0.0, 2.0]), np.array([1.0, 1.0])) == 1.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            mse_loss(np.zeros((2, 3)), np.zeros((3, 2)))
        with pytest.raises(ValueError):
            mae(np.zeros(2), np.zeros(3))

    def test_mse_gradient(self):
        rng = np.random.default_rng(1)
        pred = rng.standard_normal((4, 5))
        target = rng.standard_normal((4, 5))
        pt = Tensor(pred.copy(), requires_grad=True)
        backward(mse_loss(pt, target))
        np.testing.assert_allclose(pt.grad, 2.0 * (pred - target) / pred.size, rtol=1e-12)


class TestAdam:
    def test_zero_gradient_is_identity(self):
        rng = np.random.default_rng(0)
        model = LinearStub(4, 2, rng)
        before = {n: p.data.copy() for n, p in model.named_parameters()}
        state = AdamState.for_model(model)
        model.zero_grad()
        for _, p in model.named_parameters():
            p.grad = np.zeros_like(p.data)
        adam_step(state, list(model.named_parameters()), lr=0.1)
        for n, p in model.named_parameters():
            np.testing.assert_array_equal(p.data, before[n])

    def test_hand_computed_single_step(self):
        # theta=0, g=1, defaults, lr=0.1: first-step bias correction makes
        # m_hat = v_hat = 1, so theta becomes -0.1 / (1 + eps)
        model = Module()
        from spectral_forecaster.numeric.tensor import Parameter

        model.theta = Parameter(np.zeros(()))
        model.theta.grad = np.ones(())
        state = AdamState.for_model(model)
        adam_step(state, list(model.named_parameters()), lr=0.1)
        expected = -0.1 / (1.0 + 1e-8)
        assert model.theta.data == pytest.approx(expected, rel=1e-12)
        assert model.theta.data == pytest.approx(-0.0999999990, abs=1e-9)

    def test_matches_reference_implementation(self):
        # independent straight-from-the-formulas reference, no in-place tricks
        rng = np.random.default_rng(7)
        theta = rng.standard_normal((3, 4))
        model = Module()
        from spectral_forecaster.numeric.tensor import Parameter

        model.w = Parameter(theta.copy())
        state = AdamState.for_model(model)

        ref_theta = theta.copy()
        ref_m = np.zeros_like(theta)
        ref_v = np.zeros_like(theta)
        b1, b2, eps, lr = 0.9, 0.999, 1e-8, 0.01
        for t in range(1, 6):
            g = rng.standard_normal((3, 4))
            model.w.grad = g.copy()
            adam_step(state, list(model.named_parameters()), lr=lr)
            ref_m = b1 * ref_m + (1 - b1) * g
            ref_v = b2 * ref_v + (1 - b2) * g**2
            m_hat = ref_m / (1 - b1**t)
            v_hat = ref_v / (1 - b2**t)
            ref_theta = ref_theta - lr * m_hat / (np.sqrt(v_hat) + eps)
            np.testing.assert_allclose(model.w.data, ref_theta, rtol=1e-12, atol=1e-15)
        assert state.step == 5

    def test_nan_gradient_names_parameter(self):
        model = LinearStub(4, 2, np.random.default_rng(0))
        state = AdamState.for_model(model)
        for _, p in model.named_parameters():
            p.grad = np.zeros_like(p.data)
        model.lin.weight.grad[0, 0] = np.nan
        with pytest.raises(NumericError, match="lin.weight"):
            adam_step(state, list(model.named_parameters()), lr=0.1)

    def test_missing_gradient_rejected(self):
        model = LinearStub(4, 2, np.random.default_rng(0))
        state = AdamState.for_model(model)
        with pytest.raises(ValueError, match="no gradient"):
            adam_step(state, list(model.named_parameters()), lr=0.1)


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.max_epochs == 50
        assert cfg.patience == 15
        assert cfg.batch_size == 16
        assert set(LR_GRID) == {1e-4, 5e-4, 1e-3}

    def test_invalid_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig(learning_rate=-1e-4)
        with pytest.raises(ConfigError):
            TrainConfig(patience=51, max_epochs=50)
        with pytest.raises(ConfigError):
            TrainConfig(batch_size=0)


def learnable_windows(seed=0, n=80, lookback=8, horizon=4):
    """Targets are an exact linear map of inputs, so a Linear model can reach ~0."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, lookback))
    a = rng.standard_normal((lookback, horizon)) / np.sqrt(lookback)
    return window_set(x, x @ a)


class TestFit:
    def test_trivially_learnable_reaches_near_zero(self):
        ws = window_set(
            np.random.default_rng(0).standard_normal((80, 8)), np.zeros((80, 4))
        )
        model = LinearStub(8, 4, np.random.default_rng(1))
        result = fit(model, ws, TrainConfig(learning_rate=0.05, max_epochs=20, patience=20))
        assert result.history[-1][1] < 1e-3
        assert result.history[-1][1] < result.history[0][1] / 100

    def test_quadratic_problem_train_loss_drops(self):
        ws = learnable_windows()
        model = LinearStub(8, 4, np.random.default_rng(1))
        result = fit(model, ws, TrainConfig(learning_rate=0.02, max_epochs=30, patience=30))
        first = result.history[0][1]
        best_by_epoch = np.minimum.accumulate([h[1] for h in result.history])
        assert (np.diff(best_by_epoch) <= 0).all()
        assert best_by_epoch[-1] < first / 10

    def test_frozen_model_stops_at_patience_plus_one(self):
        ws = learnable_windows()
        model = LinearStub(8, 4, np.random.default_rng(1))
        result = fit(model, ws, TrainConfig(learning_rate=0.0, max_epochs=50, patience=3))
        assert result.stopped_epoch == 4
        assert len(result.history) == 4
        assert result.best_epoch == 1

    def test_frozen_model_with_full_patience_never_moves(self):
        ws = learnable_windows()
        model = LinearStub(8, 4, np.random.default_rng(1))
        before = {n: p.data.copy() for n, p in model.named_parameters()}
        result = fit(model, ws, TrainConfig(learning_rate=0.0, max_epochs=10, patience=10))
        assert result.stopped_epoch == 10
        for n, p in model.named_parameters():
            np.testing.assert_array_equal(p.data, before[n])

    def test_best_checkpoint_restored(self):
        ws = learnable_windows()
        model = LinearStub(8, 4, np.random.default_rng(1))
        # lr high enough to oscillate so the last epoch is usually not the best
        result = fit(model, ws, TrainConfig(learning_rate=0.3, max_epochs=25, patience=25))
        assert result.best_val == min(h[2] for h in result.history)
        assert result.best_epoch == min(
            e for e, _, v in result.history if v == result.best_val
        )
        recomputed = evaluate(model, ws.val).mse
        assert recomputed == result.best_val

    def test_divergent_validation_aborts_with_epoch(self):
        class Exploding(LinearStub):
            def predict(self, x):
                return np.full((x.shape[0], 4), 1e200)

        ws = learnable_windows()
        model = Exploding(8, 4, np.random.default_rng(1))
        with pytest.raises(NumericError, match="epoch 1"):
            fit(model, ws, TrainConfig(learning_rate=1e-4, max_epochs=5, patience=5))

    def test_deterministic_given_seed(self):
        ws = learnable_windows()
        runs = []
        for _ in range(2):
            model = LinearStub(8, 4, np.random.default_rng(1))
            result = fit(model, ws, TrainConfig(learning_rate=0.02, max_epochs=6, patience=6, seed=9))
            runs.append((result.history, {n: p.data.copy() for n, p in model.named_parameters()}))
        assert runs[0][0] == runs[1][0]
        for n in runs[0][1]:
            np.testing.assert_array_equal(runs[0][1][n], runs[1][1][n])

    def test_empty_streams_rejected(self):
        ws = learnable_windows()
        empty = WindowSet(train=[], val=ws.val, test=ws.test, mean=ws.mean, std=ws.std)
        model = LinearStub(8, 4, np.random.default_rng(1))
        with pytest.raises(ValueError):
            fit(model, empty, TrainConfig())


class TestEvaluate:
    def test_oracle_predictor_scores_zero(self):
        class LastValue(Module):
            def predict(self, x):
                return np.repeat(x[:, -1:], 4, axis=1)

        rng = np.random.default_rng(0)
        x = rng.standard_normal((20, 8))
        y = np.repeat(x[:, -1:], 4, axis=1)
        ws = window_set(x, y, n_val=5, n_test=10)
        metrics = evaluate(LastValue(), ws.test)
        assert metrics == Metrics(0.0, 0.0)

    def test_mean_predictor_on_unit_variance_data(self):
        class MeanPredictor(Module):
            def predict(self, x):
                return np.repeat(x.mean(axis=1, keepdims=True), 8, axis=1)

        rng = np.random.default_rng(3)
        x = rng.standard_normal((4000, 32))
        y = rng.standard_normal((4000, 8))
        ws = window_set(x, y, n_val=10, n_test=3000)
        metrics = evaluate(MeanPredictor(), ws.test)
        assert abs(metrics.mse - 1.0) < 0.05

    def test_empty_stream_rejected(self):
        with pytest.raises(ValueError):
            evaluate(LinearStub(4, 2, np.random.default_rng(0)), [])

    def test_repeatable(self):
        ws = learnable_windows()
        model = LinearStub(8, 4, np.random.default_rng(1))
        assert evaluate(model, ws.test) == evaluate(model, ws.test)

    def test_metrics_validation(self):
        with pytest.raises(ValueError):
            Metrics(-1.0, 0.0)
        with pytest.raises(ValueError):
            Metrics(math.inf, 0.0)


class TestCsvOutputs:
    def test_loss_curve_schema(self, tmp_path):
        history = [(1, 0.5, 0.6), (2, 0.25, 0.4)]
        p = tmp_path / "loss.csv"
        write_loss_curve(p, history)
        lines = p.read_text().splitlines()
        assert lines[0] == "epoch,train_mse,val_mse"
        assert lines[1] == "1,0.5,0.6"
        assert len(lines) == 3

    def test_metrics_schema(self, tmp_path):
        p = tmp_path / "metrics.csv"
        write_metrics_csv(p, [(96, Metrics(0.373, 0.394)), (192, Metrics(0.41, 0.42))])
        lines = p.read_text().splitlines()
        assert lines[0] == "horizon,mse,mae"
        assert lines[1] == "96,0.373,0.394"

    def test_rewrite_is_byte_identical(self, tmp_path):
        history = [(1, 1 / 3, 2 / 7), (2, 0.123456789012345, 9.87e-5)]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_loss_curve(a, history)
        write_loss_curve(b, history)
        assert a.read_bytes() == b.read_bytes()
