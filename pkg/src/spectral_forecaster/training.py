"""MSE training with Adam, patience-based early stopping, and z-scale metrics.

The loop is deterministic end to end: batch shuffling draws from
default_rng([seed, 1]) and dropout from default_rng([seed, 2]), so a (seed,
config, data) triple fixes every reported number. Windows arrive already
z-normalized by the data layer and metrics stay on that scale; the model's
internal per-window renormalization is invisible here.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .data import WindowSet, stack_windows
from .errors import ConfigError, NumericError
from .numeric import Tensor, backward
from .numeric import tensor as T

LR_GRID = (1e-4, 5e-4, 1e-3)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings. Loss is fixed to MSE.

    learning_rate 0 is allowed and freezes the model, which is useful for
    exercising the early-stopping mechanism on its own.
    """

    learning_rate: float = 1e-4
    batch_size: int = 16
    max_epochs: int = 50
    patience: int = 15
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not 1 <= self.patience <= self.max_epochs:
            raise ConfigError(
                f"patience must be in [1, max_epochs], got {self.patience} with max_epochs {self.max_epochs}"
            )
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")


@dataclass(frozen=True)
class Metrics:
    mse: float
    mae: float

    def __post_init__(self):
        for name, value in (("mse", self.mse), ("mae", self.mae)):
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")


def mse_loss(pred, target) -> Tensor:
    """Mean squared error over all elements, differentiable in pred."""
    pt = pred if isinstance(pred, Tensor) else Tensor(np.asarray(pred, dtype=np.float64))
    ta = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if pt.shape != ta.shape:
        raise ValueError(f"shape mismatch: pred {pt.shape} vs target {ta.shape}")
    diff = T.sub(pt, ta)
    return T.mean(T.mul(diff, diff))


def mae(pred, target) -> float:
    """Mean absolute error over all elements."""
    pa = pred.data if isinstance(pred, Tensor) else np.asarray(pred, dtype=np.float64)
    ta = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if pa.shape != ta.shape:
        raise ValueError(f"shape mismatch: pred {pa.shape} vs target {ta.shape}")
    return float(np.mean(np.abs(pa - ta)))


@dataclass
class AdamState:
    """First/second moment estimates per parameter plus the shared step count."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model) -> "AdamState":
        m = {name: np.zeros_like(p.data) for name, p in model.named_parameters()}
        v = {name: np.zeros_like(p.data) for name, p in model.named_parameters()}
        return cls(m=m, v=v)


def adam_step(state: AdamState, named_params, lr: float) -> None:
    """One Adam update in place; gradients are read from the parameters."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in named_params:
        g = p.grad
        if g is None:
            raise ValueError(f"parameter {name} has no gradient")
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name} at step {t}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data[...] -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


@dataclass
class FitResult:
    model: object
    history: list[tuple[int, float, float]]  # (epoch, train_mse, val_mse)
    best_epoch: int
    best_val: float
    stopped_epoch: int


def _rows(samples) -> tuple[np.ndarray, np.ndarray]:
    # channel-independent: every (sample, channel) pair becomes one row
    x, y = stack_windows(samples)
    return x.reshape(-1, x.shape[-1]), y.reshape(-1, y.shape[-1])


def _raw_metrics(model, rows_x: np.ndarray, rows_y: np.ndarray) -> tuple[float, float]:
    pred = model.predict(rows_x)
    err = pred - rows_y
    with np.errstate(over="ignore"):  # divergence shows up as inf and is handled upstream
        return float(np.mean(err * err)), float(np.mean(np.abs(err)))


def fit(model, windows: WindowSet, cfg: TrainConfig) -> FitResult:
    """Train until max_epochs or until val MSE stops improving for `patience` epochs.

    The epoch with the lowest validation MSE wins (ties keep the earlier
    epoch) and its parameters and buffers are restored into the model before
    returning. A non-finite validation loss aborts with the failing epoch.
    """
    if not windows.train or not windows.val:
        raise ValueError("fit needs nonempty train and val streams")
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    dropout_rng = np.random.default_rng([cfg.seed, 2])
    state = AdamState.for_model(model)
    params = list(model.named_parameters())
    val_x, val_y = _rows(windows.val)

    history: list[tuple[int, float, float]] = []
    best_val = math.inf
    best_epoch = 0
    best_state: dict[str, np.ndarray] = {}
    epochs_since_improvement = 0
    stopped_epoch = 0

    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        order = shuffle_rng.permutation(len(windows.train))
        sq_sum = 0.0
        n_elems = 0
        for lo in range(0, len(order), cfg.batch_size):
            batch = [windows.train[i] for i in order[lo:lo + cfg.batch_size]]
            rows_x, rows_y = _rows(batch)
            loss = mse_loss(model(rows_x, rng=dropout_rng), rows_y)
            model.zero_grad()
            backward(loss)
            adam_step(state, params, cfg.learning_rate)
            sq_sum += loss.item() * rows_y.size
            n_elems += rows_y.size
        train_mse = sq_sum / n_elems

        model.eval()
        val_mse, _ = _raw_metrics(model, val_x, val_y)
        if not math.isfinite(val_mse):
            raise NumericError(f"validation loss diverged at epoch {epoch}")
        history.append((epoch, train_mse, val_mse))
        stopped_epoch = epoch

        if val_mse < best_val:
            best_val = val_mse
            best_epoch = epoch
            best_state = {
                name: np.array(value.data if isinstance(value, Tensor) else value)
                for name, value in model.named_state()
            }
            epochs_since_improvement = 0
        else:
            epochs_since_improvement += 1
            if epochs_since_improvement >= cfg.patience:
                break

    for name, value in model.named_state():
        target = value.data if isinstance(value, Tensor) else value
        target[...] = best_state[name]
    model.eval()
    return FitResult(
        model=model, history=history, best_epoch=best_epoch,
        best_val=best_val, stopped_epoch=stopped_epoch,
    )


def evaluate(model, samples) -> Metrics:
    """MSE and MAE of model.predict over a window stream, on the z-normalized scale."""
    samples = list(samples)
    if not samples:
        raise ValueError("cannot evaluate an empty stream")
    rows_x, rows_y = _rows(samples)
    mse_v, mae_v = _raw_metrics(model, rows_x, rows_y)
    return Metrics(mse=mse_v, mae=mae_v)


def write_loss_curve(path, history) -> None:
    """CSV of per-epoch losses: epoch,train_mse,val_mse."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_mse", "val_mse"])
        for epoch, train_mse, val_mse in history:
            writer.writerow([epoch, repr(float(train_mse)), repr(float(val_mse))])


def write_metrics_csv(path, rows) -> None:
    """CSV of per-horizon metrics: horizon,mse,mae."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["horizon", "mse", "mae"])
        for horizon, metrics in rows:
            writer.writerow([horizon, repr(metrics.mse), repr(metrics.mae)])
