"""Reversible per-channel standardization around the forecaster.

Each row (one channel of one sample) is normalized to zero mean and unit
variance over its lookback window; the captured statistics are replayed onto
the forecast. Statistics are plain numpy, deliberately outside the gradient
tape. Population variance, eps-floored.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..numeric import tensor as T
from ..numeric.tensor import Parameter, Tensor
from ..nn import Module

REVIN_EPS = 1e-5


@dataclass
class RevInState:
    """Per-row mean and eps-floored standard deviation, shaped (..., 1)."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if np.any(self.std <= 0):
            raise ValueError("revin state requires strictly positive std")


def revin_normalize(x: np.ndarray) -> tuple[np.ndarray, RevInState]:
    """Standardize each row over its last axis; returns the data and the state."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 2:
        raise ValueError(f"revin needs at least 2 samples per row, got shape {x.shape}")
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)  # population variance
    if np.any(var == 0.0):
        warnings.warn("zero-variance channel normalized with eps-floored std", stacklevel=2)
    std = np.sqrt(var + REVIN_EPS)
    return (x - mean) / std, RevInState(mean=mean, std=std)


def revin_denormalize(y: np.ndarray, state: RevInState) -> np.ndarray:
    """Invert :func:`revin_normalize` on a forecast sharing the state's rows."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape[:-1] != state.mean.shape[:-1]:
        raise ValueError(
            f"state covers rows {state.mean.shape[:-1]}, forecast has rows {y.shape[:-1]}"
        )
    return y * state.std + state.mean


class RevIN(Module):
    """Module wrapper adding the optional learnable affine pair.

    The affine is a scalar scale/shift shared across channels (the model is
    channel-count agnostic, so per-channel affine weights have no stable
    shape to live in). Disabled by default.
    """

    def __init__(self, affine: bool = False):
        super().__init__()
        self.affine = affine
        if affine:
            self.gamma = Parameter(np.ones(()))
            self.beta = Parameter(np.zeros(()))

    def normalize(self, x: np.ndarray) -> tuple[Tensor, RevInState]:
        xn, state = revin_normalize(x)
        out = Tensor(xn)
        if self.affine:
            out = T.add(T.mul(out, self.gamma), self.beta)
        return out, state

    def denormalize(self, y: Tensor, state: RevInState) -> Tensor:
        if y.shape[:-1] != state.mean.shape[:-1]:
            raise ValueError(
                f"state covers rows {state.mean.shape[:-1]}, forecast has rows {y.shape[:-1]}"
            )
        if self.affine:
            y = T.div(T.sub(y, self.beta), self.gamma)
        return T.add(T.mul(y, state.std), state.mean)
