"""Learnable frequency filters and the spectral gating block.

A filter is a real parameter vector ``w`` whose transfer function is its own
transform. Applying it multiplies the signal's spectrum by the transfer,
bin by bin, which equals circular convolution of the two sequences in time.
Both ``w`` and the signal are real, so the product spectrum keeps conjugate
symmetry and the inverse transform is real again; the tiny imaginary
residual is discarded after the inverse.

The block wraps the filter in normalization: batch-normalize, filter along
the embedding axis of every patch row, instance-normalize, then optionally a
residual two-layer MLP. There is no skip connection around the filter; the
near-impulse initialization is what makes a fresh block close to identity.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .nn import BatchNorm, FeedForward, InstanceNorm, Module
from .numeric import tensor as T
from .numeric.fft import Spectrum, dft
from .numeric.tensor import Parameter, Tensor

FILTER_INIT_STD = 0.02

_FILTER_AXES = ("embedding", "patch")


@dataclass(frozen=True)
class SpectralBlockConfig:
    """Shape of a spectral block: MLP switch, its width, and the filtered axis.

    ``filtered_axis_length`` may be left None and is then derived from the
    model (embedding width, or patch count for the per-patch-axis variant).
    ``mlp_hidden`` defaults to twice the filtered length.
    """

    use_mlp: bool = True
    mlp_hidden: int | None = None
    filtered_axis_length: int | None = None
    filter_axis: str = "embedding"

    def __post_init__(self):
        if self.filter_axis not in _FILTER_AXES:
            raise ConfigError(
                f"filter_axis must be one of {_FILTER_AXES}, got {self.filter_axis!r}"
            )
        if self.use_mlp and self.mlp_hidden is not None and self.mlp_hidden < 1:
            raise ConfigError(f"mlp_hidden must be >= 1, got {self.mlp_hidden}")
        if self.filtered_axis_length is not None and self.filtered_axis_length < 1:
            raise ConfigError(
                f"filtered_axis_length must be >= 1, got {self.filtered_axis_length}"
            )


class SpectralFilter(Module):
    """Trainable length-``n_f`` real filter applied by spectral gating."""

    def __init__(self, n_f: int, rng: np.random.Generator):
        super().__init__()
        if n_f < 1:
            raise ValueError(f"filter length must be >= 1, got {n_f}")
        self.n_f = n_f
        # near-impulse start: w ~ N(0, 0.02) with 1 added at the origin
        w = rng.normal(0.0, FILTER_INIT_STD, size=n_f)
        w[0] += 1.0
        self.w = Parameter(w)

    def transfer(self) -> Spectrum:
        """Current transfer function, recomputed from ``w`` (never cached)."""
        return dft(self.w.data)

    def apply(self, y):
        """Filter ``y`` along its last axis; equals circular convolution with ``w``.

        Accepts a Tensor (gradients flow into both ``y`` and ``w``) or a plain
        array/sequence (returns an ndarray).
        """
        as_tensor = isinstance(y, Tensor)
        yt = y if as_tensor else Tensor(np.asarray(y, dtype=np.float64))
        if yt.shape[-1] != self.n_f:
            raise ValueError(
                f"filter of length {self.n_f} cannot gate axis of length {yt.shape[-1]}"
            )
        wr, wi = T.rfft(self.w)
        yr, yi = T.rfft(yt)
        re = T.sub(T.mul(yr, wr), T.mul(yi, wi))
        im = T.add(T.mul(yr, wi), T.mul(yi, wr))
        out = T.irfft(re, im, self.n_f)
        return out if as_tensor else out.data

    def forward(self, y):
        return self.apply(y)


def apply_filter(f: SpectralFilter, y):
    """Spectral gating of ``y`` by filter ``f`` (circular convolution in time)."""
    return f.apply(y)


def amplitude_spectrum(f: SpectralFilter) -> np.ndarray:
    """Per-bin transfer magnitudes |P_k|, length ``n_f // 2 + 1``."""
    return f.transfer().amplitudes()


class SpectralBlock(Module):
    """Batch norm, spectral gating, instance norm, optional residual MLP."""

    def __init__(self, d_model: int, n_patches: int, cfg: SpectralBlockConfig,
                 rng: np.random.Generator, activation: str = "gelu",
                 dropout: float = 0.0):
        super().__init__()
        n_f = d_model if cfg.filter_axis == "embedding" else n_patches
        if cfg.filtered_axis_length is not None and cfg.filtered_axis_length != n_f:
            raise ValueError(
                f"config filters axis of length {cfg.filtered_axis_length}, "
                f"but the {cfg.filter_axis} axis here has length {n_f}"
            )
        self.cfg = cfg
        self.d_model = d_model
        self.norm_in = BatchNorm(d_model)
        self.filter = SpectralFilter(n_f, rng)
        self.norm_mid = InstanceNorm(d_model)
        if cfg.use_mlp:
            hidden = cfg.mlp_hidden if cfg.mlp_hidden is not None else 2 * d_model
            self.mlp = FeedForward(d_model, hidden, d_model, rng, activation, dropout)

    def forward(self, y: Tensor, rng: np.random.Generator | None = None,
                capture: dict | None = None) -> Tensor:
        if y.shape[-1] != self.d_model:
            raise ValueError(
                f"block built for embedding width {self.d_model}, got shape {y.shape}"
            )
        y = self.norm_in(y)
        if self.cfg.filter_axis == "embedding":
            fin = y
            fout = self.filter.apply(fin)
            y = fout
        else:
            fin = T.swapaxes(y, -1, -2)
            fout = self.filter.apply(fin)
            y = T.swapaxes(fout, -1, -2)
        if capture is not None:
            # filtered axis last, so callers can transform along axis -1 directly
            capture["filter_input"] = np.array(fin.data)
            capture["filter_output"] = np.array(fout.data)
        y = self.norm_mid(y)
        if self.cfg.use_mlp:
            y = T.add(y, self.mlp(y, rng))
        return y


def spectral_block_forward(block: SpectralBlock, y: Tensor,
                           rng: np.random.Generator | None = None) -> Tensor:
    """Run one spectral block; ``y`` is (patches, d_model) or batched (..., patches, d_model)."""
    if y.ndim == 2:
        return T.reshape(block(T.reshape(y, (1,) + y.shape), rng), y.shape)
    return block(y, rng)


def write_amplitude_csv(path, amplitudes: np.ndarray) -> None:
    """Write a spectrum as ``bin_index,amplitude`` rows."""
    amplitudes = np.asarray(amplitudes, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_index", "amplitude"])
        for k, a in enumerate(amplitudes):
            writer.writerow([k, repr(float(a))])
