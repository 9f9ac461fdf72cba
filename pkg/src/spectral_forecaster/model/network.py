"""The forecaster: patching, embedding, block stack, head, RevIN shell.

Channels are processed independently with shared weights, so the model
consumes rows of shape (rows, lookback) where each row is one channel of one
sample. Construction draws every random init from a single generator in a
fixed order (embedding, then blocks front to back, then head); the alpha=0
model is therefore bit-identical to a hand-assembled attention backbone
seeded the same way.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from ..errors import ConfigError
from ..numeric import tensor as T
from ..numeric.tensor import Parameter, Tensor, no_grad
from ..spectral import SpectralBlock, SpectralBlockConfig, SpectralFilter
from ..nn import BatchNorm, Dropout, FeedForward, Linear, Module, ModuleList, xavier_uniform
from .revin import RevIN, revin_denormalize, revin_normalize

PLACEMENTS = ("post-embedding", "pre-embedding")


@dataclass(frozen=True)
class ModelConfig:
    """Every shape hyperparameter of the forecaster.

    ``stride`` defaults to ``patch_len`` (non-overlapping patches) and ``d_k``
    to ``d_model // n_heads``. ``alpha`` of the ``total_layers`` blocks are
    spectral, the rest attention; spectral blocks always come first.
    """

    lookback: int
    horizon: int
    patch_len: int
    stride: int | None = None
    d_model: int = 128
    n_heads: int = 8
    d_k: int | None = None
    total_layers: int = 4
    alpha: int = 1
    spectral: SpectralBlockConfig = field(default_factory=SpectralBlockConfig)
    filter_placement: str = "post-embedding"
    dropout: float = 0.1
    activation: str = "gelu"
    ffn_hidden: int | None = None
    revin_affine: bool = False

    def __post_init__(self):
        if self.stride is None:
            object.__setattr__(self, "stride", self.patch_len)
        if self.d_k is None:
            if self.d_model % self.n_heads != 0:
                raise ConfigError(
                    f"d_model={self.d_model} not divisible by n_heads={self.n_heads}; "
                    "set d_k explicitly"
                )
            object.__setattr__(self, "d_k", self.d_model // self.n_heads)
        for name in ("lookback", "horizon", "patch_len", "stride", "d_model",
                     "n_heads", "d_k", "total_layers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0 <= self.alpha <= self.total_layers:
            raise ConfigError(
                f"alpha must lie in [0, total_layers={self.total_layers}], got {self.alpha}"
            )
        if self.patch_len > self.lookback:
            raise ConfigError(
                f"patch_len={self.patch_len} exceeds lookback={self.lookback}"
            )
        if self.filter_placement not in PLACEMENTS:
            raise ConfigError(
                f"filter_placement must be one of {PLACEMENTS}, got {self.filter_placement!r}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.activation not in ("gelu", "relu"):
            raise ConfigError(f"activation must be gelu or relu, got {self.activation!r}")
        if self.ffn_hidden is not None and self.ffn_hidden < 1:
            raise ConfigError(f"ffn_hidden must be >= 1, got {self.ffn_hidden}")
        if not isinstance(self.spectral, SpectralBlockConfig):
            raise ConfigError("spectral must be a SpectralBlockConfig")

    @property
    def n_patches(self) -> int:
        return (self.lookback - self.patch_len) // self.stride + 1

    def resolved_ffn_hidden(self) -> int:
        return self.ffn_hidden if self.ffn_hidden is not None else 2 * self.d_model

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["spectral"] = {f.name: getattr(self.spectral, f.name) for f in fields(self.spectral)}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        sp = d.get("spectral")
        if isinstance(sp, dict):
            sp_known = {f.name for f in fields(SpectralBlockConfig)}
            sp_unknown = set(sp) - sp_known
            if sp_unknown:
                raise ConfigError(f"unknown spectral config keys: {sorted(sp_unknown)}")
            d["spectral"] = SpectralBlockConfig(**sp)
        return cls(**d)


def patchify(x: np.ndarray, patch_len: int, stride: int) -> np.ndarray:
    """Slice the last axis into windows: patch i covers [i*stride, i*stride + patch_len)."""
    x = np.asarray(x, dtype=np.float64)
    length = x.shape[-1]
    if patch_len > length:
        raise ValueError(f"patch_len={patch_len} exceeds sequence length {length}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    n = (length - patch_len) // stride + 1
    idx = stride * np.arange(n)[:, None] + np.arange(patch_len)
    # fancy indexing with a leading ellipsis lays the result out subspace-first;
    # force C order so downstream matmuls see the same layout as the gather path
    return np.ascontiguousarray(x[..., idx])


_patch_matrix_cache: dict[tuple[int, int, int], np.ndarray] = {}


def _patch_matrix(length: int, patch_len: int, stride: int) -> np.ndarray:
    # 0/1 gather matrix so patching is a matmul and stays differentiable
    key = (length, patch_len, stride)
    mat = _patch_matrix_cache.get(key)
    if mat is None:
        n = (length - patch_len) // stride + 1
        mat = np.zeros((length, n * patch_len))
        for i in range(n):
            for j in range(patch_len):
                mat[i * stride + j, i * patch_len + j] = 1.0
        mat.flags.writeable = False
        _patch_matrix_cache[key] = mat
    return mat


class PatchEmbedding(Module):
    """Y = patches @ E + Pos with learnable E (patch_len, d_model) and Pos (n, d_model)."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.proj = Parameter(xavier_uniform(rng, cfg.patch_len, cfg.d_model))
        self.pos = Parameter(rng.normal(0.0, 0.02, size=(cfg.n_patches, cfg.d_model)))

    def forward(self, patches: Tensor) -> Tensor:
        return T.add(T.matmul(patches, self.proj), self.pos)


def embed_patches(embedding: PatchEmbedding, patches) -> Tensor:
    """Embed (..., n_patches, patch_len) patches into (..., n_patches, d_model)."""
    if not isinstance(patches, Tensor):
        patches = Tensor(np.asarray(patches, dtype=np.float64))
    return embedding(patches)


class AttentionBlock(Module):
    """Post-norm multi-head self-attention over patches.

    Per head, queries and keys are d_k wide while values keep the full
    d_model width; the concatenated (n_heads * d_model) output is projected
    back to d_model. Q/K/V maps carry no bias. Dropout hits the attention
    weights and the MLP interior only.
    """

    def __init__(self, d_model: int, n_heads: int, d_k: int, ffn_hidden: int,
                 rng: np.random.Generator, activation: str = "gelu",
                 dropout: float = 0.0):
        super().__init__()
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_k = d_k
        self.wq = Parameter(xavier_uniform(rng, d_model, n_heads * d_k))
        self.wk = Parameter(xavier_uniform(rng, d_model, n_heads * d_k))
        self.wv = Parameter(xavier_uniform(rng, d_model, n_heads * d_model))
        self.out_proj = Linear(n_heads * d_model, d_model, rng)
        self.attn_drop = Dropout(dropout)
        self.norm1 = BatchNorm(d_model)
        self.mlp = FeedForward(d_model, ffn_hidden, d_model, rng, activation, dropout)
        self.norm2 = BatchNorm(d_model)

    def _split_heads(self, x: Tensor, width: int) -> Tensor:
        rows, n = x.shape[0], x.shape[1]
        return T.swapaxes(T.reshape(x, (rows, n, self.n_heads, width)), 1, 2)

    def forward(self, y: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        if y.ndim != 3 or y.shape[-1] != self.d_model:
            raise ValueError(
                f"expected (rows, patches, {self.d_model}) input, got shape {y.shape}"
            )
        rows, n = y.shape[0], y.shape[1]
        q = self._split_heads(T.matmul(y, self.wq), self.d_k)
        k = self._split_heads(T.matmul(y, self.wk), self.d_k)
        v = self._split_heads(T.matmul(y, self.wv), self.d_model)
        scores = T.mul(T.matmul(q, T.swapaxes(k, -1, -2)), 1.0 / np.sqrt(self.d_k))
        attn = T.softmax(scores, axis=-1)
        attn = self.attn_drop(attn, rng)
        o = T.matmul(attn, v)
        o = T.reshape(T.swapaxes(o, 1, 2), (rows, n, self.n_heads * self.d_model))
        y1 = self.norm1(T.add(y, self.out_proj(o)))
        y2 = self.norm2(T.add(y1, self.mlp(y1, rng)))
        return y2


def attention_block_forward(block: AttentionBlock, y: Tensor,
                            rng: np.random.Generator | None = None) -> Tensor:
    """Run one attention block; accepts (patches, d_model) or batched rows."""
    if y.ndim == 2:
        return T.reshape(block(T.reshape(y, (1,) + y.shape), rng), y.shape)
    return block(y, rng)


class ForecastHead(Module):
    """Flatten the patch axis and map (n_patches * d_model) to the horizon."""

    def __init__(self, n_patches: int, d_model: int, horizon: int,
                 rng: np.random.Generator):
        super().__init__()
        self.lin = Linear(n_patches * d_model, horizon, rng)

    def forward(self, y: Tensor) -> Tensor:
        return self.lin(T.flatten(y, start_axis=1))


def forecast_head(head: ForecastHead, y: Tensor) -> Tensor:
    return head(y)


class FilterFormer(Module):
    """RevIN, patch embedding, alpha spectral + (total - alpha) attention blocks, head.

    With ``filter_placement="pre-embedding"`` the alpha learnable filters act
    directly on the normalized lookback series (length-L gating, no block
    normalization or MLP) and the embedded stack is attention-only.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.config = cfg
        self.revin = RevIN(cfg.revin_affine)
        pre_embedding = cfg.filter_placement == "pre-embedding"
        if pre_embedding:
            self.input_filters = ModuleList(
                SpectralFilter(cfg.lookback, rng) for _ in range(cfg.alpha)
            )
        self.embedding = PatchEmbedding(cfg, rng)
        blocks = []
        if not pre_embedding:
            for _ in range(cfg.alpha):
                blocks.append(SpectralBlock(
                    cfg.d_model, cfg.n_patches, cfg.spectral, rng,
                    cfg.activation, cfg.dropout,
                ))
        for _ in range(cfg.total_layers - cfg.alpha):
            blocks.append(AttentionBlock(
                cfg.d_model, cfg.n_heads, cfg.d_k, cfg.resolved_ffn_hidden(), rng,
                cfg.activation, cfg.dropout,
            ))
        self.blocks = ModuleList(blocks)
        self.head = ForecastHead(cfg.n_patches, cfg.d_model, cfg.horizon, rng)

    def spectral_filters(self) -> list[SpectralFilter]:
        """The learnable filters in stack order (empty for alpha=0)."""
        if self.config.filter_placement == "pre-embedding":
            return list(self.input_filters)
        return [b.filter for b in self.blocks if isinstance(b, SpectralBlock)]

    def forward(self, x_rows: np.ndarray, rng: np.random.Generator | None = None,
                capture: dict | None = None) -> Tensor:
        """Forecast (rows, horizon) from (rows, lookback); each row is one channel.

        When `capture` is a dict, the input and output of the first spectral
        filter are copied into it under "filter_input"/"filter_output", with
        the filtered axis last.
        """
        x_rows = np.asarray(x_rows, dtype=np.float64)
        if x_rows.ndim != 2 or x_rows.shape[-1] != self.config.lookback:
            raise ValueError(
                f"expected (rows, {self.config.lookback}) input, got shape {x_rows.shape}"
            )
        xn, state = self.revin.normalize(x_rows)
        if self.config.filter_placement == "pre-embedding":
            for i, f in enumerate(self.input_filters):
                if capture is not None and i == 0:
                    capture["filter_input"] = np.array(xn.data)
                xn = f.apply(xn)
                if capture is not None and i == 0:
                    capture["filter_output"] = np.array(xn.data)
        cfg = self.config
        gather = _patch_matrix(cfg.lookback, cfg.patch_len, cfg.stride)
        patches = T.reshape(T.matmul(xn, gather),
                            (x_rows.shape[0], cfg.n_patches, cfg.patch_len))
        y = self.embedding(patches)
        for i, block in enumerate(self.blocks):
            if capture is not None and i == 0 and isinstance(block, SpectralBlock):
                y = block(y, rng, capture=capture)
            else:
                y = block(y, rng)
        pred = self.head(y)
        return self.revin.denormalize(pred, state)

    def filter_probe(self, x_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Input and output of the first spectral filter on the given rows.

        Runs in eval mode without recording gradients. Raises ValueError when
        the model has no spectral filters.
        """
        if not self.spectral_filters():
            raise ValueError("model has no spectral filters")
        was_training = self.training
        self.eval()
        try:
            capture: dict = {}
            with no_grad():
                self.forward(x_rows, capture=capture)
            return capture["filter_input"], capture["filter_output"]
        finally:
            self.train(was_training)

    def predict(self, x: np.ndarray, chunk: int = 512) -> np.ndarray:
        """Inference on (..., channels, lookback); returns (..., channels, horizon)."""
        x = np.asarray(x, dtype=np.float64)
        lead = x.shape[:-1]
        rows = x.reshape(-1, x.shape[-1])
        was_training = self.training
        self.eval()
        try:
            outs = []
            with no_grad():
                for start in range(0, rows.shape[0], chunk):
                    outs.append(self.forward(rows[start:start + chunk]).data)
            return np.concatenate(outs, axis=0).reshape(lead + (self.config.horizon,))
        finally:
            self.train(was_training)


def filterformer_forward(model: FilterFormer, x: np.ndarray,
                         rng: np.random.Generator | None = None) -> Tensor:
    """Forward a (channels, lookback) matrix through the model."""
    return model(x, rng)


def count_parameters(model_or_config) -> tuple[int, dict[str, int]]:
    """Total trainable scalars plus a per-component breakdown.

    Given a config, counts analytically; given a model, enumerates the
    actual parameter arrays. The two must agree.
    """
    if isinstance(model_or_config, ModelConfig):
        return _analytic_count(model_or_config)
    model = model_or_config
    breakdown: dict[str, int] = {}
    for name, p in model.named_parameters():
        component = name.split(".")[0]
        breakdown[component] = breakdown.get(component, 0) + p.size
    return sum(breakdown.values()), breakdown


def _mlp_params(d_in: int, hidden: int, d_out: int) -> int:
    return d_in * hidden + hidden + hidden * d_out + d_out


def _analytic_count(cfg: ModelConfig) -> tuple[int, dict[str, int]]:
    d, n = cfg.d_model, cfg.n_patches
    breakdown: dict[str, int] = {}
    if cfg.revin_affine:
        breakdown["revin"] = 2
    if cfg.filter_placement == "pre-embedding":
        if cfg.alpha:
            breakdown["input_filters"] = cfg.alpha * cfg.lookback
        n_spectral = 0
    else:
        n_spectral = cfg.alpha
    breakdown["embedding"] = cfg.patch_len * d + n * d
    blocks = 0
    for _ in range(n_spectral):
        filtered = d if cfg.spectral.filter_axis == "embedding" else n
        block = 2 * d + filtered + 2 * d  # batch-norm affine, filter, instance-norm affine
        if cfg.spectral.use_mlp:
            hidden = cfg.spectral.mlp_hidden if cfg.spectral.mlp_hidden is not None else 2 * d
            block += _mlp_params(d, hidden, d)
        blocks += block
    for _ in range(cfg.total_layers - cfg.alpha):
        block = 2 * d * (cfg.n_heads * cfg.d_k)          # wq, wk
        block += d * (cfg.n_heads * d)                   # wv
        block += cfg.n_heads * d * d + d                 # output projection
        block += 2 * d + 2 * d                           # two batch-norm affines
        block += _mlp_params(d, cfg.resolved_ffn_hidden(), d)
        blocks += block
    if blocks:
        breakdown["blocks"] = blocks
    breakdown["head"] = n * d * cfg.horizon + cfg.horizon
    return sum(breakdown.values()), breakdown
