"""Module system and the shared layers every block is assembled from.

Modules collect :class:`Parameter` attributes by name, recursively through
submodules, which gives the checkpoint format and the optimizer a stable,
deterministic parameter ordering (insertion order of attribute assignment).
Forward passes that involve dropout take an explicit ``rng`` so training
runs are reproducible from a single seed.
"""

from __future__ import annotations

import numpy as np

from .numeric import tensor as T
from .numeric.tensor import Parameter, Tensor


class Module:
    """Base class tracking parameters, buffers, and submodules by name."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        else:
            object.__setattr__(self, name, value)

    def __getattr__(self, name):
        d = object.__getattribute__(self, "__dict__")
        for store in ("_params", "_buffers", "_modules"):
            table = d.get(store)
            if table is not None and name in table:
                return table[name]
        raise AttributeError(f"{type(self).__name__} has no attribute {name!r}")

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        """Track a non-trainable array that is still part of model state."""
        self._buffers[name] = np.asarray(value, dtype=np.float64)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for name, m in self._modules.items():
            yield from m.named_buffers(prefix + name + ".")

    def named_state(self):
        """Parameters then buffers, both in deterministic traversal order."""
        yield from self.named_parameters()
        yield from self.named_buffers()

    def train(self, mode: bool = True):
        object.__setattr__(self, "training", mode)
        for m in self._modules.values():
            m.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    """Ordered submodule container registered under stringified indices."""

    def __init__(self, modules=()):
        super().__init__()
        object.__setattr__(self, "_list", [])
        for m in modules:
            self.append(m)

    def append(self, module: Module) -> None:
        self._modules[str(len(self._list))] = module
        self._list.append(module)

    def __iter__(self):
        return iter(self._list)

    def __len__(self) -> int:
        return len(self._list)

    def __getitem__(self, i: int) -> Module:
        return self._list[i]


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Linear(Module):
    """y = x @ W (+ b), Xavier-uniform weight and zero bias."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 bias: bool = True):
        super().__init__()
        self.weight = Parameter(xavier_uniform(rng, in_features, out_features))
        if bias:
            self.bias = Parameter(np.zeros(out_features))
        else:
            self.bias = None

    def forward(self, x: Tensor) -> Tensor:
        y = T.matmul(x, self.weight)
        if self.bias is not None:
            y = T.add(y, self.bias)
        return y


class Dropout(Module):
    """Inverted dropout; identity in eval mode or at rate zero."""

    def __init__(self, p: float):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {p}")
        self.p = float(p)

    def forward(self, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        if not self.training or self.p == 0.0:
            return x
        if rng is None:
            raise ValueError("dropout requires an rng in training mode")
        mask = (rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return T.mul(x, mask)


class BatchNorm(Module):
    """Per-feature batch normalization pooling every axis but the last.

    Training normalizes with batch statistics (population variance) and
    updates running averages in place; evaluation uses the running averages.
    """

    def __init__(self, num_features: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.num_features = num_features
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(num_features))
        self.beta = Parameter(np.zeros(num_features))
        self.register_buffer("running_mean", np.zeros(num_features))
        self.register_buffer("running_var", np.ones(num_features))

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.num_features:
            raise ValueError(
                f"expected {self.num_features} features on the last axis, got shape {x.shape}"
            )
        if self.training:
            flat = T.reshape(x, (-1, self.num_features))
            mu = T.mean(flat, axis=0)
            v = T.var(flat, axis=0)
            m = self.momentum
            rm = self._buffers["running_mean"]
            rv = self._buffers["running_var"]
            rm *= 1.0 - m
            rm += m * mu.data
            rv *= 1.0 - m
            rv += m * v.data
            xhat = T.div(T.sub(x, mu), T.sqrt(T.add(v, self.eps)))
        else:
            denom = np.sqrt(self._buffers["running_var"] + self.eps)
            xhat = T.div(T.sub(x, self._buffers["running_mean"]), denom)
        return T.add(T.mul(xhat, self.gamma), self.beta)


class InstanceNorm(Module):
    """Per-row zero-mean unit-variance over the last axis, learnable feature affine."""

    def __init__(self, num_features: int, eps: float = 1e-5):
        super().__init__()
        self.num_features = num_features
        self.eps = eps
        self.gamma = Parameter(np.ones(num_features))
        self.beta = Parameter(np.zeros(num_features))

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.num_features:
            raise ValueError(
                f"expected {self.num_features} features on the last axis, got shape {x.shape}"
            )
        mu = T.mean(x, axis=-1, keepdims=True)
        v = T.var(x, axis=-1, keepdims=True)
        xhat = T.div(T.sub(x, mu), T.sqrt(T.add(v, self.eps)))
        return T.add(T.mul(xhat, self.gamma), self.beta)


_ACTIVATIONS = {"gelu": T.gelu, "relu": T.relu}


class FeedForward(Module):
    """Two-layer MLP: linear, activation, dropout, linear."""

    def __init__(self, d_in: int, hidden: int, d_out: int, rng: np.random.Generator,
                 activation: str = "gelu", dropout: float = 0.0):
        super().__init__()
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}, expected one of {sorted(_ACTIVATIONS)}")
        self.lin1 = Linear(d_in, hidden, rng)
        self.lin2 = Linear(hidden, d_out, rng)
        self.drop = Dropout(dropout)
        self.activation = activation

    def forward(self, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        h = _ACTIVATIONS[self.activation](self.lin1(x))
        return self.lin2(self.drop(h, rng))
