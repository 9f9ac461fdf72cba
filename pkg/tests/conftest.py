"""Shared test oracles: a naive DFT and a central finite-difference gradient.

These deliberately take the dumbest correct route (O(n^2) summation, one
probe per scalar) so they share no code path with the implementations they
check.
"""

from __future__ import annotations

import numpy as np

from spectral_forecaster.numeric.tensor import Parameter, backward, no_grad


def naive_dft(x: np.ndarray) -> np.ndarray:
    """Full complex spectrum by direct summation: X_k = sum_m x_m e^{-2i pi k m / n}."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    k = np.arange(n)
    basis = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return basis @ x.astype(np.complex128)


def naive_idft(spec: np.ndarray) -> np.ndarray:
    """Inverse of :func:`naive_dft`: x_m = (1/n) sum_k X_k e^{+2i pi k m / n}."""
    spec = np.asarray(spec, dtype=np.complex128)
    n = spec.shape[0]
    k = np.arange(n)
    basis = np.exp(2j * np.pi * np.outer(k, k) / n)
    return (basis @ spec) / n


def naive_circular_convolution(w: np.ndarray, y: np.ndarray) -> np.ndarray:
    """(w * y)_m = sum_j w_j y_{(m - j) mod n}, by direct summation."""
    w = np.asarray(w, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = w.shape[0]
    out = np.zeros(n)
    for m in range(n):
        for j in range(n):
            out[m] += w[j] * y[(m - j) % n]
    return out


def fd_grad(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of a scalar function at ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def gradcheck(fn, *arrays, eps: float = 1e-6, rtol: float = 1e-4, atol: float = 1e-6):
    """Check tape gradients of ``fn(*tensors) -> scalar Tensor`` against finite differences."""
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    params = [Parameter(a.copy()) for a in arrays]
    loss = fn(*params)
    backward(loss)
    for i, p in enumerate(params):
        def probe(x, _i=i):
            fresh = list(arrays)
            fresh[_i] = x
            with no_grad():
                return fn(*[Parameter(a) for a in fresh]).item()

        numeric = fd_grad(probe, arrays[i], eps=eps)
        assert p.grad is not None, f"no gradient reached input {i}"
        np.testing.assert_allclose(p.grad, numeric, rtol=rtol, atol=atol)
