"""Tape mechanics and per-op gradient rules against finite differences."""

import numpy as np
import pytest

from conftest import gradcheck
from spectral_forecaster.errors import NumericError
from spectral_forecaster.numeric import Parameter, Tensor, backward, no_grad
from spectral_forecaster.numeric import tensor as T


class TestConstruction:
    def test_wraps_as_float64(self):
        t = Tensor([[1, 2], [3, 4]])
        assert t.data.dtype == np.float64
        assert t.shape == (2, 2)
        assert t.grad is None
        assert not t.requires_grad

    def test_nan_rejected(self):
        with pytest.raises(NumericError):
            Tensor([1.0, np.nan])

    def test_inf_rejected(self):
        with pytest.raises(NumericError):
            Tensor(np.inf)

    def test_parameter_requires_grad(self):
        p = Parameter(np.zeros(3))
        assert p.requires_grad


class TestForward:
    def test_arithmetic_matches_numpy(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((3, 4))
        np.testing.assert_array_equal((Tensor(a) + Tensor(b)).data, a + b)
        np.testing.assert_array_equal((Tensor(a) - 2.0).data, a - 2.0)
        np.testing.assert_array_equal((Tensor(a) * Tensor(b)).data, a * b)
        np.testing.assert_array_equal((Tensor(a) / 4.0).data, a / 4.0)
        np.testing.assert_array_equal((-Tensor(a)).data, -a)

    def test_matmul_matches_numpy(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((2, 3, 4))
        b = rng.standard_normal((4, 5))
        np.testing.assert_allclose((Tensor(a) @ Tensor(b)).data, a @ b)

    def test_matmul_rejects_vectors(self):
        with pytest.raises(ValueError):
            Tensor(np.ones(3)) @ Tensor(np.ones((3, 2)))

    def test_softmax_rows_sum_to_one(self):
        x = np.random.default_rng(2).standard_normal((5, 7)) * 30
        s = T.softmax(Tensor(x), axis=-1)
        np.testing.assert_allclose(s.data.sum(axis=-1), np.ones(5), atol=1e-12)

    def test_var_is_population(self):
        x = np.random.default_rng(3).standard_normal((4, 6))
        v = T.var(Tensor(x), axis=0)
        np.testing.assert_allclose(v.data, x.var(axis=0), atol=1e-12)


class TestBackwardMechanics:
    def test_hand_checked_chain(self):
        x = Parameter(2.0)
        y = Parameter(3.0)
        loss = x * y + x
        backward(loss)
        assert x.grad == pytest.approx(4.0)
        assert y.grad == pytest.approx(2.0)

    def test_scalar_loss_required(self):
        x = Parameter(np.ones(3))
        with pytest.raises(ValueError):
            backward(x + 1.0)

    def test_repeated_backward_rejected(self):
        x = Parameter(1.5)
        loss = x * x
        backward(loss)
        with pytest.raises(ValueError):
            backward(loss)

    def test_constant_loss_backward_is_trivial(self):
        loss = Tensor(3.0)
        backward(loss)
        with pytest.raises(ValueError):
            backward(loss)

    def test_grads_accumulate_across_graphs(self):
        x = Parameter(2.0)
        backward(x * 3.0)
        backward(x * 4.0)
        assert x.grad == pytest.approx(7.0)

    def test_shared_subexpression_accumulates(self):
        x = Parameter(3.0)
        y = x * x
        loss = y + y
        backward(loss)
        assert x.grad == pytest.approx(12.0)

    def test_detach_blocks_gradient(self):
        x = Parameter(2.0)
        loss = x.detach() * x
        backward(loss)
        assert x.grad == pytest.approx(2.0)

    def test_no_grad_builds_no_tape(self):
        x = Parameter(2.0)
        with no_grad():
            y = x * x
        assert y.node is None
        backward(y)
        assert x.grad is None

    def test_broadcast_gradients_have_operand_shape(self):
        a = Parameter(np.ones((3, 1)))
        b = Parameter(np.ones(4))
        loss = T.sum(a + b)
        backward(loss)
        assert a.grad.shape == (3, 1)
        assert b.grad.shape == (4,)
        np.testing.assert_array_equal(a.grad, np.full((3, 1), 4.0))
        np.testing.assert_array_equal(b.grad, np.full(4, 3.0))


class TestGradientsAgainstFiniteDifferences:
    def test_elementwise(self):
        rng = np.random.default_rng(10)
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((3, 4)) + 2.0
        gradcheck(lambda x, y: T.mean(x * y + x / y - y), a, b)

    def test_broadcasting(self):
        rng = np.random.default_rng(11)
        gradcheck(
            lambda x, y: T.sum(x * y),
            rng.standard_normal((2, 3, 1)),
            rng.standard_normal((3, 4)),
        )

    def test_matmul_batched_against_weight(self):
        rng = np.random.default_rng(12)
        gradcheck(
            lambda a, w: T.mean((a @ w) * (a @ w)),
            rng.standard_normal((2, 3, 4)),
            rng.standard_normal((4, 5)),
        )

    def test_matmul_equal_batch(self):
        rng = np.random.default_rng(13)
        gradcheck(
            lambda a, b: T.sum(a @ b),
            rng.standard_normal((2, 3, 4)),
            rng.standard_normal((2, 4, 3)),
        )

    def test_reshaping_ops(self):
        rng = np.random.default_rng(14)
        x = rng.standard_normal((2, 3, 4))
        w = rng.standard_normal(24)
        gradcheck(lambda a, p: T.sum(T.flatten(a) * p), x, w)
        gradcheck(lambda a: T.sum(T.swapaxes(a, 0, 2) * 1.5), x)
        gradcheck(lambda a: T.mean(T.transpose(a) * T.transpose(a)), x)
        gradcheck(lambda a: T.sum(T.reshape(a, (4, 6)) * 0.3), x)

    def test_reductions(self):
        rng = np.random.default_rng(15)
        x = rng.standard_normal((3, 5))
        gradcheck(lambda a: T.sum(T.mean(a, axis=0) * T.mean(a, axis=0)), x)
        gradcheck(lambda a: T.sum(T.var(a, axis=1) * 2.0), x)
        gradcheck(lambda a: T.mean(a) * 3.0, x)
        gradcheck(lambda a: T.sum(T.var(a, axis=0, keepdims=True)), x)

    def test_nonlinearities(self):
        rng = np.random.default_rng(16)
        x = rng.standard_normal((4, 4)) * 2.0
        gradcheck(lambda a: T.mean(T.gelu(a)), x)
        gradcheck(lambda a: T.mean(T.relu(a)), x + 0.05)
        gradcheck(lambda a: T.sum(T.exp(a * 0.3)), x)
        gradcheck(lambda a: T.sum(T.sqrt(a)), np.abs(x) + 1.0)

    def test_softmax(self):
        rng = np.random.default_rng(17)
        x = rng.standard_normal((3, 6))
        w = rng.standard_normal((3, 6))
        gradcheck(lambda a, p: T.sum(T.softmax(a, axis=-1) * p), x, w)

    @pytest.mark.parametrize("n", [1, 2, 3, 8, 12, 16, 21])
    def test_rfft(self, n):
        rng = np.random.default_rng(20 + n)
        x = rng.standard_normal((2, n))
        pr = rng.standard_normal((2, n // 2 + 1))
        pi = rng.standard_normal((2, n // 2 + 1))

        def fn(a, wr, wi):
            re, im = T.rfft(a)
            return T.sum(re * wr) + T.sum(im * wi)

        gradcheck(fn, x, pr, pi)

    @pytest.mark.parametrize("n", [1, 2, 3, 8, 12, 16, 21])
    def test_irfft(self, n):
        rng = np.random.default_rng(40 + n)
        base = rng.standard_normal((2, n))
        re0, im0 = T.rfft(Tensor(base))
        proj = rng.standard_normal((2, n))

        def fn(r, i, p):
            return T.sum(T.irfft(r, i, n) * p)

        gradcheck(fn, re0.data, im0.data, proj)

    @pytest.mark.parametrize("n", [4, 6, 9, 16])
    def test_spectral_round_trip_chain(self, n):
        rng = np.random.default_rng(60 + n)
        x = rng.standard_normal((3, n))
        w = rng.standard_normal(n) * 0.5

        def fn(a, f):
            fr, fi = T.rfft(f)
            ar, ai = T.rfft(a)
            out = T.irfft(ar * fr - ai * fi, ar * fi + ai * fr, n)
            return T.mean(out * out)

        gradcheck(fn, x, w)
