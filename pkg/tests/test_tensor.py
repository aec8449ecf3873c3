import numpy as np
import pytest

import svlab.tensor as T
from svlab.errors import (ContractError, DimensionError, DomainError,
                          NumericsError)
from svlab.rng import Rng

from conftest import central_difference, rel_err


def scalar_loss(node):
    return T.mean_all(T.square(node))


class TestTensorBasics:
    def test_shape_and_flat_data(self):
        t = T.Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert t.shape == (2, 2)
        assert t.size == 4
        assert t.data.flags.writeable is False

    def test_item_requires_scalar(self):
        with pytest.raises(ContractError):
            T.Tensor([1.0, 2.0]).item()

    def test_debug_nan_raises(self):
        with np.errstate(over="ignore"), pytest.raises(NumericsError):
            T.exp(T.Tensor([1e6]))


class TestElementwise:
    def test_tanh_zero(self):
        assert T.tanh(T.Tensor([0.0])).data[0] == 0.0

    def test_square_example(self):
        out = T.square(T.Tensor([-2.0, 3.0]))
        assert np.array_equal(out.data, [4.0, 9.0])

    def test_add_shape_mismatch(self):
        with pytest.raises(DimensionError):
            T.add(T.Tensor([1.0]), T.Tensor([1.0, 2.0]))

    def test_log_domain_error(self):
        with pytest.raises(DomainError):
            T.log(T.Tensor([1.0, -1.0]))

    def test_tanh_grad_matches_fd(self):
        x = T.param([0.5])
        T.backward(T.sum_all(T.tanh(x)))
        fd = central_difference(lambda a: np.tanh(a).sum(), np.array([0.5]))
        assert rel_err(x.grad.data, fd) < 1e-8

    @pytest.mark.parametrize("op,np_op", [
        (T.tanh, np.tanh),
        (T.sigmoid, lambda a: 1 / (1 + np.exp(-a))),
        (T.exp, np.exp),
        (T.square, np.square),
    ])
    def test_unary_grads_fd(self, op, np_op):
        rng = Rng(11)
        x0 = rng.uniform(-1.5, 1.5, size=(4, 5))
        x = T.param(x0)
        T.backward(scalar_loss(op(x)))
        fd = central_difference(lambda a: np.mean(np.square(np_op(a))), x0)
        assert rel_err(x._grad, fd) < 1e-6


class TestMatmul:
    def test_identity(self):
        m = T.Tensor(Rng(0).uniform(size=(3, 3)))
        out = T.matmul(T.Tensor(np.eye(3)), m)
        assert np.allclose(out.data, m.data)

    def test_hand_example(self):
        out = T.matmul(T.Tensor([[1.0, 2.0], [3.0, 4.0]]),
                       T.Tensor([[1.0], [1.0]]))
        assert np.array_equal(out.data, [[3.0], [7.0]])

    def test_shape_error(self):
        with pytest.raises(DimensionError):
            T.matmul(T.Tensor(np.zeros((2, 3))), T.Tensor(np.zeros((2, 3))))

    def test_grads_vs_fd(self):
        rng = Rng(5)
        a0 = rng.uniform(-1, 1, size=(5, 7))
        b0 = rng.uniform(-1, 1, size=(7, 3))
        a = T.param(a0)
        b = T.param(b0)
        T.backward(scalar_loss(T.matmul(a, b)))
        fd_a = central_difference(
            lambda m: np.mean(np.square(m @ b0)), a0)
        fd_b = central_difference(
            lambda m: np.mean(np.square(a0 @ m)), b0)
        assert rel_err(a._grad, fd_a) < 1e-6
        assert rel_err(b._grad, fd_b) < 1e-6


class TestBackwardContract:
    def test_square_at_three(self):
        x = T.param([3.0])
        T.backward(T.sum_all(T.square(x)))
        assert abs(x.grad.data[0] - 6.0) < 1e-12

    def test_non_scalar_root_rejected(self):
        x = T.param([1.0, 2.0])
        with pytest.raises(ContractError):
            T.backward(T.square(x))

    def test_constant_gets_zero_grad(self):
        x = T.param([2.0])
        c = T.constant([5.0])
        T.backward(T.sum_all(T.mul(x, c)))
        assert np.array_equal(c.grad.data, [0.0])
        assert np.array_equal(x.grad.data, [5.0])

    def test_grads_accumulate_without_reset(self):
        x = T.param([3.0])
        for _ in range(2):
            T.backward(T.sum_all(T.square(x)))
        assert abs(x.grad.data[0] - 12.0) < 1e-12
        x.zero_grad()
        T.backward(T.sum_all(T.square(x)))
        assert abs(x.grad.data[0] - 6.0) < 1e-12

    def test_mlp_grad_vs_fd(self):
        rng = Rng(3)
        w0 = rng.uniform(-1, 1, size=(4, 6))
        x0 = rng.uniform(-1, 1, size=(2, 4))
        w = T.param(w0)
        T.backward(T.sum_all(T.tanh(T.matmul(T.Tensor(x0), w))))
        fd = central_difference(lambda m: np.tanh(x0 @ m).sum(), w0)
        assert rel_err(w._grad, fd) < 1e-6


class TestShapeOps:
    def test_slice_concat_roundtrip_grads(self):
        x0 = Rng(8).uniform(-1, 1, size=(3, 6))
        x = T.param(x0)
        left = T.slice_cols(x, 0, 3)
        right = T.slice_cols(x, 3, 6)
        T.backward(scalar_loss(T.concat_cols(right, left)))
        fd = central_difference(
            lambda a: np.mean(np.square(np.concatenate(
                [a[:, 3:], a[:, :3]], axis=1))), x0)
        assert rel_err(x._grad, fd) < 1e-6

    def test_add_bias_grad(self):
        x0 = Rng(9).uniform(-1, 1, size=(4, 3))
        b0 = Rng(10).uniform(-1, 1, size=3)
        b = T.param(b0)
        T.backward(scalar_loss(T.add_bias(T.Tensor(x0), b)))
        fd = central_difference(lambda a: np.mean(np.square(x0 + a)), b0)
        assert rel_err(b._grad, fd) < 1e-6

    def test_clamp_gradient_mask(self):
        x = T.param([-2.0, 0.5, 2.0])
        T.backward(T.sum_all(T.clamp(x, -1.0, 1.0)))
        assert np.array_equal(x.grad.data, [0.0, 1.0, 0.0])


class TestConv2d:
    def test_identity_kernel(self):
        x = T.Tensor(Rng(1).uniform(size=(1, 6, 6)))
        k = T.Tensor(np.ones((1, 1, 1, 1)))
        assert np.allclose(T.conv2d(x, k, 1, 0).data, x.data)

    def test_shape_formula(self):
        out = T.conv2d(T.Tensor(np.zeros((1, 8, 8))),
                       T.Tensor(np.zeros((4, 1, 3, 3))), 2, 1)
        assert out.shape == (4, 4, 4)

    def test_non_positive_output_rejected(self):
        with pytest.raises(DimensionError):
            T.conv2d(T.Tensor(np.zeros((1, 2, 2))),
                     T.Tensor(np.zeros((1, 1, 5, 5))), 1, 0)

    def test_matches_naive_loops(self):
        rng = Rng(21)
        x0 = rng.uniform(-1, 1, size=(2, 7, 9))
        k0 = rng.uniform(-1, 1, size=(3, 2, 3, 3))
        stride, pad = 2, 1
        out = T.conv2d(T.Tensor(x0), T.Tensor(k0), stride, pad).data
        ref = naive_conv2d(x0, k0, stride, pad)
        assert np.max(np.abs(out - ref)) < 1e-12

    def test_grads_vs_fd(self):
        rng = Rng(22)
        x0 = rng.uniform(-1, 1, size=(2, 2, 5, 5))
        k0 = rng.uniform(-1, 1, size=(3, 2, 3, 3))
        x = T.param(x0)
        k = T.param(k0)
        T.backward(scalar_loss(T.conv2d(x, k, 2, 1)))
        fd_x = central_difference(
            lambda a: np.mean(np.square(np.stack(
                [naive_conv2d(a[i], k0, 2, 1) for i in range(2)]))), x0)
        fd_k = central_difference(
            lambda m: np.mean(np.square(np.stack(
                [naive_conv2d(x0[i], m, 2, 1) for i in range(2)]))), k0)
        assert rel_err(x._grad, fd_x) < 1e-6
        assert rel_err(k._grad, fd_k) < 1e-6


class TestConvTranspose:
    def test_shape_inverse_of_conv(self):
        out = T.conv2d_transpose(T.Tensor(np.zeros((8, 4, 4))),
                                 T.Tensor(np.zeros((8, 3, 3, 3))), 2, 1, 1)
        assert out.shape == (3, 8, 8)

    def test_adjoint_identity(self):
        # <conv2d(x, k), y> == <x, conv2d_transpose(y, k)>: the same weight
        # array read under the transposed-layout convention is the adjoint
        rng = Rng(23)
        x = rng.uniform(-1, 1, size=(1, 2, 6, 6))
        k = rng.uniform(-1, 1, size=(3, 2, 3, 3))
        y = rng.uniform(-1, 1, size=(1, 3, 3, 3))
        cx = T.conv2d(T.Tensor(x), T.Tensor(k), 2, 1).data
        cty = T.conv2d_transpose(T.Tensor(y), T.Tensor(k), 2, 1, 1).data
        assert cty.shape == x.shape
        assert abs(float((cx * y).sum()) - float((x * cty).sum())) < 1e-9

    def test_grads_vs_fd(self):
        rng = Rng(24)
        x0 = rng.uniform(-1, 1, size=(2, 3, 4, 4))
        k0 = rng.uniform(-1, 1, size=(3, 2, 3, 3))
        x = T.param(x0)
        k = T.param(k0)
        T.backward(scalar_loss(T.conv2d_transpose(x, k, 2, 1, 1)))

        def forward(vx, vk):
            out = T.conv2d_transpose(T.Tensor(vx), T.Tensor(vk), 2, 1, 1)
            return float(np.mean(np.square(out.data)))

        fd_x = central_difference(lambda a: forward(a, k0), x0)
        fd_k = central_difference(lambda m: forward(x0, m), k0)
        assert rel_err(x._grad, fd_x) < 1e-6
        assert rel_err(k._grad, fd_k) < 1e-6


class TestInputGradient:
    def test_linear_net_returns_weights(self):
        w = T.param([[1.5], [-2.0], [0.5]])
        b = T.param([0.0])
        g = T.input_gradient([(w, b)], T.Tensor([0.3, 0.4, 0.5]))
        assert np.allclose(g.value.data, [1.5, -2.0, 0.5])

    def test_matches_fd_of_net(self):
        rng = Rng(31)
        layers = _random_tanh_mlp(rng, [4, 8, 6, 1])
        x0 = rng.uniform(-1, 1, size=(3, 4))
        g = T.input_gradient(layers, T.Tensor(x0)).value.data
        fd = central_difference(lambda a: _mlp_np(layers, a).sum(), x0)
        assert rel_err(g, fd) < 1e-6

    def test_double_backprop_matches_fd(self):
        # d/dW of sum(input_gradient) via graph vs finite differences
        rng = Rng(32)
        layers = _random_tanh_mlp(rng, [3, 5, 1])
        x0 = rng.uniform(-1, 1, size=(2, 3))
        g = T.input_gradient(layers, T.Tensor(x0))
        T.backward(T.sum_all(g))
        w0 = layers[0][0]
        analytic = w0._grad.copy()

        def f(wmat):
            saved = w0.value
            w0.value = T.Tensor(wmat)
            try:
                out = T.input_gradient(layers, T.Tensor(x0))
                return float(out.value.data.sum())
            finally:
                w0.value = saved

        fd = central_difference(f, w0.value.data.copy())
        assert rel_err(analytic, fd) < 1e-5

    def test_rejects_non_scalar_net(self):
        rng = Rng(33)
        layers = _random_tanh_mlp(rng, [3, 4, 2])
        with pytest.raises(ContractError):
            T.input_gradient(layers, T.Tensor(np.zeros(3)))


def _random_tanh_mlp(rng, widths):
    layers = []
    for i in range(len(widths) - 1):
        w = T.param(rng.uniform(-0.8, 0.8, size=(widths[i], widths[i + 1])))
        b = T.param(rng.uniform(-0.1, 0.1, size=widths[i + 1]))
        layers.append((w, b))
    return layers


def _mlp_np(layers, x):
    h = x
    for i, (w, b) in enumerate(layers):
        h = h @ w.value.data + b.value.data
        if i != len(layers) - 1:
            h = np.tanh(h)
    return h


def naive_conv2d(x, k, stride, pad):
    """Direct-sum reference convolution for [C,H,W] x [Co,Ci,kh,kw]."""
    ci, h, w = x.shape
    co, _, kh, kw = k.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((co, ho, wo))
    for o in range(co):
        for i in range(ho):
            for j in range(wo):
                acc = 0.0
                for c in range(ci):
                    for a in range(kh):
                        for b_ in range(kw):
                            acc += (xp[c, i * stride + a, j * stride + b_]
                                    * k[o, c, a, b_])
                out[o, i, j] = acc
    return out
