"""Autodiff engine: forward values against literal oracles, gradients
against central finite differences, and strict shape behaviour."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import conv1d_loops, conv2d_loops, gradcheck
from preictalsynth import tensor as T
from preictalsynth.errors import ShapeError
from preictalsynth.tensor import Tensor


def rand(shape, seed=0, scale=1.0):
    return np.random.default_rng(seed).normal(size=shape) * scale


class TestForwardValues:
    def test_conv1d_valid_example(self):
        x = Tensor([[1.0, 2.0, 3.0]])
        k = Tensor([[[1.0, 1.0]]])
        out = T.conv1d(x, k, "valid")
        np.testing.assert_array_equal(out.data, [[3.0, 5.0]])

    def test_conv1d_same_keeps_length(self):
        x = Tensor(rand((1, 2000), seed=1))
        k = Tensor(rand((64, 1, 5), seed=2, scale=0.1))
        out = T.conv1d(x, k, "same")
        assert out.data.shape == (64, 2000)

    @pytest.mark.parametrize("padding", ["same", "valid"])
    def test_conv1d_matches_loop_oracle(self, padding):
        x = rand((3, 17), seed=3)
        k = rand((4, 3, 5), seed=4)
        out = T.conv1d(Tensor(x), Tensor(k), padding)
        np.testing.assert_allclose(out.data, conv1d_loops(x, k, padding), atol=1e-12)

    @pytest.mark.parametrize("padding", ["same", "valid"])
    def test_conv2d_matches_loop_oracle(self, padding):
        x = rand((2, 9, 11), seed=5)
        k = rand((3, 2, 3, 3), seed=6)
        out = T.conv2d(Tensor(x), Tensor(k), padding)
        np.testing.assert_allclose(out.data, conv2d_loops(x, k, padding), atol=1e-12)

    def test_conv1d_batched_agrees_with_per_sample(self):
        x = rand((4, 3, 12), seed=7)
        k = rand((5, 3, 5), seed=8)
        batched = T.conv1d(Tensor(x), Tensor(k), "same").data
        for b in range(4):
            single = T.conv1d(Tensor(x[b]), Tensor(k), "same").data
            np.testing.assert_allclose(batched[b], single, atol=1e-12)

    def test_upsample_nearest_example(self):
        out = T.upsample1d(Tensor([[1.0, 2.0]]), 2, "nearest")
        np.testing.assert_array_equal(out.data, [[1.0, 1.0, 2.0, 2.0]])

    def test_upsample_linear_example(self):
        out = T.upsample1d(Tensor([[0.0, 4.0]]), 2, "linear")
        np.testing.assert_array_equal(out.data, [[0.0, 2.0, 4.0, 4.0]])

    def test_maxpool_example(self):
        out = T.maxpool1d(Tensor([[1.0, 3.0, 2.0, 2.0]]), 2)
        np.testing.assert_array_equal(out.data, [[3.0, 2.0]])

    def test_maxpool_drops_partial_window(self):
        out = T.maxpool1d(Tensor([[1.0, 3.0, 9.0]]), 2)
        np.testing.assert_array_equal(out.data, [[3.0]])

    def test_leaky_relu_values(self):
        out = T.leaky_relu(Tensor([-1.0, 0.0, 2.0]), 0.2)
        np.testing.assert_allclose(out.data, [-0.2, 0.0, 2.0])

    def test_dense_matches_matmul(self):
        x, w, b = rand(7, seed=9), rand((4, 7), seed=10), rand(4, seed=11)
        out = T.dense(Tensor(x), Tensor(w), Tensor(b))
        np.testing.assert_allclose(out.data, w @ x + b, atol=1e-12)

    def test_clamp_and_log(self):
        out = T.log(T.clamp(Tensor([0.5, 2.0]), 1e-7, 1.0))
        np.testing.assert_allclose(out.data, [np.log(0.5), 0.0])


class TestShapes:
    def test_conv1d_channel_mismatch_reports_both_shapes(self):
        x = Tensor(rand((3, 10)))
        k = Tensor(rand((2, 4, 3)))
        with pytest.raises(ShapeError) as exc:
            T.conv1d(x, k, "valid")
        assert "(3, 10)" in str(exc.value) and "(2, 4, 3)" in str(exc.value)

    def test_conv1d_kernel_longer_than_input(self):
        with pytest.raises(ShapeError):
            T.conv1d(Tensor(rand((1, 3))), Tensor(rand((1, 1, 5))), "valid")

    def test_add_rejects_broadcast(self):
        with pytest.raises(ShapeError):
            T.add(Tensor(rand((2, 3))), Tensor(rand(3)))

    def test_maxpool_too_short(self):
        with pytest.raises(ShapeError):
            T.maxpool1d(Tensor([[1.0]]), 2)

    def test_upsample_zero_factor(self):
        with pytest.raises(ValueError):
            T.upsample1d(Tensor([[1.0, 2.0]]), 0)

    def test_leaky_relu_slope_range(self):
        with pytest.raises(ValueError):
            T.leaky_relu(Tensor([1.0]), 1.5)

    def test_backward_requires_scalar(self):
        t = Tensor(rand(3), requires_grad=True)
        with pytest.raises(ShapeError):
            T.backward(T.neg(t))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            Tensor([1.0, np.nan])

    @given(st.integers(2, 6), st.integers(2, 6), st.integers(6, 30))
    @settings(max_examples=25, deadline=None)
    def test_conv_shapes_total(self, cin, cout, L):
        """Output shape always matches the documented formula."""
        x = Tensor(rand((cin, L), seed=L))
        k = Tensor(rand((cout, cin, 5), seed=cin))
        assert T.conv1d(x, k, "same").data.shape == (cout, L)
        if L >= 5:
            assert T.conv1d(x, k, "valid").data.shape == (cout, L - 4)

    @given(st.integers(2, 40), st.integers(1, 4))
    @settings(max_examples=25, deadline=None)
    def test_upsample_then_shape(self, L, f):
        x = Tensor(rand((2, L), seed=L))
        assert T.upsample1d(x, f, "nearest").data.shape == (2, L * f)
        assert T.upsample1d(x, f, "linear").data.shape == (2, L * f)


class TestGradients:
    def test_maxpool_gradient_is_one_hot_per_window(self):
        x = Tensor([[1.0, 3.0, 2.0, 2.0]], requires_grad=True)
        T.backward(T.sum_all(T.maxpool1d(x, 2)))
        np.testing.assert_array_equal(x.grad, [[0.0, 1.0, 1.0, 0.0]])

    def test_maxpool_tie_routes_to_lowest_index(self):
        x = Tensor([[5.0, 5.0]], requires_grad=True)
        T.backward(T.sum_all(T.maxpool1d(x, 2)))
        np.testing.assert_array_equal(x.grad, [[1.0, 0.0]])

    def test_grad_accumulates_without_reset(self):
        x = Tensor(rand(4), requires_grad=True)
        loss = lambda: T.sum_all(T.mul(x, x))
        T.backward(loss())
        first = x.grad.copy()
        T.backward(loss())
        np.testing.assert_allclose(x.grad, 2 * first)

    def test_detach_blocks_gradient(self):
        x = Tensor(rand(4), requires_grad=True)
        T.backward(T.sum_all(T.mul(x.detach(), x.detach())))
        assert x.grad is None

    @pytest.mark.parametrize("padding", ["same", "valid"])
    def test_conv1d_gradcheck(self, padding):
        x = Tensor(rand((2, 11), seed=20), requires_grad=True)
        k = Tensor(rand((3, 2, 5), seed=21), requires_grad=True)
        b = Tensor(rand(3, seed=22), requires_grad=True)
        gradcheck(lambda: T.mean_all(T.conv1d(x, k, padding, bias=b)), [x, k, b])

    def test_conv1d_batched_gradcheck(self):
        x = Tensor(rand((3, 2, 9), seed=23), requires_grad=True)
        k = Tensor(rand((2, 2, 3), seed=24), requires_grad=True)
        gradcheck(lambda: T.mean_all(T.tanh(T.conv1d(x, k, "same"))), [x, k])

    def test_conv2d_gradcheck(self):
        x = Tensor(rand((2, 6, 7), seed=25), requires_grad=True)
        k = Tensor(rand((3, 2, 3, 3), seed=26), requires_grad=True)
        b = Tensor(rand(3, seed=27), requires_grad=True)
        gradcheck(lambda: T.mean_all(T.conv2d(x, k, "same", bias=b)), [x, k, b])

    def test_dense_gradcheck(self):
        x = Tensor(rand((4, 6), seed=28), requires_grad=True)
        w = Tensor(rand((3, 6), seed=29), requires_grad=True)
        b = Tensor(rand(3, seed=30), requires_grad=True)
        gradcheck(lambda: T.mean_all(T.sigmoid(T.dense(x, w, b))), [x, w, b])

    @pytest.mark.parametrize("method", ["nearest", "linear"])
    def test_upsample_gradcheck(self, method):
        x = Tensor(rand((2, 7), seed=31), requires_grad=True)
        gradcheck(lambda: T.mean_all(T.upsample1d(x, 3, method)), [x])

    def test_upsample_linear_adjoint_identity(self):
        """<A x, y> == <x, A^T y> for the interpolation map and its vjp."""
        rng = np.random.default_rng(32)
        x = Tensor(rng.normal(size=(1, 9)), requires_grad=True)
        y = rng.normal(size=(1, 27))
        out = T.upsample1d(x, 3, "linear")
        T.backward(T.sum_all(T.mul(out, Tensor(y))))
        lhs = float((out.data * y).sum())
        rhs = float((x.data * x.grad).sum())
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_maxpool2d_gradcheck(self):
        x = Tensor(rand((2, 6, 8), seed=33), requires_grad=True)
        gradcheck(lambda: T.mean_all(T.maxpool2d(x, 2)), [x])

    def test_pointwise_gradchecks(self):
        x = Tensor(rand(9, seed=34), requires_grad=True)
        y = Tensor(rand(9, seed=35), requires_grad=True)
        gradcheck(lambda: T.mean_all(T.mul(T.tanh(x), T.sigmoid(y))), [x, y])
        gradcheck(lambda: T.mean_all(T.leaky_relu(T.sub(x, y), 0.2)), [x, y])
        z = Tensor(np.abs(rand(6, seed=36)) + 0.5, requires_grad=True)
        gradcheck(lambda: T.mean_all(T.log(z)), [z])

    def test_slice_concat_reshape_gradcheck(self):
        x = Tensor(rand((3, 8), seed=37), requires_grad=True)
        def loss():
            a = T.slice_axis(x, 1, 0, 4)
            b = T.slice_axis(x, 1, 4, 8)
            return T.mean_all(T.mul(T.reshape(T.concat([a, b], axis=0), (6, 4)),
                                    T.reshape(T.concat([b, a], axis=0), (6, 4))))
        gradcheck(loss, [x])

    def test_disconnected_parameter_gets_zero_grad(self):
        from preictalsynth.params import ParamStore
        store = ParamStore()
        used = store.add("used", rand(3, seed=38))
        unused = store.add("unused", rand(3, seed=39))
        T.backward(T.sum_all(T.mul(used, used)), store)
        assert unused.grad is not None
        np.testing.assert_array_equal(unused.grad, np.zeros(3))

    def test_shared_node_gradient(self):
        """A tensor used twice receives the sum of both paths."""
        x = Tensor(rand(5, seed=40), requires_grad=True)
        gradcheck(lambda: T.mean_all(T.add(T.mul(x, x), T.scale(x, 3.0))), [x])


class TestNoGrad:
    def test_no_grad_builds_no_graph(self):
        x = Tensor(rand(4), requires_grad=True)
        with T.no_grad():
            out = T.tanh(x)
        assert not out.requires_grad and out._parents == ()

    def test_no_grad_restores(self):
        x = Tensor(rand(4), requires_grad=True)
        with T.no_grad():
            pass
        assert T.tanh(x).requires_grad
