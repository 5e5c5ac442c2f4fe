import itertools

import numpy as np
import pytest

from medpatch.core import (ParamStore, Tape, Tensor, activation, backward, clip_grad_norm, conv_nd, dense, fft_nd,
                           ifft_nd, normalize, ops, pool_nd, set_default_dtype, sgd_step, transpose_conv_nd)
from medpatch.core.gradcheck import check_gradients
from medpatch.errors import ConfigError, ContractError, DimensionError

GRAD_TOLERANCE = 1e-4


def naive_correlate_2d(x, w):
    """Brute-force single-channel valid cross-correlation."""
    kh, kw = w.shape
    out = np.zeros((x.shape[0] - kh + 1, x.shape[1] - kw + 1))
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            for a in range(kh):
                for b in range(kw):
                    out[i, j] += x[i + a, j + b] * w[a, b]
    return out


def naive_dft(x):
    n = len(x)
    k = np.arange(n)
    return np.array([np.sum(x * np.exp(-2j * np.pi * f * k / n)) for f in range(n)])


class TestConv:
    def test_unit_kernel_is_identity(self, rng):
        x = rng.standard_normal((2, 3, 5, 6))
        w = np.zeros((3, 3, 1, 1))
        for c in range(3):
            w[c, c] = 1.0
        out = conv_nd(x, w, np.zeros(3))
        np.testing.assert_allclose(out.data, x)

    def test_window_sums_on_ramp(self):
        ramp = np.arange(16, dtype=np.float64).reshape(4, 4)
        out = conv_nd(ramp[None, None], np.ones((1, 1, 3, 3)))
        np.testing.assert_allclose(out.data[0, 0], naive_correlate_2d(ramp, np.ones((3, 3))))

    def test_output_extent_with_stride_and_padding(self, rng):
        x = rng.standard_normal((1, 2, 9, 7))
        out = conv_nd(x, rng.standard_normal((4, 2, 3, 3)), stride=2, padding=1)
        assert out.shape == (1, 4, (9 + 2 - 3) // 2 + 1, (7 + 2 - 3) // 2 + 1)

    def test_3d(self, rng):
        out = conv_nd(rng.standard_normal((1, 1, 4, 5, 6)), rng.standard_normal((2, 1, 3, 3, 3)), padding=1)
        assert out.shape == (1, 2, 4, 5, 6)

    def test_channel_mismatch_names_axis(self, rng):
        with pytest.raises(DimensionError, match="axis 1"):
            conv_nd(rng.standard_normal((1, 2, 5, 5)), rng.standard_normal((1, 3, 3, 3)))

    def test_kernel_larger_than_input(self, rng):
        with pytest.raises(DimensionError, match="axis 3"):
            conv_nd(rng.standard_normal((1, 1, 5, 2)), rng.standard_normal((1, 1, 3, 3)))

    def test_gradients(self, rng):
        x = Tensor(rng.standard_normal((2, 2, 5, 5)))
        w = Tensor(rng.standard_normal((3, 2, 3, 3)))
        b = Tensor(rng.standard_normal(3))
        assert check_gradients(lambda: ops.sum(conv_nd(x, w, b, stride=2, padding=1)), [x, w, b]) < GRAD_TOLERANCE


class TestTransposeConv:
    def test_unit_kernel_is_identity(self, rng):
        x = rng.standard_normal((1, 2, 4, 4))
        w = np.zeros((2, 2, 1, 1))
        w[0, 0] = w[1, 1] = 1.0
        np.testing.assert_allclose(transpose_conv_nd(x, w).data, x)

    def test_adjoint_of_conv(self, rng):
        x = rng.standard_normal((2, 3, 7, 7))
        w = rng.standard_normal((4, 3, 3, 3))
        y = rng.standard_normal((2, 4, 3, 3))
        lhs = np.sum(conv_nd(x, w, stride=2).data * y)
        rhs = np.sum(x * transpose_conv_nd(y, w, stride=2).data)
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))

    def test_stride_two_scatter(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        w = np.array([[0.5, 1.0], [2.0, -1.0]])
        expected = np.zeros((4, 4))
        for i, j in itertools.product(range(2), range(2)):
            expected[2 * i:2 * i + 2, 2 * j:2 * j + 2] += x[i, j] * w
        out = transpose_conv_nd(x[None, None], w[None, None], stride=2)
        assert out.shape == (1, 1, 4, 4)
        np.testing.assert_allclose(out.data[0, 0], expected)

    def test_gradients(self, rng):
        x = Tensor(rng.standard_normal((1, 2, 3, 3)))
        w = Tensor(rng.standard_normal((2, 3, 2, 2)))
        assert check_gradients(lambda: ops.sum(transpose_conv_nd(x, w, stride=2) ** 2), [x, w]) < GRAD_TOLERANCE


class TestPool:
    def test_max(self):
        out = pool_nd(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]), "max", 2, 2)
        assert out.data.reshape(-1).tolist() == [4.0]

    def test_global_average_of_constant(self):
        out = pool_nd(np.full((2, 3, 4, 4), 2.5), "global_average")
        assert out.shape == (2, 3, 1, 1)
        np.testing.assert_allclose(out.data, 2.5)

    def test_average(self):
        x = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
        out = pool_nd(x, "average", 2, 2)
        np.testing.assert_allclose(out.data[0, 0], [[2.5, 4.5], [10.5, 12.5]])

    def test_window_larger_than_input(self):
        with pytest.raises(DimensionError):
            pool_nd(np.zeros((1, 1, 3, 1)), "max", 2)

    def test_max_gradient_routes_to_argmax(self):
        x = Tensor(np.array([[[[1.0, 5.0], [3.0, 4.0]]]]))
        x.requires_grad = True
        with Tape() as tape:
            loss = ops.sum(pool_nd(x, "max", 2, 2))
        backward(tape, loss)
        np.testing.assert_array_equal(x.grad[0, 0], [[0.0, 1.0], [0.0, 0.0]])

    @pytest.mark.parametrize("kind", ["max", "average", "global_average"])
    def test_gradients(self, rng, kind):
        x = Tensor(rng.standard_normal((2, 2, 4, 6)))
        assert check_gradients(lambda: ops.sum(pool_nd(x, kind, 2, 2) ** 2), [x]) < GRAD_TOLERANCE


class TestActivation:
    def test_relu(self):
        assert activation(np.array([-2.0, 3.0]), "relu").data.tolist() == [0.0, 3.0]

    def test_softmax_of_constant(self):
        out = activation(np.full((1, 5), 3.0), "softmax", axis=1)
        np.testing.assert_allclose(out.data, 0.2)

    def test_softmax_sums_to_one(self, rng):
        out = activation(100 * rng.standard_normal((3, 4, 5, 5)), "softmax", axis=1)
        assert np.all(np.abs(out.data.sum(axis=1) - 1.0) < 1e-9)

    def test_sigmoid_range_and_derivative(self, rng):
        z = rng.standard_normal(10)
        x = Tensor(z)
        x.requires_grad = True
        with Tape() as tape:
            loss = ops.sum(activation(x, "sigmoid"))
        backward(tape, loss)
        s = 1.0 / (1.0 + np.exp(-z))
        np.testing.assert_allclose(x.grad, s * (1 - s))
        y = activation(np.array([-40.0, 0.0, 40.0]), "sigmoid").data
        assert np.all((y > 0) & (y < 1))

    @pytest.mark.parametrize("kind", ["relu", "leaky_relu", "sigmoid", "softmax"])
    def test_gradients(self, rng, kind):
        x = Tensor(rng.standard_normal((2, 3, 4)))
        weights = rng.standard_normal((2, 3, 4))
        assert check_gradients(lambda: ops.sum(activation(x, kind) * weights), [x]) < GRAD_TOLERANCE

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            activation(np.zeros(2), "tanhh")


class TestDense:
    def test_identity(self, rng):
        x = rng.standard_normal((3, 4))
        np.testing.assert_allclose(dense(x, np.eye(4), np.zeros(4)).data, x)

    def test_hand_product(self):
        x = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        w = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, -1.0]])
        np.testing.assert_allclose(dense(x, w).data, [[4.0, -1.0], [10.0, -1.0]])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            dense(np.zeros((2, 3)), np.zeros((4, 2)))

    def test_gradients(self, rng):
        x, w, b = (Tensor(rng.standard_normal(s)) for s in [(3, 4), (4, 2), (2,)])
        assert check_gradients(lambda: ops.sum(dense(x, w, b) ** 2), [x, w, b]) < GRAD_TOLERANCE


class TestNormalize:
    def test_zero_mean_unit_variance(self, rng):
        x = 3 + 2 * rng.standard_normal((2, 3, 8, 8))
        out = normalize(x, np.ones(3), np.zeros(3), (2, 3), eps=0.0).data
        np.testing.assert_allclose(out.mean(axis=(2, 3)), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.std(axis=(2, 3)), 1.0, atol=1e-9)

    @pytest.mark.parametrize("axes", [(2, 3), (0, 2, 3)])
    def test_gradients(self, rng, axes):
        x = Tensor(rng.standard_normal((2, 3, 3, 3)))
        gamma, beta = Tensor(rng.standard_normal(3)), Tensor(rng.standard_normal(3))
        weights = rng.standard_normal((2, 3, 3, 3))
        fn = lambda: ops.sum(normalize(x, gamma, beta, axes) * weights)  # noqa: E731
        assert check_gradients(fn, [x, gamma, beta]) < GRAD_TOLERANCE


class TestOps:
    def test_broadcast_gradient(self, rng):
        a = Tensor(rng.standard_normal((3, 4)))
        b = Tensor(rng.standard_normal((1, 4)))
        assert check_gradients(lambda: ops.sum((a * b + b) / (1.5 + a * a)), [a, b]) < GRAD_TOLERANCE

    def test_concat_and_upsample_gradients(self, rng):
        a = Tensor(rng.standard_normal((1, 2, 2, 2)))
        b = Tensor(rng.standard_normal((1, 1, 4, 4)))
        weights = rng.standard_normal((1, 3, 4, 4))
        fn = lambda: ops.sum(ops.concat([ops.upsample_nearest(a, (2, 2)), b], axis=1) * weights)  # noqa: E731
        assert check_gradients(fn, [a, b]) < GRAD_TOLERANCE

    def test_log_exp_clip(self, rng):
        x = Tensor(rng.uniform(0.5, 2.0, size=6))
        assert check_gradients(lambda: ops.sum(ops.log(ops.exp(x) + ops.clip(x, 0.0, 1.0))), [x]) < GRAD_TOLERANCE


class TestBackward:
    def test_sum_gives_ones(self, rng):
        x = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
        with Tape() as tape:
            loss = ops.sum(x)
        backward(tape, loss)
        np.testing.assert_array_equal(x.grad, np.ones((3, 2)))

    def test_composite_graph(self, rng):
        x = Tensor(rng.standard_normal((1, 1, 4, 4)))
        w1 = Tensor(rng.standard_normal((2, 1, 3, 3)))
        b1 = Tensor(rng.standard_normal(2))
        w2 = Tensor(rng.standard_normal((8, 3)))
        b2 = Tensor(rng.standard_normal(3))

        def fn():
            h = pool_nd(activation(conv_nd(x, w1, b1, padding=1), "relu"), "max", 2, 2)
            return ops.sum(dense(ops.reshape(h, (1, 8)), w2, b2) ** 2)

        assert check_gradients(fn, [x, w1, b1, w2, b2]) < GRAD_TOLERANCE

    def test_unreached_parameter_gets_zero(self, rng):
        store = ParamStore()
        used = store.add("used", rng.standard_normal(3))
        unused = store.add("unused", rng.standard_normal(3))
        unused.grad = None
        with Tape() as tape:
            loss = ops.sum(used * 2.0)
        backward(tape, loss, store)
        np.testing.assert_array_equal(used.grad, 2.0)
        np.testing.assert_array_equal(unused.grad, 0.0)

    def test_stale_tape(self, rng):
        x = Tensor(rng.standard_normal(3), requires_grad=True)
        with Tape() as tape:
            loss = ops.sum(x)
        backward(tape, loss)
        with pytest.raises(ContractError, match="stale"):
            backward(tape, loss)

    def test_non_scalar_loss(self, rng):
        x = Tensor(rng.standard_normal(3), requires_grad=True)
        with Tape() as tape:
            out = x * 2.0
        with pytest.raises(ContractError, match="scalar"):
            backward(tape, out)

    def test_zero_extent_rejected(self):
        with pytest.raises(DimensionError):
            Tensor(np.zeros((2, 0)))


class TestFFT:
    def test_impulse_gives_constant_spectrum(self):
        x = np.zeros((4, 6))
        x[0, 0] = 1.0
        np.testing.assert_allclose(fft_nd(x), np.ones((4, 6)), atol=1e-12)

    @pytest.mark.parametrize("n", [7, 12, 16, 32])
    def test_matches_naive_dft(self, rng, n):
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        np.testing.assert_allclose(fft_nd(x), naive_dft(x), atol=1e-9)

    @pytest.mark.parametrize("shape", [(7,), (12, 5), (16, 3, 4), (13, 11)])
    def test_round_trip_and_parseval(self, rng, shape):
        x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        spectrum = fft_nd(x)
        assert np.max(np.abs(ifft_nd(spectrum) - x)) < 1e-10
        energy = np.sum(np.abs(x) ** 2)
        assert abs(energy - np.sum(np.abs(spectrum) ** 2) / x.size) < 1e-10 * energy

    def test_axes_subset(self, rng):
        x = rng.standard_normal((3, 8, 5))
        out = fft_nd(x, axes=(1, 2))
        for i in range(3):
            np.testing.assert_allclose(out[i], fft_nd(x[i]), atol=1e-10)


class TestSgd:
    def _store(self, value, grad):
        store = ParamStore()
        p = store.add("p", np.array([value]))
        p.grad[...] = grad
        return store, p

    def test_plain_step(self):
        store, p = self._store(1.0, 2.0)
        sgd_step(store, 0.1, momentum=0.0)
        np.testing.assert_allclose(p.data, [0.8])
        np.testing.assert_array_equal(p.grad, [0.0])

    def test_momentum_recursion(self):
        store, p = self._store(1.0, 2.0)
        sgd_step(store, 0.1, momentum=0.9)
        np.testing.assert_allclose(p.data, [0.8])
        p.grad[...] = 2.0
        sgd_step(store, 0.1, momentum=0.9)
        np.testing.assert_allclose(store.velocity("p"), [3.8])
        np.testing.assert_allclose(p.data, [0.42])

    def test_quadratic_bowl_converges(self):
        store, p = self._store(1.0, 0.0)
        for _ in range(200):
            with Tape() as tape:
                loss = ops.sum(p * p)
            backward(tape, loss, store)
            sgd_step(store, 0.1, momentum=0.0)
        assert abs(p.data[0]) < 1e-3

    @pytest.mark.parametrize("lr", [0.0, -0.1])
    def test_non_positive_lr(self, lr):
        store, _ = self._store(1.0, 1.0)
        with pytest.raises(ConfigError):
            sgd_step(store, lr)

    def test_clip_grad_norm(self):
        store = ParamStore()
        a = store.add("a", np.zeros(2))
        b = store.add("b", np.zeros(1))
        a.grad[...] = [3.0, 0.0]
        b.grad[...] = [4.0]
        assert clip_grad_norm(store, 1.0) == pytest.approx(5.0)
        np.testing.assert_allclose(a.grad, [0.6, 0.0])
        np.testing.assert_allclose(b.grad, [0.8])


class TestParamStore:
    def test_duplicate_name(self):
        store = ParamStore()
        store.add("w", np.zeros(2))
        with pytest.raises(ContractError):
            store.add("w", np.zeros(2))

    def test_state_round_trip_checks_shapes(self):
        store = ParamStore()
        store.add("w", np.ones((2, 2)))
        with pytest.raises(ContractError):
            store.load_state({"w": np.ones(3)})


class TestDefaultDtype:
    def test_switch_to_single_precision(self):
        set_default_dtype("float32")
        try:
            assert Tensor([1.0, 2.0]).dtype == np.float32
            assert Tensor([1.0], dtype=np.float64).dtype == np.float64
        finally:
            set_default_dtype("float64")
        assert Tensor([1.0]).dtype == np.float64

    def test_unknown_dtype(self):
        with pytest.raises(ConfigError):
            set_default_dtype("float16")
