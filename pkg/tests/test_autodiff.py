import numpy as np
import pytest

from audiosr.autodiff import (
    Adam,
    Tensor,
    add,
    clamp_min,
    concat_channels,
    conv1d,
    dense,
    flatten,
    leaky_relu,
    log,
    mean_all,
    mul,
    mul_scalar,
    neg,
    sigmoid,
    square,
    sub,
    zero_grads,
)


def t64(data, requires_grad=True):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=requires_grad)


class TestConv1d:
    def test_hand_computed_cross_correlation(self):
        x = t64([[[1.0, 2.0, 3.0]]])
        k = t64([[[1.0, 0.0, -1.0]]])
        b = t64([0.0])
        np.testing.assert_array_equal(conv1d(x, k, b).data, [[[-2.0, -2.0, 2.0]]])

    def test_identity_kernel(self):
        rng = np.random.default_rng(1)
        x = t64(rng.standard_normal((2, 3, 16)))
        k = np.zeros((3, 3, 3))
        for c in range(3):
            k[c, c, 1] = 1.0
        out = conv1d(x, t64(k), t64(np.zeros(3)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_shape_and_gradients(self, gradcheck):
        rng = np.random.default_rng(2)
        x = t64(rng.uniform(-1, 1, (2, 3, 16)))
        k = t64(rng.uniform(-1, 1, (5, 3, 9)))
        b = t64(rng.uniform(-1, 1, 5))
        out = conv1d(x, k, b)
        assert out.shape == (2, 5, 16)
        gradcheck(lambda: mean_all(square(conv1d(x, k, b))), [x, k, b])

    def test_stride_matches_sliced_full_output(self):
        rng = np.random.default_rng(3)
        x = t64(rng.standard_normal((2, 3, 12)))
        k = t64(rng.standard_normal((4, 3, 5)))
        b = t64(rng.standard_normal(4))
        full = conv1d(x, k, b).data
        strided = conv1d(x, k, b, stride=2).data
        np.testing.assert_array_equal(strided, full[:, :, ::2])

    def test_stride_gradients(self, gradcheck):
        rng = np.random.default_rng(4)
        x = t64(rng.uniform(-1, 1, (1, 2, 8)))
        k = t64(rng.uniform(-1, 1, (4, 2, 3)))
        b = t64(rng.uniform(-1, 1, 4))
        gradcheck(lambda: mean_all(square(conv1d(x, k, b, stride=2))), [x, k, b])

    def test_even_width_rejected(self):
        x = t64(np.zeros((1, 1, 4)))
        with pytest.raises(ValueError, match="odd"):
            conv1d(x, t64(np.zeros((1, 1, 4))), t64(np.zeros(1)))

    def test_channel_mismatch_rejected(self):
        x = t64(np.zeros((1, 2, 4)))
        with pytest.raises(ValueError, match="channels"):
            conv1d(x, t64(np.zeros((1, 3, 3))), t64(np.zeros(1)))

    def test_stride_must_divide_length(self):
        x = t64(np.zeros((1, 1, 5)))
        with pytest.raises(ValueError, match="divisible"):
            conv1d(x, t64(np.zeros((1, 1, 3))), t64(np.zeros(1)), stride=2)


class TestElementwise:
    def test_leaky_relu_values(self):
        x = t64([-1.0, 0.0, 2.0])
        np.testing.assert_allclose(leaky_relu(x, 0.2).data, [-0.2, 0.0, 2.0])
        np.testing.assert_allclose(leaky_relu(x, 0.0).data, [0.0, 0.0, 2.0])

    def test_leaky_relu_gradient_regions(self):
        x = t64([-2.0, 3.0])
        loss = mean_all(leaky_relu(x, 0.2))
        loss.backward()
        np.testing.assert_allclose(x.grad, [0.1, 0.5])  # alpha/2 and 1/2

    def test_leaky_relu_gradcheck(self, gradcheck):
        rng = np.random.default_rng(5)
        x = t64(rng.uniform(0.1, 1, 24) * rng.choice([-1.0, 1.0], 24))
        gradcheck(lambda: mean_all(square(leaky_relu(x, 0.2))), [x])

    def test_alpha_validated(self):
        with pytest.raises(ValueError):
            leaky_relu(t64([1.0]), 1.5)

    def test_sigmoid_at_zero(self):
        assert sigmoid(t64(0.0)).item() == 0.5

    def test_sigmoid_stable_at_extremes(self):
        out = sigmoid(t64([-500.0, 500.0]))
        assert np.all(np.isfinite(out.data))
        assert 0.0 <= out.data[0] < 1e-100
        assert out.data[1] == 1.0  # saturates in float

    def test_composite_log_sigmoid_gradcheck(self, gradcheck):
        z = t64(0.3)
        gradcheck(lambda: neg(log(sigmoid(z))), [z])

    def test_log_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            log(t64([1.0, 0.0]))

    def test_clamp_min_values_and_mask(self):
        x = t64([-1.0, 0.5, 2.0])
        out = clamp_min(x, 1.0)
        np.testing.assert_allclose(out.data, [1.0, 1.0, 2.0])
        mean_all(out).backward()
        np.testing.assert_allclose(x.grad, [0.0, 0.0, 1 / 3])

    def test_elementwise_gradchecks(self, gradcheck):
        rng = np.random.default_rng(6)
        a = t64(rng.uniform(-1, 1, (2, 3, 4)))
        b = t64(rng.uniform(-1, 1, (2, 3, 4)))
        c = t64(rng.uniform(0.5, 2, (2, 3, 4)))
        gradcheck(lambda: mean_all(mul(add(a, b), sub(a, b))), [a, b])
        gradcheck(lambda: mean_all(square(mul_scalar(a, 1.7))), [a])
        gradcheck(lambda: mean_all(log(c)), [c])
        gradcheck(lambda: mean_all(sigmoid(a)), [a])
        gradcheck(lambda: mean_all(neg(square(a))), [a])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            add(t64(np.zeros(3)), t64(np.zeros(4)))


class TestReductionsAndShape:
    def test_mean_all_value(self):
        assert mean_all(t64([[[1.0, 2.0, 3.0, 4.0]]])).item() == 2.5

    def test_backward_of_mean_square(self):
        x = t64([1.0, 2.0])
        mean_all(square(x)).backward()
        np.testing.assert_allclose(x.grad, [1.0, 2.0])

    def test_constant_loss_gives_zero_grads(self):
        x = t64([1.0, -2.0, 3.0])
        mean_all(sub(x, x)).backward()
        np.testing.assert_array_equal(x.grad, np.zeros(3))

    def test_concat_shapes(self):
        a = t64(np.ones((1, 2, 4)))
        b = t64(np.zeros((1, 3, 4)))
        assert concat_channels(a, b).shape == (1, 5, 4)

    def test_concat_with_empty_is_identity(self):
        rng = np.random.default_rng(7)
        x = t64(rng.standard_normal((2, 3, 4)))
        empty = t64(np.zeros((2, 0, 4)))
        np.testing.assert_array_equal(concat_channels(x, empty).data, x.data)

    def test_concat_gradients(self, gradcheck):
        rng = np.random.default_rng(8)
        a = t64(rng.uniform(-1, 1, (1, 2, 4)))
        b = t64(rng.uniform(-1, 1, (1, 3, 4)))
        gradcheck(lambda: mean_all(square(concat_channels(a, b))), [a, b])

    def test_flatten_and_dense_gradcheck(self, gradcheck):
        rng = np.random.default_rng(9)
        x = t64(rng.uniform(-1, 1, (2, 3, 4)))
        w = t64(rng.uniform(-1, 1, (2, 12)))
        b = t64(rng.uniform(-1, 1, 2))
        out = dense(flatten(x), w, b)
        assert out.shape == (2, 2)
        gradcheck(lambda: mean_all(square(dense(flatten(x), w, b))), [x, w, b])

    def test_backward_requires_scalar(self):
        x = t64([1.0, 2.0])
        with pytest.raises(ValueError, match="scalar"):
            square(x).backward()

    def test_backward_on_detached_rejected(self):
        x = Tensor(np.ones(3))
        with pytest.raises(ValueError, match="detached"):
            mean_all(x).backward()


class TestGraphProperties:
    def test_backward_linearity(self):
        rng = np.random.default_rng(10)
        data = rng.standard_normal(6)

        x = Tensor(data, requires_grad=True)
        add(mul_scalar(mean_all(square(x)), 2.0), mul_scalar(mean_all(sigmoid(x)), 3.0)).backward()
        combined = x.grad

        x1 = Tensor(data, requires_grad=True)
        mean_all(square(x1)).backward()
        x2 = Tensor(data, requires_grad=True)
        mean_all(sigmoid(x2)).backward()
        np.testing.assert_allclose(combined, 2.0 * x1.grad + 3.0 * x2.grad, rtol=0, atol=1e-12)

    def test_no_op_mutates_inputs(self):
        rng = np.random.default_rng(11)
        x = t64(rng.standard_normal((1, 2, 8)))
        k = t64(rng.standard_normal((2, 2, 3)))
        b = t64(rng.standard_normal(2))
        saved = [x.data.copy(), k.data.copy(), b.data.copy()]
        loss = mean_all(square(leaky_relu(conv1d(x, k, b), 0.2)))
        loss.backward()
        for tensor, before in zip([x, k, b], saved):
            np.testing.assert_array_equal(tensor.data, before)

    def test_forward_independent_of_recording(self):
        rng = np.random.default_rng(12)
        data = rng.standard_normal((1, 2, 8))
        k = rng.standard_normal((2, 2, 3))
        b = rng.standard_normal(2)
        tracked = conv1d(t64(data), t64(k), t64(b))
        untracked = conv1d(
            Tensor(data, requires_grad=False),
            Tensor(k, requires_grad=False),
            Tensor(b, requires_grad=False),
        )
        np.testing.assert_array_equal(tracked.data, untracked.data)
        assert untracked._backward is None and tracked._backward is not None

    def test_grad_accumulates_across_reuse(self):
        x = t64([3.0])
        mean_all(add(square(x), square(x))).backward()
        np.testing.assert_allclose(x.grad, [12.0])

    def test_nonfinite_forward_raises(self):
        big = Tensor(np.array([3.0e38], dtype=np.float32))
        with np.errstate(over="ignore"), pytest.raises(FloatingPointError):
            mul_scalar(big, 10.0)

    def test_detach_cuts_graph(self):
        x = t64([1.0, 2.0])
        d = x.detach()
        assert not d.requires_grad
        np.testing.assert_array_equal(d.data, x.data)


class TestAdam:
    def test_first_step_bias_correction(self):
        p = t64([0.0])
        opt = Adam({"p": p}, lr=1e-4)
        p.grad = np.array([1.0])
        opt.step()
        # lr * mhat / (sqrt(vhat) + eps) with mhat = 1, vhat = 1
        expected = -1e-4 / (1.0 + 1e-8)
        np.testing.assert_allclose(p.data, [expected], rtol=0, atol=1e-15)
        np.testing.assert_allclose(p.data, [-9.99999995e-5], rtol=0, atol=1e-11)

    def test_zero_grad_leaves_param_fixed(self):
        p = t64([1.5, -2.0])
        opt = Adam({"p": p})
        for _ in range(5):
            p.grad = None
            opt.step()
        np.testing.assert_array_equal(p.data, [1.5, -2.0])

    def test_deterministic(self):
        def run():
            rng = np.random.default_rng(13)
            p = Tensor(rng.standard_normal(8).astype(np.float32), requires_grad=True)
            opt = Adam({"p": p}, lr=1e-3)
            for _ in range(20):
                p.grad = np.asarray(p.data * 0.3 + 0.1, dtype=np.float32)
                opt.step()
            return p.data.copy()

        np.testing.assert_array_equal(run(), run())

    def test_state_round_trip(self):
        rng = np.random.default_rng(14)
        p = Tensor(rng.standard_normal(4).astype(np.float32), requires_grad=True)
        opt = Adam({"p": p}, lr=1e-3)
        for _ in range(3):
            p.grad = np.ones(4, dtype=np.float32)
            opt.step()
        q = Tensor(p.data.copy(), requires_grad=True)
        opt2 = Adam({"p": q}, lr=1e-3)
        opt2.load_state_arrays(dict(opt.state_arrays()), opt.t)
        p.grad = q.grad = np.full(4, 0.5, dtype=np.float32)
        opt.step()
        opt2.step()
        np.testing.assert_array_equal(p.data, q.data)

    def test_shape_mismatch_rejected(self):
        p = t64([0.0, 0.0])
        opt = Adam({"p": p})
        p.grad = np.zeros(3)
        with pytest.raises(ValueError, match="shape"):
            opt.step()

    def test_zero_grads_helper(self):
        p = t64([1.0])
        p.grad = np.ones(1)
        zero_grads({"p": p})
        assert p.grad is None
