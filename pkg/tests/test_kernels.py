import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amdnet import kernels as K
from amdnet.exceptions import ConfigError, PreconditionError, ShapeError, ValidationError


def conv_reference(x, w, b):
    """Direct nested-loop cross-correlation with zero padding."""
    n, h, wd, cin = x.shape
    cout = w.shape[3]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.zeros((n, h, wd, cout))
    for i in range(h):
        for j in range(wd):
            patch = xp[:, i:i + 3, j:j + 3, :]
            out[:, i, j, :] = np.tensordot(patch, w, axes=([1, 2, 3], [0, 1, 2])) + b
    return out


class TestConv2d:
    def test_all_ones_center_and_corner(self):
        out = K.conv2d(np.ones((1, 3, 3, 1)), np.ones((3, 3, 1, 1)), np.zeros(1))
        assert out[0, 1, 1, 0] == 9.0
        for y, x in [(0, 0), (0, 2), (2, 0), (2, 2)]:
            assert out[0, y, x, 0] == 4.0
        assert out[0, 0, 1, 0] == 6.0

    def test_zero_kernel_gives_bias(self, rng):
        out = K.conv2d(rng.normal(size=(2, 5, 5, 3)), np.zeros((3, 3, 3, 4)), np.full(4, 2.5))
        assert np.all(out == 2.5)

    def test_matches_loop_reference(self, rng):
        x = rng.normal(size=(2, 6, 5, 3))
        w = rng.normal(size=(3, 3, 3, 4))
        b = rng.normal(size=4)
        np.testing.assert_allclose(K.conv2d(x, w, b), conv_reference(x, w, b), atol=1e-12)

    def test_full_size_shape(self):
        x = np.zeros((1, 256, 256, 3))
        out = K.conv2d(x, np.zeros((3, 3, 3, 32)), np.zeros(32))
        assert out.shape == (1, 256, 256, 32)

    def test_errors(self):
        with pytest.raises(ShapeError):
            K.conv2d(np.zeros((1, 4, 4, 2)), np.zeros((3, 3, 3, 1)), np.zeros(1))
        with pytest.raises(ShapeError):
            K.conv2d(np.zeros((4, 4, 3)), np.zeros((3, 3, 3, 1)), np.zeros(1))

    @settings(max_examples=25, deadline=None)
    @given(a=st.floats(-5, 5), seed=st.integers(0, 2**16))
    def test_linear_in_input(self, a, seed):
        r = np.random.default_rng(seed)
        x = r.normal(size=(1, 4, 4, 2))
        w = r.normal(size=(3, 3, 2, 3))
        zero = np.zeros(3)
        np.testing.assert_allclose(K.conv2d(a * x, w, zero), a * K.conv2d(x, w, zero), atol=1e-12)
        np.testing.assert_allclose(K.conv2d(x, a * w, zero), a * K.conv2d(x, w, zero), atol=1e-12)

    def test_gradients(self, rng):
        x = rng.normal(size=(1, 8, 8, 2))
        w = rng.normal(size=(3, 3, 2, 4))
        b = rng.normal(size=4)
        up = rng.normal(size=(1, 8, 8, 4))
        g = K.conv2d_backward(up, x, w)
        assert g.d_input.shape == x.shape and g.d_weights.shape == w.shape and g.d_bias.shape == b.shape
        f = lambda: float((K.conv2d(x, w, b) * up).sum())  # noqa: E731
        assert K.finite_difference_check(f, [x, w, b], list(g)) < 1e-4


class TestMaxPool:
    def test_window_max(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1)
        out, _ = K.maxpool2d(x)
        assert out.shape == (1, 1, 1, 1) and out[0, 0, 0, 0] == 4.0

    def test_shape(self):
        out, _ = K.maxpool2d(np.zeros((1, 256, 256, 32)))
        assert out.shape == (1, 128, 128, 32)

    def test_tie_goes_to_first(self):
        x = np.array([[5.0, 5.0], [0.0, 0.0]]).reshape(1, 2, 2, 1)
        _, arg = K.maxpool2d(x)
        d = K.maxpool2d_backward(np.ones((1, 1, 1, 1)), arg)
        np.testing.assert_array_equal(d[0, :, :, 0], [[1.0, 0.0], [0.0, 0.0]])

    def test_odd_size(self):
        with pytest.raises(ShapeError):
            K.maxpool2d(np.zeros((1, 3, 4, 1)))

    def test_routing_one_per_window_and_mass(self, rng):
        x = rng.normal(size=(2, 6, 8, 3))
        _, arg = K.maxpool2d(x)
        up = rng.normal(size=(2, 3, 4, 3))
        d = K.maxpool2d_backward(up, arg)
        nz = (d != 0).reshape(2, 3, 2, 4, 2, 3).sum(axis=(2, 4))
        assert np.all(nz == 1)
        assert d.sum() == pytest.approx(up.sum(), abs=1e-12)

    def test_gradient(self, rng):
        x = rng.normal(size=(1, 4, 4, 2))
        out, arg = K.maxpool2d(x)
        up = rng.normal(size=out.shape)
        f = lambda: float((K.maxpool2d(x)[0] * up).sum())  # noqa: E731
        assert K.finite_difference_check(f, [x], [K.maxpool2d_backward(up, arg)]) < 1e-4


class TestBatchNorm:
    def test_constant_input_gives_zero(self):
        out, *_ = K.batch_norm(np.full((2, 3, 3, 2), 7.0), np.ones(2), np.zeros(2),
                               np.zeros(2), np.ones(2), True)
        np.testing.assert_array_equal(out, 0.0)

    def test_train_standardises(self, rng):
        x = rng.normal(5.0, 10.0, size=(4, 5, 5, 3))
        out, *_ = K.batch_norm(x, np.ones(3), np.zeros(3), np.zeros(3), np.ones(3), True)
        np.testing.assert_allclose(out.mean(axis=(0, 1, 2)), 0.0, atol=1e-6)
        np.testing.assert_allclose(out.var(axis=(0, 1, 2)), 1.0, atol=1e-6)

    def test_affine(self, rng):
        x = rng.normal(size=(4, 5, 5, 1)) * 20
        out, *_ = K.batch_norm(x, np.full(1, 2.0), np.full(1, 3.0), np.zeros(1), np.ones(1), True)
        assert out.mean() == pytest.approx(3.0, abs=1e-9)
        assert out.std() == pytest.approx(2.0, abs=1e-5)

    def test_infer_identity(self, rng):
        x = rng.normal(size=(2, 3, 3, 2))
        out, _, m, v = K.batch_norm(x, np.ones(2), np.zeros(2), np.zeros(2), np.ones(2), False)
        np.testing.assert_allclose(out, x / np.sqrt(1 + K.BN_EPS), rtol=0, atol=1e-15)
        np.testing.assert_allclose(out, x, rtol=1e-5, atol=0)
        assert np.all(m == 0) and np.all(v == 1)

    def test_running_stats_momentum(self, rng):
        x = rng.normal(2.0, 3.0, size=(4, 4, 4, 1))
        _, _, m, v = K.batch_norm(x, np.ones(1), np.zeros(1), np.zeros(1), np.ones(1), True)
        assert m[0] == pytest.approx(0.1 * x.mean())
        assert v[0] == pytest.approx(0.9 + 0.1 * x.var())

    def test_single_value_rejected(self):
        with pytest.raises(PreconditionError):
            K.batch_norm(np.ones((1, 1, 1, 2)), np.ones(2), np.zeros(2), np.zeros(2), np.ones(2), True)

    def test_gradient(self, rng):
        x = rng.normal(size=(4, 4, 4, 3))
        gamma, beta = rng.normal(size=3), rng.normal(size=3)
        up = rng.normal(size=x.shape)

        def f():
            out, *_ = K.batch_norm(x, gamma, beta, np.zeros(3), np.ones(3), True)
            return float((out * up).sum())

        _, cache, *_ = K.batch_norm(x, gamma, beta, np.zeros(3), np.ones(3), True)
        g = K.batch_norm_backward(up, cache)
        assert K.finite_difference_check(f, [x, gamma, beta], list(g)) < 1e-4


class TestDense:
    def test_param_counts(self):
        assert K.dense_param_count(8192, 64) == 524352
        assert K.dense_param_count(64, 4) == 260

    def test_identity(self, rng):
        x = rng.normal(size=(3, 5))
        np.testing.assert_array_equal(K.dense(x, np.eye(5), np.zeros(5)), x)

    def test_mismatch(self):
        with pytest.raises(ShapeError):
            K.dense(np.zeros((2, 3)), np.zeros((4, 2)), np.zeros(2))

    def test_gradient(self, rng):
        x, w, b = rng.normal(size=(3, 5)), rng.normal(size=(5, 4)), rng.normal(size=4)
        up = rng.normal(size=(3, 4))
        f = lambda: float((K.dense(x, w, b) * up).sum())  # noqa: E731
        assert K.finite_difference_check(f, [x, w, b], list(K.dense_backward(up, x, w))) < 1e-4


class TestActivations:
    def test_values(self):
        np.testing.assert_allclose(K.softmax(np.zeros(4)), [0.25] * 4)
        assert K.activation(np.array([0.0]), "sigmoid")[0] == 0.5
        np.testing.assert_array_equal(K.activation(np.array([-1.0, 2.0]), "relu"), [0.0, 2.0])

    def test_softmax_overflow(self):
        p = K.softmax(np.array([1000.0, 0.0]))
        assert np.all(np.isfinite(p))
        np.testing.assert_allclose(p, [1.0, 0.0], atol=1e-300)

    def test_sigmoid_extremes(self):
        s = K.sigmoid(np.array([-800.0, 800.0]))
        assert np.all(np.isfinite(s)) and s[0] == 0.0 and s[1] == 1.0

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=8))
    def test_softmax_rows(self, logits):
        p = K.softmax(np.array([logits]))
        assert abs(p.sum() - 1.0) < 1e-12
        assert np.all((p > 0) & (p <= 1))  # 1 - 1e-17 rounds to 1.0

    @pytest.mark.parametrize("kind", ["relu", "sigmoid", "tanh", "softmax"])
    def test_gradient(self, rng, kind):
        x = rng.normal(size=(3, 5))
        if kind == "relu":
            x = np.where(np.abs(x) < 0.1, 0.5, x)  # stay away from the kink
        up = rng.normal(size=x.shape)
        f = lambda: float((K.activation(x, kind) * up).sum())  # noqa: E731
        assert K.finite_difference_check(f, [x], [K.activation_backward(up, x, kind)]) < 1e-4

    def test_unknown(self):
        with pytest.raises(ConfigError):
            K.activation(np.zeros(2), "swish")


class TestDropout:
    def test_identities(self, rng):
        x = rng.normal(size=(4, 4))
        assert K.dropout(x, 0.0, 0, True)[0] is x or np.array_equal(K.dropout(x, 0.0, 0, True)[0], x)
        np.testing.assert_array_equal(K.dropout(x, 0.5, 0, False)[0], x)

    def test_rate_range(self):
        with pytest.raises(ConfigError):
            K.dropout(np.zeros(3), 1.0, 0, True)
        with pytest.raises(ConfigError):
            K.dropout(np.zeros(3), -0.1, 0, True)

    def test_drop_fraction(self):
        out, mask = K.dropout(np.ones(10**6), 0.2, 7, True)
        assert abs((out == 0).mean() - 0.2) < 0.002
        assert set(np.unique(out)) == {0.0, 1.25}

    def test_expectation(self):
        x = np.full(10**6, 3.0)
        out, _ = K.dropout(x, 0.2, 11, True)
        assert out.mean() == pytest.approx(3.0, rel=5e-3)

    def test_deterministic(self, rng):
        x = rng.normal(size=(5, 5))
        np.testing.assert_array_equal(K.dropout(x, 0.2, 3, True)[0], K.dropout(x, 0.2, 3, True)[0])


class TestLoss:
    def test_uniform(self):
        loss, _ = K.softmax_cross_entropy(np.zeros((2, 4)), np.eye(4)[[0, 3]])
        assert loss == pytest.approx(np.log(4))

    def test_perfect(self):
        loss, _ = K.softmax_cross_entropy(np.array([[100.0, 0, 0, 0]]), np.eye(4)[[0]])
        assert loss < 1e-40

    def test_gradient_formula(self, rng):
        z = rng.normal(size=(3, 4))
        y = np.eye(4)[[1, 0, 2]]
        _, d = K.softmax_cross_entropy(z, y)
        np.testing.assert_allclose(d, (K.softmax(z) - y) / 3)
        f = lambda: K.softmax_cross_entropy(z, y)[0]  # noqa: E731
        assert K.finite_difference_check(f, [z], [d]) < 1e-6

    def test_not_one_hot(self):
        with pytest.raises(ValidationError):
            K.softmax_cross_entropy(np.zeros((1, 3)), np.array([[0.5, 0.5, 0.0]]))


class TestFiniteDifference:
    def test_quadratic(self):
        x = np.array([3.0])
        assert K.finite_difference_check(lambda: float(x[0] ** 2), [x], [np.array([6.0])]) < 1e-9

    def test_detects_wrong_gradient(self):
        x = np.array([3.0])
        assert K.finite_difference_check(lambda: float(x[0] ** 2), [x], [np.array([5.0])]) > 0.1

    def test_kink_is_flagged_not_scored(self):
        x = np.array([0.0])
        f = lambda: float(abs(x[0]))  # noqa: E731
        res = K.gradient_check(f, [x], [np.array([0.0])], pattern=lambda: bytes([int(x[0] > 0)]))
        assert res.kinks == 1 and res.checked == 0

    def test_kink_mode_still_catches_wrong_gradient(self, rng):
        x = rng.normal(size=4)
        res = K.gradient_check(lambda: float((x ** 2).sum()), [x], [3 * x], pattern=lambda: b"")
        assert res.kinks == 0 and res.checked == 4 and res.max_error > 0.1

    def test_restores_params(self, rng):
        x = rng.normal(size=5)
        before = x.copy()
        K.finite_difference_check(lambda: float((x ** 3).sum()), [x], [3 * x ** 2])
        np.testing.assert_array_equal(x, before)
