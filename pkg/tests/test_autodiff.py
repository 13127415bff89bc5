import math

import numpy as np
import pytest

from liftpool.autodiff import SUPPORTED_OPS, Tape, backward, gradient_check

import gradcases

CASES = gradcases.cases()


class TestGradients:
    @pytest.mark.parametrize("name,f,leaves", CASES, ids=[c[0] for c in CASES])
    def test_finite_difference(self, name, f, leaves):
        assert gradient_check(f, leaves) < 1e-6

    def test_every_registered_op_has_a_case(self):
        covered = {c[0].split("_")[0] if c[0].startswith("conv1d") else c[0] for c in CASES}
        covered |= {"conv1d"}
        aliases = {"add_broadcast": "add", "conv2d_stride2": "conv2d",
                   "softmax_cross_entropy_pixels": "softmax_cross_entropy"}
        covered = {aliases.get(c, c) for c in covered}
        assert SUPPORTED_OPS - {"leaf"} <= covered

    def test_lift_block(self):
        f, leaves = gradcases.lift_block_case()
        assert gradient_check(f, leaves, max_coords=40) < 1e-4


class TestTape:
    def test_diamond_accumulates(self):
        t = Tape()
        x = t.leaf(np.array([2.0, -3.0]))
        y = t.sum(t.add(t.mul(x, x), x))  # d/dx = 2x + 1
        np.testing.assert_allclose(backward(t, y)[x], [5.0, -5.0])

    def test_operators_on_vars(self):
        t = Tape()
        x = t.leaf(np.array([1.0, 2.0]))
        y = t.sum((x * 3.0 - x) * x + -x)  # 2x^2 - x
        np.testing.assert_allclose(backward(t, y)[x], [3.0, 7.0])

    def test_constants_receive_no_gradient(self):
        t = Tape()
        x, c = t.leaf(np.ones(3)), t.const(np.ones(3))
        g = backward(t, t.sum(t.mul(x, c)))
        assert x in g and c not in g

    def test_unreached_leaf_gets_zeros(self):
        t = Tape()
        x, unused = t.leaf(np.ones(2)), t.leaf(np.ones((2, 2)))
        g = backward(t, t.sum(x))
        np.testing.assert_array_equal(g[unused], np.zeros((2, 2)))

    def test_param_is_memoised(self):
        t = Tape()
        w = np.ones(3)
        assert t.param(w).id == t.param(w).id
        assert t.param(np.ones(3)).id != t.param(w).id

    def test_float32_gradients_stay_float32(self):
        t = Tape()
        x = t.leaf(np.ones(4, np.float32))
        g = backward(t, t.sum(t.scale(t.tanh(x), 0.5)))
        assert g[x].dtype == np.float32

    def test_non_scalar_loss_rejected(self):
        t = Tape()
        x = t.leaf(np.ones(3))
        with pytest.raises(ValueError, match="scalar"):
            backward(t, t.relu(x))

    def test_unknown_op(self):
        t = Tape()
        with pytest.raises(ValueError, match="unsupported op"):
            t.record("softplus", t.leaf(np.ones(1)))

    def test_foreign_tape_input(self):
        a, b = Tape(), Tape()
        with pytest.raises(ValueError, match="this tape"):
            a.add(a.leaf(np.ones(2)), b.leaf(np.ones(2)))

    def test_add_shape_mismatch(self):
        t = Tape()
        with pytest.raises(ValueError):
            t.add(t.leaf(np.ones((2, 3))), t.leaf(np.ones((3, 2))))


class TestCrossEntropy:
    def test_uniform_two_class_is_ln2(self):
        t = Tape()
        loss = t.softmax_cross_entropy(t.leaf(np.zeros((4, 2))), np.array([0, 1, 1, 0]))
        assert float(loss.value) == pytest.approx(math.log(2), abs=1e-12)

    def test_large_logits_are_stable(self):
        t = Tape()
        loss = t.softmax_cross_entropy(t.leaf(np.array([[1000.0, 0.0]])), np.array([0]))
        assert float(loss.value) == pytest.approx(0.0, abs=1e-12)

    def test_ignore_index_drops_pixels(self):
        t = Tape()
        logits = t.leaf(np.zeros((1, 5, 1, 2)))
        loss = t.softmax_cross_entropy(logits, np.array([[[255, 3]]]), ignore_index=255)
        assert float(loss.value) == pytest.approx(math.log(5))
        g = backward(t, loss)[logits]
        np.testing.assert_array_equal(g[0, :, 0, 0], 0)

    def test_errors(self):
        t = Tape()
        x = t.leaf(np.zeros((2, 3)))
        with pytest.raises(ValueError, match="out of range"):
            t.softmax_cross_entropy(x, np.array([0, 3]))
        with pytest.raises(ValueError, match="ignored"):
            t.softmax_cross_entropy(x, np.array([7, 7]), ignore_index=7)


class TestGradientCheck:
    def test_detects_a_kink(self):
        # relu at exactly 0: one-sided analytic slope vs central difference of 0.5
        assert gradient_check(lambda t, x: t.sum(t.relu(x)), [np.zeros(1)]) >= 0.5

    def test_non_finite_values_are_reported(self):
        with np.errstate(invalid="ignore"):
            err = gradient_check(lambda t, x: t.sum(t.sqrt(x)), [np.array([1e-6])], eps=1e-5)
        assert err == math.inf

    def test_subsampling_is_seeded(self):
        f = lambda t, x: t.sum(t.tanh(x))  # noqa: E731
        x = np.linspace(-1, 1, 50)
        assert gradient_check(f, [x], max_coords=5, seed=1) == gradient_check(f, [x], max_coords=5, seed=1)
