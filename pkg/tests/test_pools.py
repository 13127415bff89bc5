import numpy as np
import pytest

from liftpool.autodiff import Tape, backward
from liftpool.lifting import LiftOperator, lift_down_2d, lift_up_2d
from liftpool.pools import PoolConfig, avg_pool2d, max_pool2d, max_up_pool2d, skip_pool2d

import oracles


class TestMaxPool:
    def test_matches_loop_oracle(self):
        x = np.random.default_rng(0).normal(size=(2, 3, 6, 7))
        y, idx = max_pool2d(x)
        ref, ref_idx = oracles.max_pool_loops(x)
        np.testing.assert_array_equal(y, ref)
        np.testing.assert_array_equal(idx, ref_idx)

    def test_ties_pick_lowest_index(self):
        _, idx = max_pool2d(np.ones((1, 1, 2, 2)))
        assert idx.item() == 0

    def test_k3_s1(self):
        x = np.random.default_rng(1).normal(size=(1, 2, 5, 5))
        y, idx = max_pool2d(x, PoolConfig(3, 1))
        ref, ref_idx = oracles.max_pool_loops(x, 3, 1)
        np.testing.assert_array_equal(y, ref)
        np.testing.assert_array_equal(idx, ref_idx)

    def test_bad_config(self):
        with pytest.raises(ValueError):
            PoolConfig(0, 2)


class TestAvgAndSkip:
    @pytest.mark.parametrize("k,s", [(2, 2), (3, 2), (2, 1)])
    def test_avg_matches_loops(self, k, s):
        x = np.random.default_rng(k).normal(size=(2, 2, 7, 6))
        np.testing.assert_allclose(avg_pool2d(x, PoolConfig(k, s)), oracles.avg_pool_loops(x, k, s), atol=1e-12)

    def test_skip_is_strided_same_conv(self):
        rng = np.random.default_rng(2)
        x, w, b = rng.normal(size=(1, 2, 8, 8)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
        y = skip_pool2d(x, w, b)
        assert y.shape == (1, 3, 4, 4)
        np.testing.assert_allclose(y, oracles.conv2d_loops(x, w, b, stride=2), atol=1e-12)


class TestMaxUpPool:
    def test_scatter_to_argmax(self):
        x = np.array([[[[1.0, 5.0], [2.0, 3.0]]]])
        y, idx = max_pool2d(x)
        up = max_up_pool2d(y, idx, x.shape)
        np.testing.assert_array_equal(up, [[[[0, 5], [0, 0]]]])

    def test_sparsity_vs_lifting(self):
        x = np.random.default_rng(3).normal(size=(2, 3, 8, 8))
        y, idx = max_pool2d(x)
        up = max_up_pool2d(y, idx, x.shape)
        assert np.count_nonzero(up) / up.size <= 0.25
        P, U = LiftOperator.classical_predict(), LiftOperator.classical_update()
        np.testing.assert_allclose(lift_up_2d(lift_down_2d(x, P, U), P, U), x, atol=1e-12)

    def test_odd_size_target(self):
        x = np.random.default_rng(4).normal(size=(1, 1, 5, 5))
        y, idx = max_pool2d(x)
        up = max_up_pool2d(y, idx, (5, 5))
        assert up.shape == (1, 1, 5, 5)
        assert not up[..., 4, :].any() and not up[..., :, 4].any()

    def test_errors(self):
        with pytest.raises(ValueError, match="indices shape"):
            max_up_pool2d(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 1, 2), int), (4, 4))
        with pytest.raises(ValueError, match="inside"):
            max_up_pool2d(np.zeros((1, 1, 1, 1)), np.full((1, 1, 1, 1), 4), (2, 2))
        with pytest.raises(ValueError, match="too small"):
            max_up_pool2d(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 2), int), (2, 4))

    def test_gradient_routes_to_winners(self):
        t = Tape()
        x = t.leaf(np.array([[[[1.0, 5.0], [2.0, 3.0]]]]))
        y, _ = t.max_pool2d(x)
        np.testing.assert_array_equal(backward(t, t.sum(y))[x], [[[[0, 1], [0, 0]]]])
