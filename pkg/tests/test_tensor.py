import numpy as np
import pytest

from liftpool import tensor as T
from liftpool.tensor import PadMode

import oracles

MODES = ["zero", "replicate", "symmetric", "periodic"]


class TestConstruction:
    def test_float_types_accepted(self):
        assert T.tensor([1, 2], np.float32).dtype == np.float32
        assert T.tensor([[1.0]]).dtype == np.float64

    def test_rejects_integer_dtype(self):
        with pytest.raises(TypeError):
            T.tensor([1, 2], np.int32)

    def test_rejects_zero_size(self):
        with pytest.raises(ValueError, match="zero-sized"):
            T.tensor(np.zeros((2, 0)))

    def test_pad_mode_parse(self):
        assert PadMode.parse("Periodic") is PadMode.PERIODIC
        with pytest.raises(ValueError, match="unknown pad mode"):
            PadMode.parse("reflect101")


class TestPadding:
    @pytest.mark.parametrize("mode", MODES)
    @pytest.mark.parametrize("n", [1, 2, 5])
    def test_pad_index_matches_oracle(self, mode, n):
        before = after = min(n, 2)
        idx = T.pad_index(n, before, after, mode)
        expect = [oracles.boundary_index(i, n, mode) for i in range(-before, n + after)]
        assert [None if j < 0 else int(j) for j in idx] == expect

    def test_pad_matrix_transpose_scatters(self):
        m = T.pad_matrix(4, 2, 2, "symmetric", np.float64)
        # each original sample appears once in the core plus its mirrored copies
        np.testing.assert_array_equal(m.sum(axis=1), [2, 2, 2, 2])
        x = np.arange(4.0)
        np.testing.assert_array_equal(x @ m, [1, 0, 0, 1, 2, 3, 3, 2])

    def test_pad_axis_middle(self):
        x = np.arange(6.0).reshape(2, 3)
        out = T.pad_axis(x, 1, 0, "periodic", axis=0)
        np.testing.assert_array_equal(out, [[3, 4, 5], [0, 1, 2], [3, 4, 5]])

    def test_pad_to_even_and_crop(self):
        x = np.arange(10.0).reshape(2, 5)
        padded, n = T.pad_to_even(x, axis=1)
        assert n == 5 and padded.shape == (2, 6)
        np.testing.assert_array_equal(padded[:, -1], padded[:, -2])
        np.testing.assert_array_equal(T.crop(padded, n, axis=1), x)
        same, m = T.pad_to_even(padded, axis=1)
        assert same is padded and m == 6


class TestConv1d:
    @pytest.mark.parametrize("mode", MODES)
    @pytest.mark.parametrize("groups,c,cout", [(1, 3, 2), (3, 3, 3), (2, 4, 6)])
    def test_matches_loop_oracle(self, mode, groups, c, cout):
        rng = np.random.default_rng(groups * 10 + c)
        x = rng.normal(size=(2, c, 7))
        w = rng.normal(size=(cout, c // groups, 5))
        b = rng.normal(size=cout)
        y = T.conv1d_grouped(x, w, b, groups, mode)
        np.testing.assert_allclose(y, oracles.conv1d_loops(x, w, b, groups, mode), atol=1e-12)

    def test_extra_axes_are_batch(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(1, 2, 3, 6))
        w = rng.normal(size=(2, 1, 3))
        y = T.conv1d_grouped(x, w, None, 2, "replicate")
        for r in range(3):
            np.testing.assert_allclose(y[:, :, r], T.conv1d_grouped(x[:, :, r], w, None, 2, "replicate"))

    def test_short_signal_long_kernel(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(1, 1, 2))
        w = rng.normal(size=(1, 1, 5))
        for mode in ("zero", "replicate", "periodic"):
            np.testing.assert_allclose(T.conv1d_grouped(x, w, None, 1, mode),
                                       oracles.conv1d_loops(x, w, None, 1, mode), atol=1e-12)

    @pytest.mark.parametrize("w_shape,groups,match", [
        ((3, 2, 3), 2, "not divisible"),
        ((4, 1, 4), 4, "odd"),
        ((2, 3, 3), 1, "channels per group"),
    ])
    def test_rejects_bad_shapes(self, w_shape, groups, match):
        with pytest.raises(ValueError, match=match):
            T.conv1d_grouped(np.zeros((1, 4, 5)), np.zeros(w_shape), None, groups)

    def test_backward_against_linear_map(self):
        # conv is linear in x, so <gy, conv(x)> gradient equals conv^T gy
        rng = np.random.default_rng(3)
        x = rng.normal(size=(1, 2, 6))
        w = rng.normal(size=(2, 1, 3))
        gy = rng.normal(size=(1, 2, 6))
        gx, gw, gb = T.conv1d_grouped_backward(gy, x, w, 2, "symmetric")
        eye = np.eye(x.size).reshape((-1,) + x.shape)
        jac = np.stack([T.conv1d_grouped(e, w, None, 2, "symmetric").ravel() for e in eye])
        np.testing.assert_allclose(gx.ravel(), jac @ gy.ravel(), atol=1e-12)
        np.testing.assert_allclose(gb, gy.sum(axis=(0, 2)))


class TestConv2d:
    @pytest.mark.parametrize("stride,padding", [(1, None), (2, None), (1, 0), (2, 1)])
    def test_matches_loop_oracle(self, stride, padding):
        rng = np.random.default_rng(stride)
        x = rng.normal(size=(2, 3, 7, 6))
        w = rng.normal(size=(4, 3, 3, 3))
        b = rng.normal(size=4)
        np.testing.assert_allclose(T.conv2d(x, w, b, stride, padding),
                                   oracles.conv2d_loops(x, w, b, stride, padding), atol=1e-12)

    def test_channel_mismatch(self):
        with pytest.raises(ValueError, match="input channels"):
            T.conv2d(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)), None)


class TestElementwiseAndReduce:
    def test_ops(self):
        a, b = np.array([1.0, 2.0]), np.array([3.0, 5.0])
        np.testing.assert_array_equal(T.elementwise(a, b, "add"), [4, 7])
        np.testing.assert_array_equal(T.elementwise(a, b, "sub"), [-2, -3])
        np.testing.assert_array_equal(T.elementwise(a, b, "mul"), [3, 10])
        np.testing.assert_array_equal(T.elementwise(a, 2.0, "mul"), [2, 4])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            T.elementwise(np.zeros(2), np.zeros(3), "add")

    def test_activations(self):
        x = np.array([-1.0, 0.0, 2.0])
        np.testing.assert_array_equal(T.activation(x, "relu"), [0, 0, 2])
        np.testing.assert_allclose(T.activation(x, "tanh"), np.tanh(x))
        with pytest.raises(ValueError):
            T.activation(x, "gelu")

    def test_reduce(self):
        x = np.array([[1.0, 4.0], [4.0, 2.0]])
        assert T.reduce(x, "sum") == 11
        assert T.reduce(x, "mean") == 2.75
        assert T.reduce(x, "max_with_argmax") == (4.0, 1)  # lowest index wins the tie
        with pytest.raises(ValueError):
            T.reduce(np.zeros(0), "sum")
