import numpy as np
import pytest

from liftpool.data import CorruptionSpec, Dataset, synth_shapes
from liftpool.metrics import (
    DEFAULT_SHIFTS,
    corruption_error,
    mean_corruption_error,
    miou,
    predict,
    shift_consistency,
    top1_error,
)


def constant_model(cls=1, classes=3):
    def model(x):
        out = np.zeros((len(x), classes))
        out[:, cls] = 1
        return out
    return model


def brightness_model(x):
    # class from the mean intensity of the top-left pixel: shift sensitive
    v = x[:, 0, 0, 0]
    return np.stack([v, 0.5 * np.ones_like(v)], axis=1)


class TestTop1:
    def test_error_rate(self):
        ds = Dataset(np.zeros((4, 1, 2, 2)), np.array([1, 1, 0, 2]))
        assert top1_error(constant_model(), ds) == 0.5

    def test_predict_batches(self):
        x = np.zeros((7, 1, 2, 2))
        assert predict(constant_model(2), x, batch_size=3).tolist() == [2] * 7


class TestConsistency:
    def test_constant_model_is_fully_consistent(self):
        assert shift_consistency(constant_model(), synth_shapes(10)) == 1.0

    def test_default_pairs(self):
        assert len(DEFAULT_SHIFTS) == 9

    def test_shift_sensitive_model(self):
        x = np.zeros((1, 1, 4, 4))
        x[0, 0, 0, 0] = 1.0
        ds = Dataset(x, np.zeros(1))
        # shifting up by one drops the bright corner; 2 of the 4 ordered pairs disagree
        c = shift_consistency(brightness_model, ds, shifts=[(0, 0), (-1, 0)])
        assert c == pytest.approx(0.5)

    def test_max_pairs(self):
        ds = synth_shapes(4)
        assert shift_consistency(constant_model(), ds, max_pairs=3) == 1.0


class TestCorruption:
    def test_rows_and_mean(self):
        ds = Dataset(np.zeros((4, 1, 4, 4)), np.array([1, 1, 1, 0]))
        specs = [CorruptionSpec("box_blur", 1), CorruptionSpec("shift", 2)]
        rows, mce = corruption_error(constant_model(), ds, specs)
        assert [r["kind"] for r in rows] == ["box_blur", "shift"]
        assert mce == pytest.approx(0.25)

    def test_mean_over_kind_means(self):
        rows = [{"kind": "a", "error": 0.0}, {"kind": "a", "error": 1.0}, {"kind": "b", "error": 0.2}]
        assert mean_corruption_error(rows) == pytest.approx(0.35)
        assert np.isnan(mean_corruption_error([]))


class TestMiou:
    def test_perfect(self):
        m = np.array([[[0, 1], [1, 0]]])
        assert miou(m, m, 2) == 1.0

    def test_hand_computed_2x2(self):
        pred = np.array([[[0, 1], [1, 1]]])
        true = np.array([[[0, 0], [1, 1]]])
        # class 0: I=1 U=2; class 1: I=2 U=3
        assert miou(pred, true, 2) == pytest.approx((1 / 2 + 2 / 3) / 2)

    def test_absent_class_skipped(self):
        pred = np.array([[[0, 2], [0, 0]]])
        true = np.zeros((1, 2, 2), int)
        # class 2 does not occur in the ground truth, so only class 0 counts: I=3 U=4
        assert miou(pred, true, 3) == pytest.approx(0.75)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            miou(np.zeros((1, 2, 2)), np.zeros((1, 2, 3)), 2)
