import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpcam import (
    ActivationMap,
    ClassifierWeights,
    DimensionError,
    FeatureBlock,
    compute_cam,
    normalize_map,
    raw_cam,
    split_by_cam,
)


def block_of(values):
    return FeatureBlock(np.asarray(values, dtype=np.float32))


class TestRawCam:
    def test_zero_block_gives_zero_map(self):
        block = block_of(np.zeros((3, 4, 5)))
        out = raw_cam(block, np.random.default_rng(0).standard_normal(5))
        assert np.array_equal(out, np.zeros((3, 4)))

    def test_hand_dot_product(self):
        block = block_of([[[1.0, 2.0, 3.0]]])
        assert np.allclose(raw_cam(block, np.array([1.0, 1.0, 1.0])), [[6.0]])

    def test_matches_per_position_oracle(self):
        rng = np.random.default_rng(42)
        values = rng.standard_normal((2, 2, 2)).astype(np.float32)
        w = rng.standard_normal(2)
        out = raw_cam(block_of(values), w)
        for i in range(2):
            for j in range(2):
                expected = sum(float(values[i, j, c]) * w[c] for c in range(2))
                assert out[i, j] == pytest.approx(expected, abs=1e-6)

    def test_dimension_mismatch_raises(self):
        with pytest.raises(DimensionError):
            raw_cam(block_of(np.ones((2, 2, 3))), np.ones(4))

    def test_linearity_in_weights(self):
        rng = np.random.default_rng(7)
        block = block_of(rng.standard_normal((4, 5, 6)))
        w1, w2 = rng.standard_normal((2, 6))
        a, b = 2.5, -1.25
        combined = raw_cam(block, a * w1 + b * w2)
        separate = a * raw_cam(block, w1) + b * raw_cam(block, w2)
        assert np.allclose(combined, separate, atol=1e-5)


class TestNormalizeMap:
    def test_large_gap_values(self):
        out = normalize_map(np.array([[130.0, 35.0]]))
        assert np.allclose(out, [[1.00, 0.27]], atol=0.005)

    def test_all_nonpositive_becomes_zero(self):
        out = normalize_map(np.array([[-3.0, 0.0], [-0.5, -100.0]]))
        assert np.array_equal(out, np.zeros((2, 2)))

    def test_hand_example(self):
        out = normalize_map(np.array([[-1.0, 2.0, 4.0]]))
        assert np.array_equal(out, [[0.0, 0.5, 1.0]])

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            normalize_map(np.array([[np.nan, 1.0]]))

    def test_max_is_exactly_one_when_positive(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            raw = rng.standard_normal((5, 5)) * rng.uniform(0.1, 1e6)
            out = normalize_map(raw)
            if (raw > 0).any():
                assert out.max() == 1.0
                assert out[np.unravel_index(np.maximum(raw, 0).argmax(), raw.shape)] == 1.0
            assert out.min() >= 0.0 and out.max() <= 1.0

    @given(
        scale=st.floats(min_value=1e-3, max_value=1e3),
        seed=st.integers(min_value=0, max_value=2**32 - 1),
    )
    @settings(max_examples=50, deadline=None)
    def test_invariant_to_positive_scaling(self, scale, seed):
        raw = np.random.default_rng(seed).standard_normal((3, 4))
        assert np.allclose(normalize_map(scale * raw), normalize_map(raw), atol=1e-9)


class TestComputeCam:
    def test_composition_of_examples(self):
        block = block_of([[[1.0, 2.0, 3.0], [0.5, 0.5, 0.5]]])
        weights = ClassifierWeights(np.array([[1.0, 1.0, 1.0]], dtype=np.float32))
        amap = compute_cam(block, weights, 0)
        assert amap.class_id == 0
        assert np.allclose(amap.values, [[1.0, 1.5 / 6.0]])

    def test_dominant_position_gets_one(self):
        rng = np.random.default_rng(5)
        values = rng.uniform(0, 0.1, size=(4, 4, 3)).astype(np.float32)
        values[2, 1] = [5.0, 5.0, 5.0]
        weights = ClassifierWeights(np.ones((1, 3), dtype=np.float32))
        amap = compute_cam(block_of(values), weights, 0)
        assert amap.values[2, 1] == 1.0
        assert (amap.values < 1.0).sum() == 15

    def test_matches_independent_oracle(self):
        rng = np.random.default_rng(11)
        values = rng.standard_normal((4, 4, 8)).astype(np.float32)
        weights = ClassifierWeights(rng.standard_normal((3, 8)).astype(np.float32))
        amap = compute_cam(block_of(values), weights, 1)
        # independent recomputation: explicit loops, float64
        raw = np.empty((4, 4))
        for i in range(4):
            for j in range(4):
                raw[i, j] = float(
                    np.dot(values[i, j].astype(np.float64), weights.values[1].astype(np.float64))
                )
        relu = np.maximum(raw, 0)
        expected = relu / relu.max() if relu.max() > 0 else np.zeros_like(relu)
        assert np.allclose(amap.values, expected, atol=1e-6)


class TestSplitByCam:
    def test_all_foreground(self):
        block = block_of(np.ones((2, 3, 4)))
        cam = ActivationMap(class_id=0, values=np.ones((2, 3)))
        split = split_by_cam(block, cam, tau=0.1)
        assert split.foreground.shape == (6, 4)
        assert split.background.shape == (0, 4)

    def test_all_background(self):
        block = block_of(np.ones((2, 3, 4)))
        cam = ActivationMap(class_id=0, values=np.zeros((2, 3)))
        split = split_by_cam(block, cam, tau=0.1)
        assert split.foreground.shape == (0, 4)
        assert split.background.shape == (6, 4)

    def test_hand_partition_with_boundary_tie(self):
        # value equal to tau goes to foreground
        values = np.arange(8, dtype=np.float32).reshape(2, 2, 2)
        cam = ActivationMap(class_id=0, values=np.array([[0.1, 0.05], [0.5, 0.09]]))
        split = split_by_cam(block_of(values), cam, tau=0.1)
        assert split.foreground.shape[0] == 2
        assert split.background.shape[0] == 2
        assert np.array_equal(split.foreground, values.reshape(-1, 2)[[0, 2]])
        assert np.array_equal(split.background, values.reshape(-1, 2)[[1, 3]])

    def test_partition_conserves_multiset(self):
        rng = np.random.default_rng(9)
        values = rng.standard_normal((5, 7, 3)).astype(np.float32)
        cam = ActivationMap(class_id=0, values=rng.uniform(0, 1, (5, 7)))
        split = split_by_cam(block_of(values), cam, tau=0.4)
        assert split.foreground.shape[0] + split.background.shape[0] == 35
        merged = np.concatenate([split.foreground, split.background])
        original = values.reshape(-1, 3).astype(np.float64)
        key = lambda arr: arr[np.lexsort(arr.T)]
        assert np.array_equal(key(merged), key(original))

    def test_shape_mismatch_raises(self):
        block = block_of(np.ones((2, 2, 2)))
        cam = ActivationMap(class_id=0, values=np.ones((3, 2)))
        with pytest.raises(DimensionError):
            split_by_cam(block, cam, tau=0.5)

    def test_tau_range_checked(self):
        block = block_of(np.ones((1, 1, 1)))
        cam = ActivationMap(class_id=0, values=np.ones((1, 1)))
        for bad in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(ValueError):
                split_by_cam(block, cam, tau=bad)
