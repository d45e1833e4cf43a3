import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpcam import DimensionError, assemble_seed, upsample
from lpcam.seedmask import save_pgm

from oracles import bilinear_reference


class TestUpsample:
    def test_constant_field_from_single_pixel(self):
        out = upsample(np.array([[0.7]]), 3, 5)
        assert out.shape == (3, 5)
        assert np.array_equal(out, np.full((3, 5), 0.7))

    def test_identity_size_returns_input_exactly(self):
        rng = np.random.default_rng(0)
        values = rng.standard_normal((4, 6))
        assert np.array_equal(upsample(values, 4, 6), values)

    def test_2x2_to_4x4_frozen_oracle(self):
        # hand-computed with half-pixel centers and border clamping
        src = np.array([[1.0, 2.0], [3.0, 4.0]])
        expected = np.array(
            [
                [1.0, 1.25, 1.75, 2.0],
                [1.5, 1.75, 2.25, 2.5],
                [2.5, 2.75, 3.25, 3.5],
                [3.0, 3.25, 3.75, 4.0],
            ]
        )
        assert np.allclose(upsample(src, 4, 4), expected, atol=1e-6)

    def test_matches_reference_on_random_sizes(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            h, w = rng.integers(1, 6, size=2)
            th, tw = rng.integers(1, 12, size=2)
            src = rng.standard_normal((h, w))
            assert np.allclose(
                upsample(src, th, tw), bilinear_reference(src, th, tw), atol=1e-9
            )

    def test_range_containment(self):
        rng = np.random.default_rng(2)
        src = rng.uniform(-3, 5, size=(3, 4))
        out = upsample(src, 17, 11)
        assert out.min() >= src.min() - 1e-12
        assert out.max() <= src.max() + 1e-12

    def test_bad_target_rejected(self):
        with pytest.raises(ValueError):
            upsample(np.ones((2, 2)), 0, 3)


class TestAssembleSeed:
    def test_single_class_above_threshold(self):
        mask = assemble_seed({2: np.full((3, 3), 0.9)}, bg_threshold=0.3)
        assert np.array_equal(mask.values, np.full((3, 3), 3, dtype=np.uint8))

    def test_single_class_below_threshold(self):
        mask = assemble_seed({0: np.full((2, 2), 0.1)}, bg_threshold=0.3)
        assert np.array_equal(mask.values, np.zeros((2, 2), dtype=np.uint8))

    def test_argmax_picks_stronger_class(self):
        maps = {0: np.array([[0.4]]), 1: np.array([[0.6]])}
        mask = assemble_seed(maps, bg_threshold=0.3)
        assert mask.values[0, 0] == 2  # class index 1 -> label 2

    def test_tie_breaks_to_lowest_class_id(self):
        maps = {3: np.array([[0.5]]), 1: np.array([[0.5]])}
        mask = assemble_seed(maps, bg_threshold=0.3)
        assert mask.values[0, 0] == 2  # class index 1 wins the tie

    def test_supply_order_irrelevant(self):
        rng = np.random.default_rng(3)
        maps = {c: rng.uniform(0, 1, (5, 5)) for c in (4, 0, 2)}
        a = assemble_seed(dict(sorted(maps.items())), 0.3)
        b = assemble_seed(dict(sorted(maps.items(), reverse=True)), 0.3)
        assert np.array_equal(a.values, b.values)

    def test_labels_subset_of_present_classes(self):
        rng = np.random.default_rng(4)
        maps = {c: rng.uniform(0, 1, (6, 6)) for c in (1, 5)}
        mask = assemble_seed(maps, 0.5)
        assert set(np.unique(mask.values)) <= {0, 2, 6}

    @given(st.floats(min_value=0.05, max_value=0.95), st.floats(min_value=0.0, max_value=0.5))
    @settings(max_examples=30, deadline=None)
    def test_raising_threshold_grows_background(self, threshold, delta):
        rng = np.random.default_rng(5)
        maps = {0: rng.uniform(0, 1, (8, 8)), 1: rng.uniform(0, 1, (8, 8))}
        low = assemble_seed(maps, threshold)
        high = assemble_seed(maps, min(threshold + delta, 1.0))
        assert (high.values == 0).sum() >= (low.values == 0).sum()

    def test_shape_mismatch_fatal(self):
        with pytest.raises(DimensionError):
            assemble_seed({0: np.ones((2, 2)), 1: np.ones((3, 3))}, 0.3)

    def test_empty_maps_rejected(self):
        with pytest.raises(ValueError):
            assemble_seed({}, 0.3)


class TestPgm:
    def test_header_and_payload(self, tmp_path):
        values = np.arange(6, dtype=np.uint8).reshape(2, 3)
        save_pgm(tmp_path / "m.pgm", values)
        data = (tmp_path / "m.pgm").read_bytes()
        assert data.startswith(b"P5\n3 2\n255\n")
        assert data.endswith(values.tobytes())
