import numpy as np
import pytest

from lpcam import (
    ClassifierWeights,
    ClusteringConfig,
    ClusterResult,
    DatasetManifest,
    FeatureBlock,
    ImageRecord,
    collect_class_features,
    kmeans,
)

from oracles import exhaustive_two_means


def match_center_sets(a: np.ndarray, b: np.ndarray, atol=1e-6) -> bool:
    """True if the rows of a and b agree as multisets (greedy matching)."""
    if a.shape != b.shape:
        return False
    remaining = list(range(b.shape[0]))
    for row in a:
        dists = [np.abs(row - b[j]).max() for j in remaining]
        best = int(np.argmin(dists))
        if dists[best] > atol:
            return False
        remaining.pop(best)
    return True


class TestKmeansBasics:
    def test_k1_euclidean_center_is_mean(self):
        rng = np.random.default_rng(0)
        points = rng.standard_normal((20, 5))
        result = kmeans(points, ClusteringConfig(k=1, metric="euclidean", seed=1))
        assert np.allclose(result.centers[0], points.mean(axis=0), atol=1e-9)
        assert result.counts.tolist() == [20]

    def test_antipodal_direction_groups_cosine(self):
        rng = np.random.default_rng(2)
        base = np.array([1.0, 2.0, -0.5, 0.3])
        group_a = base + rng.normal(0, 0.01, size=(3, 4))
        group_b = -base + rng.normal(0, 0.01, size=(3, 4))
        # construction check: the groups are tight in angle
        unit = lambda x: x / np.linalg.norm(x, axis=1, keepdims=True)
        ua, ub = unit(group_a), unit(group_b)
        assert (ua @ ua.T).min() > 0.99 and (ub @ ub.T).min() > 0.99
        result = kmeans(np.concatenate([group_a, group_b]), ClusteringConfig(k=2, seed=3))
        assert sorted(result.counts.tolist()) == [3, 3]
        assert result.objective < 0.01

    @pytest.mark.parametrize("metric", ["cosine", "euclidean"])
    def test_matches_exhaustive_global_optimum(self, metric):
        rng = np.random.default_rng(17)
        for _ in range(5):
            points = rng.standard_normal((7, 3))
            config = ClusteringConfig(k=2, metric=metric, restarts=10, seed=5)
            result = kmeans(points, config)
            oracle = exhaustive_two_means(points, metric)
            assert result.objective == pytest.approx(oracle, abs=1e-6)

    def test_too_few_features_raises(self):
        with pytest.raises(ValueError, match="smaller k"):
            kmeans(np.ones((2, 3)), ClusteringConfig(k=5))

    def test_zero_norm_features_excluded_with_warning(self):
        points = np.concatenate([np.zeros((2, 3)), np.eye(3)])
        with pytest.warns(UserWarning, match="zero-norm"):
            result = kmeans(points, ClusteringConfig(k=3, metric="cosine", seed=0))
        assert result.dropped_zero_norm == 2
        assert result.counts.sum() == 3

    def test_rejects_non_finite(self):
        bad = np.ones((5, 2))
        bad[0, 0] = np.inf
        with pytest.raises(ValueError, match="NaN or Inf"):
            kmeans(bad, ClusteringConfig(k=2))


class TestKmeansInvariants:
    def test_objective_history_non_increasing(self):
        rng = np.random.default_rng(4)
        for metric in ("cosine", "euclidean"):
            for trial in range(10):
                points = rng.standard_normal((40, 6))
                result = kmeans(
                    points, ClusteringConfig(k=4, metric=metric, seed=trial, restarts=1)
                )
                history = result.objective_history
                assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))

    def test_determinism_same_seed(self):
        rng = np.random.default_rng(6)
        points = rng.standard_normal((30, 4))
        config = ClusteringConfig(k=3, seed=123)
        r1, r2 = kmeans(points, config), kmeans(points, config)
        assert np.array_equal(r1.centers, r2.centers)
        assert np.array_equal(r1.counts, r2.counts)
        assert r1.objective == r2.objective

    def test_spherical_centers_unit_norm(self):
        rng = np.random.default_rng(8)
        points = rng.standard_normal((50, 5)) * 10
        result = kmeans(points, ClusteringConfig(k=4, metric="cosine", seed=2))
        norms = np.linalg.norm(result.centers, axis=1)
        assert np.allclose(norms, 1.0, atol=1e-6)

    def test_counts_sum_to_input_size(self):
        rng = np.random.default_rng(10)
        points = rng.standard_normal((33, 3))
        result = kmeans(points, ClusteringConfig(k=5, metric="euclidean", seed=0))
        assert result.counts.sum() == 33

    @pytest.mark.parametrize("metric", ["cosine", "euclidean"])
    def test_permutation_changes_only_labeling(self, metric):
        # Well-separated groups (in angle and in position): the global
        # optimum is unique, so with restarts the recovered center multiset
        # must not depend on the input row order.
        rng = np.random.default_rng(12)
        templates = 5.0 * np.array(
            [[1, 0, 0, 0], [0, 1, 0, 0], [-1, -1, 2, 0]], dtype=np.float64
        )
        groups = [t + rng.normal(0, 0.05, size=(8, 4)) for t in templates]
        points = np.concatenate(groups)
        config = ClusteringConfig(k=3, metric=metric, seed=0, restarts=5)
        result = kmeans(points, config)
        permuted = points[rng.permutation(points.shape[0])]
        result_p = kmeans(permuted, config)
        assert match_center_sets(result.centers, result_p.centers, atol=1e-6)


def manifest_with_blocks(tmp_path, blocks, labels_per_image, channels):
    records = []
    for i, (values, labels) in enumerate(zip(blocks, labels_per_image)):
        path = tmp_path / f"b{i}.npy"
        FeatureBlock(np.asarray(values, dtype=np.float32)).save(path)
        records.append(ImageRecord(image_id=f"b{i}", labels=tuple(labels), feature_path=path))
    num_classes = max(max(ls) for ls in labels_per_image) + 1
    return DatasetManifest(
        num_classes=num_classes,
        channels=channels,
        class_names=tuple(f"c{i}" for i in range(num_classes)),
        records=tuple(records),
        root=tmp_path,
    )


class TestCollectClassFeatures:
    def test_degenerate_all_foreground(self, tmp_path):
        # constant positive response: the map is 1.0 everywhere
        block = np.ones((3, 4, 2))
        manifest = manifest_with_blocks(tmp_path, [block], [(0,)], channels=2)
        weights = ClassifierWeights(np.ones((1, 2), dtype=np.float32))
        fg, bg = collect_class_features(manifest, weights, 0, tau=0.1)
        assert fg.shape == (12, 2)
        assert bg.shape == (0, 2)

    def test_count_conservation_over_two_images(self, tmp_path):
        rng = np.random.default_rng(1)
        blocks = [rng.standard_normal((2, 2, 3)) for _ in range(2)]
        manifest = manifest_with_blocks(tmp_path, blocks, [(0,), (0,)], channels=3)
        weights = ClassifierWeights(rng.standard_normal((1, 3)).astype(np.float32))
        fg, bg = collect_class_features(manifest, weights, 0, tau=0.3)
        assert fg.shape[0] + bg.shape[0] == 8

    def test_sample_cap_deterministic(self, tmp_path):
        rng = np.random.default_rng(2)
        blocks = [rng.standard_normal((1, 1, 2)) for _ in range(150)]
        manifest = manifest_with_blocks(tmp_path, blocks, [(0,)] * 150, channels=2)
        weights = ClassifierWeights(np.ones((1, 2), dtype=np.float32))
        fg1, bg1 = collect_class_features(manifest, weights, 0, tau=0.5, sample_cap=100, seed=9)
        fg2, bg2 = collect_class_features(manifest, weights, 0, tau=0.5, sample_cap=100, seed=9)
        assert fg1.shape[0] + bg1.shape[0] == 100
        assert np.array_equal(fg1, fg2) and np.array_equal(bg1, bg2)
        fg3, _ = collect_class_features(manifest, weights, 0, tau=0.5, sample_cap=100, seed=10)
        assert fg3.shape != fg1.shape or not np.array_equal(fg3, fg1)

    def test_unknown_class_raises(self, tmp_path):
        manifest = manifest_with_blocks(tmp_path, [np.ones((1, 1, 2))], [(0,)], channels=2)
        weights = ClassifierWeights(np.ones((2, 2), dtype=np.float32))
        with pytest.raises(ValueError, match="class 1"):
            collect_class_features(manifest, weights, 1, tau=0.1)


class TestSerialization:
    def test_round_trip_with_sidecar(self, tmp_path):
        rng = np.random.default_rng(0)
        points = rng.standard_normal((25, 4))
        config = ClusteringConfig(k=3, seed=1)
        result = kmeans(points, config)
        result.save(tmp_path / "centers.npy", config)
        loaded = ClusterResult.load(tmp_path / "centers.npy")
        assert np.array_equal(loaded.centers, result.centers)
        assert np.array_equal(loaded.counts, result.counts)
        assert loaded.objective == result.objective
        import json

        sidecar = json.loads((tmp_path / "centers.json").read_text())
        assert sidecar["config"]["k"] == 3
        assert sidecar["config"]["metric"] == "cosine"


class TestConfigValidation:
    def test_bad_values_rejected(self):
        with pytest.raises(ValueError):
            ClusteringConfig(k=0)
        with pytest.raises(ValueError):
            ClusteringConfig(k=1, metric="manhattan")
        with pytest.raises(ValueError):
            ClusteringConfig(k=1, restarts=0)
        with pytest.raises(ValueError):
            ClusteringConfig(k=1, tol=-1.0)
        with pytest.raises(ValueError):
            ClusteringConfig(k=1, sample_cap=0)
