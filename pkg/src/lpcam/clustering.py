"""Per-class feature collection and K-Means clustering of local features.

Two distance modes are supported:

* ``cosine`` — spherical K-Means: inputs are unit-normalized, centers are
  renormalized after every mean update, and the objective is
  ``sum(1 - cos(x, center(x)))``.
* ``euclidean`` — standard Lloyd iterations with the summed squared
  distance objective.

Initialization is k-means++ seeding under the active metric. Runs are
restarted ``restarts`` times from independent seeds and the lowest-objective
result wins. An empty cluster is repaired by re-seeding its center at the
point currently farthest from its assigned center.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .cam import compute_cam, split_by_cam
from .types import ClassifierWeights, DatasetManifest, FeatureBlock

METRICS = ("cosine", "euclidean")


@dataclass(frozen=True)
class ClusteringConfig:
    """Knobs for one clustering run.

    ``sample_cap`` bounds the number of images consumed per class during
    feature collection; ``None`` uses every image of the class.
    """

    k: int
    metric: str = "cosine"
    max_iters: int = 100
    tol: float = 1e-5
    restarts: int = 3
    seed: int = 0
    sample_cap: Optional[int] = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.sample_cap is not None and self.sample_cap < 1:
            raise ValueError("sample_cap must be >= 1 or None")


@dataclass
class ClusterResult:
    """Cluster centers plus bookkeeping from the winning restart."""

    centers: np.ndarray
    counts: np.ndarray
    objective: float
    iterations_run: int
    objective_history: list[float] = field(default_factory=list)
    dropped_zero_norm: int = 0

    def save(self, path: Path | str, config: Optional[ClusteringConfig] = None) -> None:
        """Write centers as NPY with a JSON sidecar next to it."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            np.save(fh, self.centers, allow_pickle=False)
        sidecar = {
            "counts": [int(c) for c in self.counts],
            "objective": self.objective,
            "iterations_run": self.iterations_run,
            "dropped_zero_norm": self.dropped_zero_norm,
            "config": asdict(config) if config is not None else None,
        }
        with open(path.with_suffix(".json"), "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: Path | str) -> "ClusterResult":
        path = Path(path)
        centers = np.load(path, allow_pickle=False)
        with open(path.with_suffix(".json")) as fh:
            sidecar = json.load(fh)
        return cls(
            centers=centers,
            counts=np.asarray(sidecar["counts"], dtype=np.int64),
            objective=float(sidecar["objective"]),
            iterations_run=int(sidecar["iterations_run"]),
            dropped_zero_norm=int(sidecar.get("dropped_zero_norm", 0)),
        )


def collect_class_features(
    manifest: DatasetManifest,
    weights: ClassifierWeights,
    class_id: int,
    tau: float,
    sample_cap: Optional[int] = None,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Gather foreground and background local features for one class.

    For every image labeled with ``class_id`` (uniformly subsampled to
    ``sample_cap`` images without replacement when a cap is set), the class
    activation map is thresholded at ``tau`` and the block's local features
    are appended to the foreground or background bag accordingly.

    Returns ``(fg, bg)`` as (n, C) float64 arrays; either may be empty.
    """
    records = manifest.records_with_class(class_id)
    if not records:
        raise ValueError(f"class {class_id} has no training images in the manifest")
    if sample_cap is not None and len(records) > sample_cap:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(records), size=sample_cap, replace=False))
        records = [records[i] for i in keep]

    fg_parts: list[np.ndarray] = []
    bg_parts: list[np.ndarray] = []
    for rec in records:
        block = FeatureBlock.from_file(rec.feature_path)
        cam = compute_cam(block, weights, class_id)
        split = split_by_cam(block, cam, tau)
        if split.foreground.size:
            fg_parts.append(split.foreground)
        if split.background.size:
            bg_parts.append(split.background)

    channels = manifest.channels
    fg = np.concatenate(fg_parts) if fg_parts else np.empty((0, channels), dtype=np.float64)
    bg = np.concatenate(bg_parts) if bg_parts else np.empty((0, channels), dtype=np.float64)
    return fg, bg


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _cost_matrix(points: np.ndarray, centers: np.ndarray, metric: str) -> np.ndarray:
    """Per-point per-center cost: squared distance or ``1 - cos``.

    ``points`` and ``centers`` are already unit rows in cosine mode.
    """
    if metric == "cosine":
        return np.maximum(1.0 - points @ centers.T, 0.0)
    sq = (
        (points * points).sum(axis=1)[:, None]
        - 2.0 * (points @ centers.T)
        + (centers * centers).sum(axis=1)[None, :]
    )
    return np.maximum(sq, 0.0)


def _kmeans_pp(points: np.ndarray, k: int, metric: str, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++ seeding.

    Each next center is drawn with probability proportional to the point's
    current cost to its nearest center; several candidates are sampled and
    the one that lowers the total cost most is kept.
    """
    n = points.shape[0]
    candidates = 2 + int(np.log2(k))
    first = int(rng.integers(n))
    centers = [first]
    cost = _cost_matrix(points, points[first][None, :], metric)[:, 0]
    for _ in range(1, k):
        total = cost.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
            cost = np.minimum(cost, _cost_matrix(points, points[idx][None, :], metric)[:, 0])
            centers.append(idx)
            continue
        draws = rng.choice(n, size=candidates, p=cost / total)
        best_idx, best_cost, best_total = -1, cost, np.inf
        for idx in draws:
            new_cost = np.minimum(cost, _cost_matrix(points, points[int(idx)][None, :], metric)[:, 0])
            new_total = new_cost.sum()
            if new_total < best_total:
                best_idx, best_cost, best_total = int(idx), new_cost, new_total
        centers.append(best_idx)
        cost = best_cost
    return points[centers].copy()


def _update_centers(
    points: np.ndarray,
    labels: np.ndarray,
    centers: np.ndarray,
    min_costs: np.ndarray,
    metric: str,
) -> np.ndarray:
    """Mean update (renormalized in cosine mode) with empty-cluster repair."""
    k, dim = centers.shape
    new = np.zeros_like(centers)
    counts = np.bincount(labels, minlength=k)
    np.add.at(new, labels, points)
    empty = []
    for j in range(k):
        if counts[j] == 0:
            empty.append(j)
            continue
        new[j] /= counts[j]
        if metric == "cosine":
            norm = np.linalg.norm(new[j])
            if norm > 0.0:
                new[j] /= norm
            else:
                # Antipodal degenerate mean; fall back to the old direction.
                new[j] = centers[j]
    if empty:
        # Re-seed each empty center at the point farthest from its assigned
        # center, claiming points greedily so two empty clusters never pick
        # the same one.
        order = np.argsort(min_costs)[::-1]
        taken = 0
        for j in empty:
            new[j] = points[order[taken]]
            taken += 1
    return new


def _single_move_refine(
    points: np.ndarray, labels: np.ndarray, k: int, metric: str, max_moves: int = 100
) -> int:
    """Greedy single-point reassignment until no move improves the objective.

    Both objectives admit exact move deltas from per-cluster (sum, count)
    pairs: the spherical cost is ``n - sum_j ||s_j||`` over unit points and
    the euclidean cost is ``sum ||x||^2 - sum_j ||s_j||^2 / n_j``, so each
    candidate move is scored in closed form. This escapes the single-point
    local minima that plain mean updates converge to. Modifies ``labels``
    in place and returns the number of moves applied.
    """
    n = points.shape[0]
    sums = np.zeros((k, points.shape[1]))
    np.add.at(sums, labels, points)
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    sq_point = (points * points).sum(axis=1)
    moves = 0
    while moves < max_moves:
        dots = points @ sums.T  # (n, k)
        s_sq = (sums * sums).sum(axis=1)  # (k,)
        a = counts[labels]
        own = np.arange(n), labels
        if metric == "cosine":
            norm_s = np.sqrt(np.maximum(s_sq, 0.0))
            # gain of adding x to cluster j, for all j
            add = np.sqrt(np.maximum(s_sq[None, :] + 2.0 * dots + sq_point[:, None], 0.0))
            gain_add = add - norm_s[None, :]
            removed = np.sqrt(
                np.maximum(s_sq[labels] - 2.0 * dots[own] + sq_point, 0.0)
            )
            gain_remove = removed - norm_s[labels]
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                add = (s_sq[None, :] + 2.0 * dots + sq_point[:, None]) / (counts[None, :] + 1.0)
                gain_add = add - np.where(counts > 0, s_sq / counts, 0.0)[None, :]
                removed_sq = s_sq[labels] - 2.0 * dots[own] + sq_point
                gain_remove = np.where(
                    a > 1, removed_sq / np.maximum(a - 1.0, 1.0), -np.inf
                ) - s_sq[labels] / a
        delta = gain_remove[:, None] + gain_add  # improvement when positive
        delta[own] = -np.inf
        delta[a <= 1, :] = -np.inf  # never empty a cluster
        flat = int(delta.argmax())
        point, target = divmod(flat, k)
        if not delta[point, target] > 1e-10:
            break
        source = labels[point]
        sums[source] -= points[point]
        sums[target] += points[point]
        counts[source] -= 1
        counts[target] += 1
        labels[point] = target
        moves += 1
    return moves


def _lloyd_converge(
    points: np.ndarray,
    centers: np.ndarray,
    config: ClusteringConfig,
    prev_obj: Optional[float],
    history: list[float],
    iterations_left: int,
) -> tuple[np.ndarray, np.ndarray, float, int]:
    labels = np.zeros(points.shape[0], dtype=np.int64)
    objective = 0.0
    iterations = 0
    for iteration in range(iterations_left):
        costs = _cost_matrix(points, centers, config.metric)
        labels = costs.argmin(axis=1)
        min_costs = costs[np.arange(points.shape[0]), labels]
        objective = float(min_costs.sum())
        assert prev_obj is None or objective <= prev_obj + 1e-9 * max(1.0, abs(prev_obj)), (
            f"objective increased: {prev_obj} -> {objective}"
        )
        history.append(objective)
        iterations = iteration + 1
        if prev_obj is not None and prev_obj - objective < config.tol:
            break
        prev_obj = objective
        if iteration < iterations_left - 1:
            centers = _update_centers(points, labels, centers, min_costs, config.metric)
    return centers, labels, objective, iterations


def _centers_from_labels(
    points: np.ndarray, labels: np.ndarray, centers: np.ndarray, metric: str
) -> np.ndarray:
    costs = _cost_matrix(points, centers, metric)
    min_costs = costs[np.arange(points.shape[0]), labels]
    return _update_centers(points, labels, centers, min_costs, metric)


def _lloyd_run(
    points: np.ndarray, config: ClusteringConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, float, int, list[float]]:
    centers = _kmeans_pp(points, config.k, config.metric, rng)
    history: list[float] = []
    iterations_used = 0
    prev_obj: Optional[float] = None
    labels = np.zeros(points.shape[0], dtype=np.int64)
    objective = 0.0
    # Alternate mean updates with single-point refinement until neither
    # improves; every recorded objective stays non-increasing.
    for _ in range(10):
        left = max(1, config.max_iters - iterations_used)
        centers, labels, objective, used = _lloyd_converge(
            points, centers, config, prev_obj, history, left
        )
        iterations_used += used
        if iterations_used >= config.max_iters:
            break
        moved = _single_move_refine(points, labels, config.k, config.metric)
        if moved == 0:
            break
        centers = _centers_from_labels(points, labels, centers, config.metric)
        costs = _cost_matrix(points, centers, config.metric)
        refined = float(costs[np.arange(points.shape[0]), labels].sum())
        prev_obj = min(objective, refined)
    else:
        # Alternation budget exhausted right after a refinement: resync the
        # assignment and objective to the final centers.
        costs = _cost_matrix(points, centers, config.metric)
        labels = costs.argmin(axis=1)
        objective = float(costs[np.arange(points.shape[0]), labels].sum())
        history.append(objective)
    return centers, labels, objective, iterations_used, history


def kmeans(features: np.ndarray, config: ClusteringConfig) -> ClusterResult:
    """Best-of-restarts K-Means over (n, C) feature rows.

    Raises if there are fewer usable features than clusters. In cosine mode
    zero-norm rows cannot be placed on the unit sphere and are excluded with
    a warning; the exclusion count is reported on the result.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError(f"features must be (n, C), got shape {features.shape}")
    if not np.isfinite(features).all():
        raise ValueError("features contain NaN or Inf")

    dropped = 0
    points = features
    if config.metric == "cosine":
        norms = np.linalg.norm(features, axis=1)
        usable = norms > 0.0
        dropped = int((~usable).sum())
        if dropped:
            warnings.warn(
                f"excluded {dropped} zero-norm feature(s) from cosine clustering",
                stacklevel=2,
            )
        points = _unit_rows(features[usable])

    if points.shape[0] < config.k:
        raise ValueError(
            f"{points.shape[0]} usable features is fewer than k={config.k}; use a smaller k"
        )

    seeds = np.random.SeedSequence(config.seed).spawn(config.restarts)
    best: Optional[tuple[np.ndarray, np.ndarray, float, int, list[float]]] = None
    for child in seeds:
        run = _lloyd_run(points, config, np.random.default_rng(child))
        if best is None or run[2] < best[2]:
            best = run
    assert best is not None
    centers, labels, objective, iterations, history = best
    return ClusterResult(
        centers=centers,
        counts=np.bincount(labels, minlength=config.k),
        objective=objective,
        iterations_run=iterations,
        objective_history=history,
        dropped_zero_norm=dropped,
    )
