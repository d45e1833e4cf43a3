"""Confidence-scoring of cluster centers and prototype selection.

A cluster center is scored by the trained classifier itself: the softmax
over all classes of the center's dot products with the weight rows. High
scores identify strong class features; very low scores identify context.
"""

from __future__ import annotations

import warnings
from typing import Optional

import numpy as np

from .clustering import ClusteringConfig, collect_class_features, kmeans
from .types import (
    ClassifierWeights,
    DatasetManifest,
    DimensionError,
    PrototypeBank,
    PrototypeBankEntry,
)


def class_scores(centers: np.ndarray, weights: ClassifierWeights) -> np.ndarray:
    """Softmax class probabilities for each center, shape (K, N).

    Computed with max-subtraction so large dot products cannot overflow.
    """
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim == 1:
        centers = centers[None, :]
    if centers.shape[1] != weights.channels:
        raise DimensionError(
            f"centers have {centers.shape[1]} channels, weights have {weights.channels}"
        )
    logits = centers @ weights.values.astype(np.float64).T
    if not np.isfinite(logits).all():
        raise ValueError("non-finite dot products between centers and weights")
    logits -= logits.max(axis=1, keepdims=True)
    expd = np.exp(logits)
    return expd / expd.sum(axis=1, keepdims=True)


def score_center(center: np.ndarray, weights: ClassifierWeights, class_id: int) -> float:
    """Softmax confidence of one center for one class."""
    if not 0 <= class_id < weights.num_classes:
        raise IndexError(f"class_id {class_id} out of range [0, {weights.num_classes})")
    return float(class_scores(center, weights)[0, class_id])


def select_prototypes(
    fg_centers: np.ndarray,
    bg_centers: np.ndarray,
    weights: ClassifierWeights,
    class_id: int,
    mu_f: float,
    mu_b: float,
) -> PrototypeBankEntry:
    """Gate cluster centers into class and context prototypes.

    Foreground centers with score strictly above ``mu_f`` become class
    prototypes; background centers strictly below ``mu_b`` become context
    prototypes. If nothing clears ``mu_f``, the single highest-scoring
    foreground center is kept so the class never ends up empty.
    """
    for name, value in (("mu_f", mu_f), ("mu_b", mu_b)):
        if not 0.0 < value < 1.0:
            raise ValueError(f"{name} must be in (0, 1), got {value}")
    fg_centers = np.asarray(fg_centers, dtype=np.float64)
    bg_centers = np.asarray(bg_centers, dtype=np.float64)
    if fg_centers.ndim != 2 or fg_centers.shape[0] < 1:
        raise ValueError("fg_centers must be a nonempty (K, C) matrix")
    if bg_centers.size == 0:
        bg_centers = bg_centers.reshape(0, fg_centers.shape[1])

    fg_scores = class_scores(fg_centers, weights)[:, class_id]
    fg_idx = np.flatnonzero(fg_scores > mu_f)
    fallback = False
    if fg_idx.size == 0:
        fallback = True
        fg_idx = np.array([int(fg_scores.argmax())])
        warnings.warn(
            f"class {class_id}: no foreground center scored above mu_f={mu_f}; "
            f"keeping the top scorer ({fg_scores.max():.4f})",
            stacklevel=2,
        )

    if bg_centers.shape[0]:
        bg_scores = class_scores(bg_centers, weights)[:, class_id]
        bg_idx = np.flatnonzero(bg_scores < mu_b)
    else:
        bg_scores = np.empty(0, dtype=np.float64)
        bg_idx = np.empty(0, dtype=np.int64)

    return PrototypeBankEntry(
        class_id=class_id,
        fg=fg_centers[fg_idx],
        bg=bg_centers[bg_idx] if bg_idx.size else np.empty((0, fg_centers.shape[1])),
        fg_scores=fg_scores,
        bg_scores=bg_scores,
        fg_indices=tuple(int(i) for i in fg_idx),
        bg_indices=tuple(int(i) for i in bg_idx),
        fallback_used=fallback,
    )


def build_prototype_bank(
    manifest: DatasetManifest,
    weights: ClassifierWeights,
    *,
    k: int,
    tau: float,
    mu_f: float,
    mu_b: float,
    metric: str = "cosine",
    max_iters: int = 100,
    tol: float = 1e-5,
    restarts: int = 3,
    seed: int = 0,
    sample_cap: Optional[int] = None,
    class_ids: Optional[list[int]] = None,
) -> PrototypeBank:
    """Run the full per-class pipeline: collect, cluster, score, select.

    When a class yields fewer features than ``k`` on one side, that side is
    clustered with k reduced to the bag size; an empty background bag
    yields no context prototypes.
    """
    if class_ids is None:
        class_ids = manifest.present_classes()
    entries: dict[int, PrototypeBankEntry] = {}
    for class_id in class_ids:
        fg_bag, bg_bag = collect_class_features(
            manifest, weights, class_id, tau, sample_cap=sample_cap, seed=seed
        )
        if fg_bag.shape[0] == 0:
            raise ValueError(
                f"class {class_id}: no local feature cleared the activation "
                f"threshold tau={tau}; cannot build class prototypes"
            )
        fg_cfg = ClusteringConfig(
            k=min(k, fg_bag.shape[0]),
            metric=metric,
            max_iters=max_iters,
            tol=tol,
            restarts=restarts,
            seed=seed,
        )
        fg_centers = kmeans(fg_bag, fg_cfg).centers
        if bg_bag.shape[0] > 0:
            bg_cfg = ClusteringConfig(
                k=min(k, bg_bag.shape[0]),
                metric=metric,
                max_iters=max_iters,
                tol=tol,
                restarts=restarts,
                seed=seed,
            )
            bg_centers = kmeans(bg_bag, bg_cfg).centers
        else:
            bg_centers = np.empty((0, manifest.channels))
        entries[class_id] = select_prototypes(
            fg_centers, bg_centers, weights, class_id, mu_f, mu_b
        )
    params = {
        "k": k,
        "tau": tau,
        "mu_f": mu_f,
        "mu_b": mu_b,
        "metric": metric,
        "max_iters": max_iters,
        "tol": tol,
        "restarts": restarts,
        "seed": seed,
        "sample_cap": sample_cap,
    }
    return PrototypeBank(entries=entries, params=params)
