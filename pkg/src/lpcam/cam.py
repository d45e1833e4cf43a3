"""Conventional class activation maps and CAM-driven feature splitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import ActivationMap, ClassifierWeights, DimensionError, FeatureBlock


def raw_cam(block: FeatureBlock, class_weight: np.ndarray) -> np.ndarray:
    """Per-position dot product of the feature block with one weight vector.

    Returns an unnormalized (H, W) float64 score matrix.
    """
    w = np.asarray(class_weight, dtype=np.float64).reshape(-1)
    if w.shape[0] != block.channels:
        raise DimensionError(
            f"weight vector has {w.shape[0]} channels, feature block has {block.channels}"
        )
    return block.values.astype(np.float64) @ w


def normalize_map(raw: np.ndarray) -> np.ndarray:
    """ReLU then divide by the maximum; an all-nonpositive map becomes zeros.

    The division is exact at the argmax, so any map with a positive entry
    normalizes to a maximum of 1.0.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if not np.isfinite(raw).all():
        raise ValueError("cannot normalize a map containing NaN or Inf")
    pos = np.maximum(raw, 0.0)
    peak = pos.max()
    if peak > 0.0:
        return pos / peak
    return np.zeros_like(pos)


def compute_cam(block: FeatureBlock, weights: ClassifierWeights, class_id: int) -> ActivationMap:
    """Activation map for one class: normalized weighted feature response."""
    values = normalize_map(raw_cam(block, weights.class_weight(class_id)))
    return ActivationMap(class_id=class_id, values=values)


@dataclass(frozen=True)
class FgBgSplit:
    """Local features partitioned by an activation threshold.

    ``foreground`` holds the (n1, C) features at positions where the map is
    >= tau, ``background`` the (n2, C) rest; n1 + n2 == H * W.
    """

    foreground: np.ndarray
    background: np.ndarray
    tau: float


def split_by_cam(block: FeatureBlock, cam: ActivationMap, tau: float) -> FgBgSplit:
    """Partition all local features of a block by thresholding its map.

    Positions where the map equals tau exactly count as foreground.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    if cam.shape != (block.height, block.width):
        raise DimensionError(
            f"activation map shape {cam.shape} does not match block "
            f"spatial shape {(block.height, block.width)}"
        )
    features = block.local_features().astype(np.float64)
    fg_mask = (cam.values >= tau).reshape(-1)
    return FgBgSplit(
        foreground=features[fg_mask],
        background=features[~fg_mask],
        tau=float(tau),
    )
