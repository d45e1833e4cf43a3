"""Prototype-similarity heatmaps and batch map generation.

A prototype slid over the feature block yields one cosine-similarity map
per prototype. Class prototype maps are averaged into a foreground map,
context prototype maps into a background map, and the normalized
difference is the final heatmap. Averaging happens before any
normalization, so weakly-activated (non-discriminative) object regions
keep values comparable to strongly-activated ones.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from .cam import compute_cam, normalize_map
from .types import (
    ActivationMap,
    ClassifierWeights,
    DatasetManifest,
    DimensionError,
    FeatureBlock,
    PrototypeBank,
    PrototypeBankEntry,
    load_array,
    save_array,
)

MAP_KINDS = ("cam", "lpcam")
MODES = ("full", "fg_only")


def cosine_maps_raw(values: np.ndarray, prototypes: np.ndarray) -> np.ndarray:
    """Unclamped cosine similarity between every position and every prototype.

    ``values`` is (H, W, C), ``prototypes`` (K, C); result is (H, W, K).
    Zero-norm local features get similarity 0 to every prototype.
    """
    values = np.asarray(values, dtype=np.float64)
    prototypes = np.asarray(prototypes, dtype=np.float64)
    p_norms = np.linalg.norm(prototypes, axis=1)
    if (p_norms == 0.0).any():
        raise ValueError("prototype with zero Euclidean norm")
    f_norms = np.linalg.norm(values, axis=2)
    dots = values @ prototypes.T
    denom = f_norms[:, :, None] * p_norms[None, None, :]
    out = np.zeros_like(dots)
    np.divide(dots, denom, out=out, where=denom > 0.0)
    return out


def similarity_map(block: FeatureBlock, prototype: np.ndarray) -> np.ndarray:
    """Cosine similarity of one prototype at every position, clamped to [-1, 1]."""
    prototype = np.asarray(prototype, dtype=np.float64).reshape(-1)
    if prototype.shape[0] != block.channels:
        raise DimensionError(
            f"prototype has {prototype.shape[0]} channels, block has {block.channels}"
        )
    raw = cosine_maps_raw(block.values, prototype[None, :])[:, :, 0]
    return np.clip(raw, -1.0, 1.0)


def aggregate_fg_bg(
    block: FeatureBlock, entry: PrototypeBankEntry
) -> tuple[np.ndarray, np.ndarray]:
    """Mean similarity map over class prototypes and over context prototypes.

    With no context prototypes the background map is all zeros, so the
    difference map degrades gracefully to the foreground-only variant.
    """
    fg = np.clip(cosine_maps_raw(block.values, entry.fg), -1.0, 1.0).mean(axis=2)
    if entry.k2 > 0:
        bg = np.clip(cosine_maps_raw(block.values, entry.bg), -1.0, 1.0).mean(axis=2)
    else:
        bg = np.zeros_like(fg)
    return fg, bg


def compute_lpcam(
    block: FeatureBlock, entry: PrototypeBankEntry, mode: str = "full"
) -> ActivationMap:
    """Prototype-based activation map for one class.

    ``full`` subtracts the context map from the class map before the usual
    ReLU/max normalization; ``fg_only`` normalizes the class map alone.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    fg, bg = aggregate_fg_bg(block, entry)
    raw = fg - bg if mode == "full" else fg
    return ActivationMap(class_id=entry.class_id, values=normalize_map(raw))


class MapArchive:
    """Directory of per-(image, class) activation maps plus a JSON index.

    Layout: ``<root>/maps/<image_id>/<class_id>.npy`` (float32) and
    ``<root>/index.json``.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)

    @property
    def index_path(self) -> Path:
        return self.root / "index.json"

    def map_path(self, image_id: str, class_id: int) -> Path:
        return self.root / "maps" / image_id / f"{class_id}.npy"

    def write_map(self, image_id: str, amap: ActivationMap) -> None:
        save_array(self.map_path(image_id, amap.class_id), amap.values.astype(np.float32))

    def load_map(self, image_id: str, class_id: int) -> ActivationMap:
        return ActivationMap(class_id=class_id, values=load_array(self.map_path(image_id, class_id)))

    def write_index(self, index: dict) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        with open(self.index_path, "w") as fh:
            json.dump(index, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def read_index(self) -> dict:
        with open(self.index_path) as fh:
            return json.load(fh)


def batch_generate(
    manifest: DatasetManifest,
    out_dir: Path | str,
    *,
    map_kind: str,
    weights: Optional[ClassifierWeights] = None,
    bank: Optional[PrototypeBank] = None,
    mode: str = "full",
    workers: int = 1,
) -> MapArchive:
    """Write one activation map per (image, present class) pair.

    Output is keyed on (image_id, class_id) and each map depends only on
    its own inputs, so the archive bytes are independent of worker count.
    """
    if map_kind not in MAP_KINDS:
        raise ValueError(f"map_kind must be one of {MAP_KINDS}, got {map_kind!r}")
    if map_kind == "cam" and weights is None:
        raise ValueError("map_kind 'cam' requires classifier weights")
    if map_kind == "lpcam":
        if bank is None:
            raise ValueError("map_kind 'lpcam' requires a prototype bank")
        missing = bank.missing_classes(manifest.present_classes())
        if missing:
            raise ValueError(f"prototype bank has no entry for class ids {missing}")

    archive = MapArchive(out_dir)

    def run_image(record) -> None:
        block = FeatureBlock.from_file(record.feature_path)
        for class_id in record.labels:
            if map_kind == "cam":
                amap = compute_cam(block, weights, class_id)
            else:
                amap = compute_lpcam(block, bank.entry(class_id), mode=mode)
            archive.write_map(record.image_id, amap)

    if workers <= 1:
        for record in manifest.records:
            run_image(record)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_image, manifest.records))

    archive.write_index(
        {
            "map_kind": map_kind,
            "mode": mode if map_kind == "lpcam" else None,
            "images": {r.image_id: sorted(r.labels) for r in manifest.records},
        }
    )
    return archive
