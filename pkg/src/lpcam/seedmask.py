"""Turn per-class activation maps into multi-class seed masks."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import numpy as np

from .maps import MapArchive
from .types import DatasetManifest, DimensionError, SeedMask, peek_shape


def upsample(values: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Bilinear resize without corner alignment.

    Source coordinates are sampled at pixel centers
    (``src = (dst + 0.5) * scale - 0.5``) and clamped at the borders, so the
    output range never leaves the input range and an identity-size resize
    returns the input values exactly.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise DimensionError(f"expected a (H, W) map, got shape {values.shape}")
    if target_h < 1 or target_w < 1:
        raise ValueError("target dimensions must be >= 1")
    src_h, src_w = values.shape

    def axis_coords(target: int, source: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coords = (np.arange(target) + 0.5) * (source / target) - 0.5
        coords = np.clip(coords, 0.0, source - 1.0)
        lo = np.floor(coords).astype(np.int64)
        hi = np.minimum(lo + 1, source - 1)
        frac = coords - lo
        return lo, hi, frac

    y0, y1, fy = axis_coords(target_h, src_h)
    x0, x1, fx = axis_coords(target_w, src_w)
    top = values[y0][:, x0] * (1.0 - fx)[None, :] + values[y0][:, x1] * fx[None, :]
    bottom = values[y1][:, x0] * (1.0 - fx)[None, :] + values[y1][:, x1] * fx[None, :]
    return top * (1.0 - fy)[:, None] + bottom * fy[:, None]


def assemble_seed(
    class_maps: Mapping[int, np.ndarray], bg_threshold: float, image_id: str = ""
) -> SeedMask:
    """Combine per-class maps into one label raster.

    A pixel is background when no class map reaches ``bg_threshold``;
    otherwise it takes the argmax class, with ties going to the lowest
    class id. Mask values are ``class_index + 1`` (0 is background).
    """
    if not class_maps:
        raise ValueError("need at least one class map")
    class_ids = sorted(class_maps)
    arrays = [np.asarray(class_maps[c], dtype=np.float64) for c in class_ids]
    shapes = {a.shape for a in arrays}
    if len(shapes) > 1:
        raise DimensionError(f"class maps have differing shapes: {sorted(shapes)}")
    stack = np.stack(arrays)
    best = stack.argmax(axis=0)  # first (lowest class id) wins ties
    peak = stack.max(axis=0)
    labels = np.asarray(class_ids, dtype=np.int64)[best] + 1
    labels[peak < bg_threshold] = 0
    return SeedMask(image_id=image_id, values=labels.astype(np.uint8))


def generate_seed_masks(
    archive: MapArchive,
    manifest: DatasetManifest,
    bg_threshold: float,
    out_dir: Path | str,
    write_pgm: bool = False,
) -> Path:
    """Assemble and write one seed mask per manifest record.

    Maps are upsampled to the ground-truth mask resolution when the record
    has one, otherwise kept at feature resolution. Masks are written as
    ``<out_dir>/<image_id>.npy`` (uint8), optionally with a PGM rendering
    alongside for quick eyeballing.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for record in manifest.records:
        maps = {c: archive.load_map(record.image_id, c).values for c in record.labels}
        if record.gt_mask_path is not None:
            gt_h, gt_w = peek_shape(record.gt_mask_path)
            maps = {c: upsample(m, gt_h, gt_w) for c, m in maps.items()}
        seed = assemble_seed(maps, bg_threshold, image_id=record.image_id)
        seed.save(out_dir / f"{record.image_id}.npy")
        if write_pgm:
            save_pgm(out_dir / f"{record.image_id}.pgm", seed.values)
    return out_dir


def save_pgm(path: Path | str, values: np.ndarray) -> None:
    """Write a uint8 raster as binary PGM (P5)."""
    values = np.ascontiguousarray(values, dtype=np.uint8)
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(values.tobytes())
