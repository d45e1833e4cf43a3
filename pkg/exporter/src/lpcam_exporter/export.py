"""Dataset export: feature blocks, weights, labels, and ground-truth masks.

Expected dataset layout (VOC-style):

    root/
      JPEGImages/<id>.jpg|.png      images
      SegmentationClass/<id>.png    optional label masks (palette indices are
                                    class ids: 0 background, 1..N foreground,
                                    255 ignore)
      classes.txt                   one foreground class name per line
      labels.json                   optional {image_id: [class name or index]}

Image labels come from ``labels.json`` when present, otherwise from the
classes appearing in the image's segmentation mask. Everything is written
in the consumer's formats: float32 NPY feature blocks ``(H, W, C)``, a
float32 NPY weight matrix ``(N, C)``, uint8 NPY masks, and a JSON manifest
with a header and per-image records.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from PIL import Image

from .model import IMAGENET_MEAN, IMAGENET_STD, FeatureExtractor, load_checkpoint

IGNORE = 255
IMAGE_DIR = "JPEGImages"
MASK_DIR = "SegmentationClass"


class DatasetLayoutError(ValueError):
    pass


def read_class_names(dataset_root: Path) -> list[str]:
    path = dataset_root / "classes.txt"
    if not path.exists():
        raise DatasetLayoutError(f"missing {path}")
    names = [line.strip() for line in path.read_text().splitlines() if line.strip()]
    if not names:
        raise DatasetLayoutError(f"{path} lists no classes")
    return names


def list_images(dataset_root: Path) -> list[Path]:
    image_dir = dataset_root / IMAGE_DIR
    if not image_dir.is_dir():
        raise DatasetLayoutError(f"missing {image_dir}")
    images = sorted(
        p for p in image_dir.iterdir() if p.suffix.lower() in (".jpg", ".jpeg", ".png")
    )
    if not images:
        raise DatasetLayoutError(f"no images under {image_dir}")
    return images


def _load_image(path: Path) -> torch.Tensor:
    rgb = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
    rgb = (rgb - np.asarray(IMAGENET_MEAN)) / np.asarray(IMAGENET_STD)
    return torch.from_numpy(rgb.transpose(2, 0, 1).copy()).float()


def decode_mask(path: Path, num_classes: int) -> np.ndarray:
    """PNG label mask -> uint8 array with out-of-range values set to ignore."""
    values = np.asarray(Image.open(path), dtype=np.int64)
    if values.ndim == 3:  # RGB-encoded masks are not supported; take one band
        raise DatasetLayoutError(f"{path} is not a palette or grayscale label mask")
    unknown = (values > num_classes) & (values != IGNORE)
    if unknown.any():
        bad = sorted(int(v) for v in np.unique(values[unknown]))
        warnings.warn(f"{path.name}: unknown label values {bad} mapped to ignore", stacklevel=2)
        values = values.copy()
        values[unknown] = IGNORE
    return values.astype(np.uint8)


def _labels_for(
    image_id: str,
    dataset_root: Path,
    class_names: list[str],
    mask: Optional[np.ndarray],
) -> list[int]:
    labels_path = dataset_root / "labels.json"
    if labels_path.exists():
        table = json.loads(labels_path.read_text())
        if image_id not in table:
            raise DatasetLayoutError(f"labels.json has no entry for {image_id}")
        out = []
        for item in table[image_id]:
            if isinstance(item, str):
                if item not in class_names:
                    raise DatasetLayoutError(f"unknown class name {item!r} for {image_id}")
                out.append(class_names.index(item))
            else:
                out.append(int(item))
        return sorted(set(out))
    if mask is not None:
        present = np.unique(mask)
        return sorted(int(v) - 1 for v in present if 0 < v <= len(class_names))
    raise DatasetLayoutError(
        f"no labels for {image_id}: provide labels.json or a segmentation mask"
    )


def export_gt_masks(dataset_root: Path | str, out_dir: Path | str) -> dict[str, Path]:
    """Convert every segmentation PNG to an uint8 NPY mask; returns id -> path."""
    dataset_root = Path(dataset_root)
    out_dir = Path(out_dir)
    num_classes = len(read_class_names(dataset_root))
    mask_dir = dataset_root / MASK_DIR
    if not mask_dir.is_dir():
        raise DatasetLayoutError(f"missing {mask_dir}")
    (out_dir / "gt").mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    for png in sorted(mask_dir.glob("*.png")):
        mask = decode_mask(png, num_classes)
        target = out_dir / "gt" / f"{png.stem}.npy"
        with open(target, "wb") as fh:
            np.save(fh, mask, allow_pickle=False)
        written[png.stem] = target
    return written


@dataclass
class ExportResult:
    manifest_path: Path
    num_images: int
    channels: int


def export_features(
    dataset_root: Path | str,
    checkpoint: Path | str,
    out_dir: Path | str,
    flip_average: bool = False,
    batch_size: int = 4,
) -> ExportResult:
    """Run the classifier over the dataset and write the full export.

    Writes ``features/<id>.npy``, ``weights.npy``, ``gt/<id>.npy`` (when
    segmentation masks exist), and ``manifest.json``.
    """
    dataset_root = Path(dataset_root)
    out_dir = Path(out_dir)
    class_names = read_class_names(dataset_root)
    model, num_classes = load_checkpoint(checkpoint)
    if num_classes != len(class_names):
        raise DatasetLayoutError(
            f"checkpoint has {num_classes} classes but classes.txt lists {len(class_names)}"
        )
    extractor = FeatureExtractor(model)

    (out_dir / "features").mkdir(parents=True, exist_ok=True)
    weights = extractor.head_weight.numpy().astype(np.float32)
    with open(out_dir / "weights.npy", "wb") as fh:
        np.save(fh, weights, allow_pickle=False)

    mask_dir = dataset_root / MASK_DIR
    gt_paths = export_gt_masks(dataset_root, out_dir) if mask_dir.is_dir() else {}

    images = list_images(dataset_root)
    records = []
    batch: list[tuple[str, torch.Tensor]] = []

    def flush() -> None:
        if not batch:
            return
        tensors = torch.stack([t for _, t in batch])
        blocks = extractor.features(tensors, flip_average=flip_average).numpy()
        for (image_id, _), block in zip(batch, blocks):
            target = out_dir / "features" / f"{image_id}.npy"
            with open(target, "wb") as fh:
                np.save(fh, np.ascontiguousarray(block, dtype=np.float32), allow_pickle=False)
        batch.clear()

    for path in images:
        image_id = path.stem
        tensor = _load_image(path)
        if batch and (
            len(batch) >= batch_size or batch[-1][1].shape != tensor.shape
        ):
            flush()
        batch.append((image_id, tensor))
    flush()

    for path in images:
        image_id = path.stem
        gt = gt_paths.get(image_id)
        mask = np.load(gt, allow_pickle=False) if gt else None
        labels = _labels_for(image_id, dataset_root, class_names, mask)
        record = {
            "image_id": image_id,
            "labels": labels,
            "feature_path": f"features/{image_id}.npy",
        }
        if gt is not None:
            record["gt_mask_path"] = f"gt/{image_id}.npy"
        records.append(record)

    manifest = {
        "header": {
            "num_classes": len(class_names),
            "channels": extractor.channels,
            "class_names": class_names,
        },
        "records": records,
    }
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ExportResult(
        manifest_path=manifest_path, num_images=len(records), channels=extractor.channels
    )
