"""Procedural desk-scale benchmark with planted local semantics.

Each class owns four semantic families: a discriminative object part
(think "head"), a non-discriminative part ("body"), a class-common
component carried by both parts ("sheep-ness"), and a co-occurring context
patch ("rails" next to "train"); one extra family is generic background.
A family occupies its own small channel block. Every object pixel spreads
a fixed spike mass between its part's block and the class-common block
with a random convex mixture, on top of a shared positive baseline. Three
consequences:

* Within a part, features form a wide angular cloud, so K-Means splits
  big families into several centers in proportion to their mass instead of
  tie-breaking between degenerate duplicates.
* The two object parts stay more similar to each other than to context,
  so averaged prototype-similarity maps cover the whole object even when
  the two parts end up with different numbers of cluster centers.
* The shared baseline keeps cosine similarity between any two semantics
  substantially positive, like post-ReLU encoder features.

The classifier weights are constant within each channel block and solved
so the raw response of any pixel equals its family's planted target:
large on the class's discriminative part, small on its non-discriminative
one, and near-floor elsewhere. A conventional activation map therefore
covers only the discriminative part of each object, while prototype-based
maps recover the whole object and the subtracted context term removes the
baseline-similarity false positives. Ground-truth masks mark object boxes
only; context patches are background.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .types import ClassifierWeights, DatasetManifest, ImageRecord, save_array


@dataclass(frozen=True)
class SynthConfig:
    num_images: int = 20
    num_classes: int = 3
    feat_h: int = 16
    feat_w: int = 16
    mask_scale: int = 4
    channels_per_family: int = 3
    mixture_alpha: float = 4.0  # Dirichlet concentration of within-family mixtures
    share_common: float = 0.5  # spike fraction object parts put on the class-common block
    noise: float = 0.03
    baseline: float = 0.115
    spike: float = 1.0
    # Raw classifier responses planted for each semantic family. The ratios
    # fix the conventional map's normalized levels (0.25 at the
    # non-discriminative part, near-floor elsewhere); the absolute scale
    # keeps cluster-center softmax confidences sharp even after unit
    # normalization.
    target_disc: float = 24.0
    target_nondisc: float = 6.0
    target_context: float = 1.5
    target_floor: float = 1.5
    two_class_every: int = 4  # every k-th image carries a second class
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_images < 1 or self.num_classes < 1:
            raise ValueError("num_images and num_classes must be positive")
        if self.feat_h < 12 or self.feat_w < 12:
            raise ValueError("feature grid must be at least 12x12 to fit objects")
        if self.mask_scale < 1:
            raise ValueError("mask_scale must be >= 1")
        if self.channels_per_family < 1:
            raise ValueError("channels_per_family must be >= 1")
        if not 0.0 <= self.share_common < 1.0:
            raise ValueError("share_common must be in [0, 1)")

    @property
    def num_families(self) -> int:
        # disc, nondisc, context, class-common per class, plus background
        return 4 * self.num_classes + 1

    @property
    def channels(self) -> int:
        return self.num_families * self.channels_per_family

    def family_index(self, kind: str, class_id: int = 0) -> int:
        n = self.num_classes
        return {
            "disc": class_id,
            "nondisc": n + class_id,
            "context": 2 * n + class_id,
            "common": 3 * n + class_id,
            "background": 4 * n,
        }[kind]

    def family_block(self, family: int) -> slice:
        m = self.channels_per_family
        return slice(family * m, (family + 1) * m)


def family_means(config: SynthConfig) -> np.ndarray:
    """Mean directions: one row per family.

    Object-part rows (disc/nondisc) include their class-common share, so
    they are the expected feature of a pixel of that part.
    """
    means = np.full((config.num_families, config.channels), config.baseline)
    m = config.channels_per_family
    rho = config.share_common
    for class_id in range(config.num_classes):
        common = config.family_block(config.family_index("common", class_id))
        for kind in ("disc", "nondisc"):
            g = config.family_index(kind, class_id)
            means[g, config.family_block(g)] += (1.0 - rho) * config.spike / m
            means[g, common] += rho * config.spike / m
        ctx = config.family_index("context", class_id)
        means[ctx, config.family_block(ctx)] += config.spike / m
        gc = config.family_index("common", class_id)
        means[gc, config.family_block(gc)] += config.spike / m
    bg = config.family_index("background")
    means[bg, config.family_block(bg)] += config.spike / m
    return means


def make_weights(config: SynthConfig) -> ClassifierWeights:
    """Solve for weight rows hitting the planted raw responses exactly.

    Weights are constant within each family's channel block, so the dot
    product with any pixel reduces to a linear form over per-block
    coefficients; the (underdetermined, consistent) system is solved with
    least squares and the targets are hit to machine precision.
    """
    g = config.num_families
    m = config.channels_per_family
    rho = config.share_common
    n = config.num_classes
    rows_w = []
    for class_id in range(n):
        # One constraint row per pixel kind: disc/nondisc/context of every
        # class, plus generic background.
        system = []
        targets = []
        for other in range(n):
            for kind, own_target in (
                ("disc", config.target_disc),
                ("nondisc", config.target_nondisc),
                ("context", config.target_context),
            ):
                row = np.full(g, config.baseline * m)
                if kind == "context":
                    row[config.family_index("context", other)] += config.spike
                else:
                    row[config.family_index(kind, other)] += (1.0 - rho) * config.spike
                    row[config.family_index("common", other)] += rho * config.spike
                system.append(row)
                targets.append(own_target if other == class_id else config.target_floor)
        row = np.full(g, config.baseline * m)
        row[config.family_index("background")] += config.spike
        system.append(row)
        targets.append(config.target_floor)
        coef, *_ = np.linalg.lstsq(np.asarray(system), np.asarray(targets), rcond=None)
        rows_w.append(np.repeat(coef, m))
    return ClassifierWeights(np.stack(rows_w))


@dataclass
class PlantedObject:
    class_id: int
    box: tuple[int, int, int, int]  # y0, x0, y1, x1 on the feature grid
    disc_rows: int  # top rows of the box carrying the discriminative part
    context_box: Optional[tuple[int, int, int, int]]


def _sample_object(
    rng: np.random.Generator, config: SynthConfig, x_lo: int, x_hi: int, class_id: int
) -> PlantedObject:
    h = int(rng.integers(5, 9))
    w = int(rng.integers(5, min(9, x_hi - x_lo + 1)))
    y0 = int(rng.integers(1, config.feat_h - h - 1))
    x0 = int(rng.integers(x_lo, x_hi - w + 1))
    # Equal-mass halves keep prototype counts roughly balanced between the
    # two object parts, whatever the clustering threshold admits.
    disc_rows = max(1, h // 2)
    # Context patch hugs the object: below it when there is room, else above.
    ctx_h = 2
    if y0 + h + ctx_h <= config.feat_h:
        ctx = (y0 + h, x0, y0 + h + ctx_h, x0 + w)
    elif y0 - ctx_h >= 0:
        ctx = (y0 - ctx_h, x0, y0, x0 + w)
    else:
        ctx = None
    return PlantedObject(
        class_id=class_id, box=(y0, x0, y0 + h, x0 + w), disc_rows=disc_rows, context_box=ctx
    )


def _family_raster(config: SynthConfig, objects: list[PlantedObject]) -> np.ndarray:
    index = np.full(
        (config.feat_h, config.feat_w), config.family_index("background"), dtype=np.int64
    )
    for obj in objects:
        if obj.context_box is not None:
            y0, x0, y1, x1 = obj.context_box
            index[y0:y1, x0:x1] = config.family_index("context", obj.class_id)
    for obj in objects:
        y0, x0, y1, x1 = obj.box
        index[y0:y1, x0:x1] = config.family_index("nondisc", obj.class_id)
        index[y0 : y0 + obj.disc_rows, x0:x1] = config.family_index("disc", obj.class_id)
    return index


def _paint_image(
    rng: np.random.Generator, config: SynthConfig, objects: list[PlantedObject]
) -> np.ndarray:
    """Feature block: per-pixel family mixtures plus channel noise."""
    index = _family_raster(config, objects)
    values = np.full((config.feat_h, config.feat_w, config.channels), config.baseline)
    alpha = np.full(config.channels_per_family, config.mixture_alpha)
    rho = config.share_common
    part_kinds = {
        config.family_index("disc", c): c for c in range(config.num_classes)
    } | {config.family_index("nondisc", c): c for c in range(config.num_classes)}
    for g in range(config.num_families):
        mask = index == g
        count = int(mask.sum())
        if count == 0:
            continue
        if g in part_kinds:
            class_id = part_kinds[g]
            common = config.family_index("common", class_id)
            values[mask, config.family_block(g)] += (
                (1.0 - rho) * config.spike * rng.dirichlet(alpha, size=count)
            )
            values[mask, config.family_block(common)] += (
                rho * config.spike * rng.dirichlet(alpha, size=count)
            )
        else:
            values[mask, config.family_block(g)] += config.spike * rng.dirichlet(
                alpha, size=count
            )
    values = values + rng.normal(0.0, config.noise, size=values.shape)
    return np.maximum(values, 0.0).astype(np.float32)


def _ground_truth(config: SynthConfig, objects: list[PlantedObject]) -> np.ndarray:
    s = config.mask_scale
    gt = np.zeros((config.feat_h * s, config.feat_w * s), dtype=np.uint8)
    for obj in objects:
        y0, x0, y1, x1 = obj.box
        gt[y0 * s : y1 * s, x0 * s : x1 * s] = obj.class_id + 1
    return gt


def generate(config: SynthConfig, out_dir: Path | str) -> Path:
    """Write a complete synthetic dataset and return the manifest path.

    Output layout under ``out_dir``: ``features/*.npy``, ``gt/*.npy``,
    ``weights.npy``, ``manifest.json``, and ``bookkeeping.json`` recording
    every planted region.
    """
    out_dir = Path(out_dir)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)
    (out_dir / "gt").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)

    weights = make_weights(config)
    weights.save(out_dir / "weights.npy")

    records = []
    bookkeeping = []
    half = config.feat_w // 2
    for i in range(config.num_images):
        image_id = f"synth_{i:04d}"
        primary = i % config.num_classes
        objects = []
        if config.num_classes > 1 and config.two_class_every > 0 and (
            (i + 1) % config.two_class_every == 0
        ):
            secondary = (primary + 1 + i // config.num_classes) % config.num_classes
            if secondary == primary:
                secondary = (primary + 1) % config.num_classes
            objects.append(_sample_object(rng, config, 0, half - 1, primary))
            objects.append(_sample_object(rng, config, half, config.feat_w, secondary))
        else:
            objects.append(_sample_object(rng, config, 0, config.feat_w, primary))

        block = _paint_image(rng, config, objects)
        gt = _ground_truth(config, objects)
        save_array(out_dir / "features" / f"{image_id}.npy", block)
        save_array(out_dir / "gt" / f"{image_id}.npy", gt)
        labels = tuple(sorted({obj.class_id for obj in objects}))
        records.append(
            ImageRecord(
                image_id=image_id,
                labels=labels,
                feature_path=out_dir / "features" / f"{image_id}.npy",
                gt_mask_path=out_dir / "gt" / f"{image_id}.npy",
            )
        )
        bookkeeping.append(
            {
                "image_id": image_id,
                "labels": list(labels),
                "objects": [
                    {
                        "class_id": obj.class_id,
                        "box": list(obj.box),
                        "disc_rows": obj.disc_rows,
                        "context_box": list(obj.context_box) if obj.context_box else None,
                    }
                    for obj in objects
                ],
            }
        )

    manifest = DatasetManifest(
        num_classes=config.num_classes,
        channels=config.channels,
        class_names=tuple(f"class_{n:02d}" for n in range(config.num_classes)),
        records=tuple(records),
        root=out_dir,
    )
    manifest_path = out_dir / "manifest.json"
    manifest.save(manifest_path)
    with open(out_dir / "bookkeeping.json", "w") as fh:
        json.dump({"config": asdict(config), "images": bookkeeping}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path
