"""Shared dataset types, array IO, and manifest validation.

Conventions used throughout the package:

* Feature blocks are stored ``(H, W, C)`` row-major, so the C-dimensional
  local feature at spatial position ``(i, j)`` is the contiguous slice
  ``values[i, j, :]``.
* On disk, features and classifier weights are little-endian float32 NPY
  v1.0 files; masks are uint8 NPY files.
* A dataset manifest is a JSON file with a ``header`` object
  (``num_classes``, ``channels``, ``class_names``) and a ``records`` array.
  Record labels are foreground class indices in ``[0, num_classes)``.
* Seed masks and ground-truth masks store ``0`` for background and
  ``class_index + 1`` for foreground classes; ``255`` marks ignored pixels
  in ground-truth masks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

IGNORE_LABEL = 255


class DimensionError(ValueError):
    """Raised when array shapes disagree with the dataset contract."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def save_array(path: Path | str, values: np.ndarray) -> None:
    """Write ``values`` as an uncompressed NPY file, creating parent dirs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.save(fh, values, allow_pickle=False)


def load_array(path: Path | str) -> np.ndarray:
    return np.load(Path(path), allow_pickle=False)


def peek_shape(path: Path | str) -> tuple[int, ...]:
    """Read only the NPY header and return the stored shape."""
    return tuple(np.load(Path(path), mmap_mode="r", allow_pickle=False).shape)


@dataclass(frozen=True)
class FeatureBlock:
    """One image's unpooled feature map, shape ``(H, W, C)`` float32.

    Immutable after construction; all values must be finite.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.ndim != 3:
            raise DimensionError(f"feature block must be (H, W, C), got shape {values.shape}")
        if min(values.shape) < 1:
            raise DimensionError(f"feature block dimensions must be >= 1, got {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("feature block contains NaN or Inf")
        object.__setattr__(self, "values", _freeze(values))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    def local_features(self) -> np.ndarray:
        """All H*W local features as an ``(H*W, C)`` view, row-major order."""
        return self.values.reshape(-1, self.channels)

    @classmethod
    def from_file(cls, path: Path | str) -> "FeatureBlock":
        return cls(load_array(path))

    def save(self, path: Path | str) -> None:
        save_array(path, self.values)


@dataclass(frozen=True)
class ClassifierWeights:
    """FC-layer weight matrix, shape ``(num_classes, channels)``."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise DimensionError(f"weights must be (N, C), got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("classifier weights contain NaN or Inf")
        object.__setattr__(self, "values", _freeze(values))

    @property
    def num_classes(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def class_weight(self, class_id: int) -> np.ndarray:
        if not 0 <= class_id < self.num_classes:
            raise IndexError(f"class_id {class_id} out of range [0, {self.num_classes})")
        return self.values[class_id]

    @classmethod
    def from_file(cls, path: Path | str) -> "ClassifierWeights":
        return cls(load_array(path))

    def save(self, path: Path | str) -> None:
        save_array(path, self.values)


@dataclass(frozen=True)
class ActivationMap:
    """A normalized per-class heatmap with values in [0, 1].

    The constructor rejects maps outside [0, 1]; raw (pre-normalization)
    score matrices are passed around as plain arrays instead.
    """

    class_id: int
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DimensionError(f"activation map must be (H, W), got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("activation map contains NaN or Inf")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ValueError(
                f"activation map values outside [0, 1]: min={values.min()}, max={values.max()}"
            )
        object.__setattr__(self, "values", _freeze(values))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class SeedMask:
    """Integer label raster: 0 is background, ``class_index + 1`` foreground."""

    image_id: str
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=np.uint8)
        if values.ndim != 2:
            raise DimensionError(f"seed mask must be (H, W), got shape {values.shape}")
        object.__setattr__(self, "values", _freeze(values))

    def save(self, path: Path | str) -> None:
        save_array(path, self.values)

    @classmethod
    def from_file(cls, path: Path | str, image_id: str) -> "SeedMask":
        return cls(image_id=image_id, values=load_array(path))


@dataclass(frozen=True)
class ImageRecord:
    """One manifest entry: image id, class labels, and file references."""

    image_id: str
    labels: tuple[int, ...]
    feature_path: Path
    gt_mask_path: Optional[Path] = None

    def label_vector(self, num_classes: int) -> np.ndarray:
        y = np.zeros(num_classes, dtype=np.int8)
        y[list(self.labels)] = 1
        return y


@dataclass(frozen=True)
class DatasetManifest:
    """Parsed dataset manifest; paths are resolved against the manifest dir."""

    num_classes: int
    channels: int
    class_names: tuple[str, ...]
    records: tuple[ImageRecord, ...]
    root: Path = field(default_factory=Path)

    def __post_init__(self) -> None:
        if self.num_classes < 1 or self.channels < 1:
            raise ValueError("num_classes and channels must be positive")
        if len(self.class_names) != self.num_classes:
            raise ValueError(
                f"{len(self.class_names)} class names for num_classes={self.num_classes}"
            )

    def records_with_class(self, class_id: int) -> list[ImageRecord]:
        return [r for r in self.records if class_id in r.labels]

    def present_classes(self) -> list[int]:
        present = sorted({c for r in self.records for c in r.labels})
        return present

    @classmethod
    def load(cls, path: Path | str) -> "DatasetManifest":
        path = Path(path)
        with open(path) as fh:
            doc = json.load(fh)
        header = doc["header"]
        root = path.parent
        records = []
        for rec in doc["records"]:
            gt = rec.get("gt_mask_path")
            records.append(
                ImageRecord(
                    image_id=str(rec["image_id"]),
                    labels=tuple(int(c) for c in rec["labels"]),
                    feature_path=root / rec["feature_path"],
                    gt_mask_path=(root / gt) if gt else None,
                )
            )
        return cls(
            num_classes=int(header["num_classes"]),
            channels=int(header["channels"]),
            class_names=tuple(str(n) for n in header["class_names"]),
            records=tuple(records),
            root=root,
        )

    def save(self, path: Path | str) -> None:
        path = Path(path)
        root = path.parent

        def rel(p: Optional[Path]) -> Optional[str]:
            if p is None:
                return None
            try:
                return p.relative_to(root).as_posix()
            except ValueError:
                return str(p)

        doc = {
            "header": {
                "num_classes": self.num_classes,
                "channels": self.channels,
                "class_names": list(self.class_names),
            },
            "records": [
                {
                    "image_id": r.image_id,
                    "labels": list(r.labels),
                    "feature_path": rel(r.feature_path),
                    **({"gt_mask_path": rel(r.gt_mask_path)} if r.gt_mask_path else {}),
                }
                for r in self.records
            ],
        }
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class RecordStatus:
    image_id: str
    ok: bool
    message: str = ""


@dataclass
class ValidationReport:
    records: list[RecordStatus]
    fatal: Optional[str] = None

    @property
    def n_ok(self) -> int:
        return sum(1 for r in self.records if r.ok)

    @property
    def n_errors(self) -> int:
        return sum(1 for r in self.records if not r.ok)

    @property
    def clean(self) -> bool:
        return self.fatal is None and self.n_errors == 0

    def summary(self) -> str:
        lines = [f"{self.n_ok} ok, {self.n_errors} errors"]
        for r in self.records:
            if not r.ok:
                lines.append(f"  {r.image_id}: {r.message}")
        if self.fatal:
            lines.append(f"FATAL: {self.fatal}")
        return "\n".join(lines)


def validate_dataset(
    manifest: DatasetManifest, weights: Optional[ClassifierWeights] = None
) -> ValidationReport:
    """Check every record against the manifest header.

    Per-record problems (missing files, bad labels) are reported as record
    errors; a channel-count mismatch between any feature file and the header
    is a dataset-level fatal error, as is a weights/header disagreement.
    """
    report = ValidationReport(records=[])
    if weights is not None:
        if weights.num_classes != manifest.num_classes:
            report.fatal = (
                f"weights have {weights.num_classes} classes, "
                f"manifest header says {manifest.num_classes}"
            )
            return report
        if weights.channels != manifest.channels:
            report.fatal = (
                f"weights have {weights.channels} channels, "
                f"manifest header says {manifest.channels}"
            )
            return report

    for rec in manifest.records:
        status = RecordStatus(image_id=rec.image_id, ok=True)
        report.records.append(status)
        if not rec.labels:
            status.ok = False
            status.message = "record has no labels"
            continue
        bad = [c for c in rec.labels if not 0 <= c < manifest.num_classes]
        if bad:
            status.ok = False
            status.message = f"label indices {bad} out of range [0, {manifest.num_classes})"
            continue
        if not rec.feature_path.exists():
            status.ok = False
            status.message = f"file not found: {rec.feature_path}"
            continue
        try:
            shape = peek_shape(rec.feature_path)
        except Exception as exc:  # unreadable/corrupt NPY
            status.ok = False
            status.message = f"unreadable feature file {rec.feature_path}: {exc}"
            continue
        if len(shape) != 3:
            status.ok = False
            status.message = f"feature file is not (H, W, C): shape {shape}"
            continue
        if shape[2] != manifest.channels:
            report.fatal = (
                f"record {rec.image_id}: feature channels C={shape[2]} does not match "
                f"dataset C={manifest.channels}"
            )
            status.ok = False
            status.message = "channel count mismatch"
            return report
        if rec.gt_mask_path is not None and not rec.gt_mask_path.exists():
            status.ok = False
            status.message = f"file not found: {rec.gt_mask_path}"
    return report


@dataclass(frozen=True)
class PrototypeBankEntry:
    """Selected class and context prototypes for one class.

    ``fg`` holds the class prototypes (always >= 1 row: when no cluster
    center clears the confidence gate, the top scorer is kept as a
    fallback). ``bg`` holds the context prototypes and may be empty.
    """

    class_id: int
    fg: np.ndarray
    bg: np.ndarray
    fg_scores: np.ndarray
    bg_scores: np.ndarray
    fg_indices: tuple[int, ...]
    bg_indices: tuple[int, ...]
    fallback_used: bool = False

    def __post_init__(self) -> None:
        fg = np.ascontiguousarray(self.fg, dtype=np.float32)
        bg = np.ascontiguousarray(self.bg, dtype=np.float32)
        if fg.ndim != 2 or fg.shape[0] < 1:
            raise ValueError("fg prototypes must be a nonempty (K1, C) matrix")
        if bg.ndim != 2:
            raise ValueError("bg prototypes must be a (K2, C) matrix (K2 may be 0)")
        for name, mat in (("fg", fg), ("bg", bg)):
            if not np.isfinite(mat).all():
                raise ValueError(f"{name} prototypes contain NaN or Inf")
            if mat.shape[0] and (np.linalg.norm(mat, axis=1) == 0).any():
                raise ValueError(f"{name} prototypes contain a zero-norm vector")
        object.__setattr__(self, "fg", _freeze(fg))
        object.__setattr__(self, "bg", _freeze(bg))
        object.__setattr__(self, "fg_scores", _freeze(np.asarray(self.fg_scores, dtype=np.float64)))
        object.__setattr__(self, "bg_scores", _freeze(np.asarray(self.bg_scores, dtype=np.float64)))

    @property
    def k1(self) -> int:
        return self.fg.shape[0]

    @property
    def k2(self) -> int:
        return self.bg.shape[0]


@dataclass
class PrototypeBank:
    """Per-class prototype entries plus the configuration that produced them."""

    entries: dict[int, PrototypeBankEntry]
    params: dict = field(default_factory=dict)

    def entry(self, class_id: int) -> PrototypeBankEntry:
        if class_id not in self.entries:
            raise KeyError(f"no prototype entry for class {class_id}")
        return self.entries[class_id]

    def missing_classes(self, class_ids: Iterable[int]) -> list[int]:
        return sorted(set(class_ids) - set(self.entries))

    def save(self, bank_dir: Path | str) -> None:
        bank_dir = Path(bank_dir)
        bank_dir.mkdir(parents=True, exist_ok=True)
        index: dict = {"params": self.params, "classes": {}}
        for class_id in sorted(self.entries):
            e = self.entries[class_id]
            save_array(bank_dir / f"class_{class_id:04d}_fg.npy", e.fg)
            save_array(bank_dir / f"class_{class_id:04d}_bg.npy", e.bg)
            index["classes"][str(class_id)] = {
                "k1": e.k1,
                "k2": e.k2,
                "fg_scores": [float(s) for s in e.fg_scores],
                "bg_scores": [float(s) for s in e.bg_scores],
                "fg_indices": list(e.fg_indices),
                "bg_indices": list(e.bg_indices),
                "fallback_used": e.fallback_used,
            }
        with open(bank_dir / "index.json", "w") as fh:
            json.dump(index, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, bank_dir: Path | str) -> "PrototypeBank":
        bank_dir = Path(bank_dir)
        with open(bank_dir / "index.json") as fh:
            index = json.load(fh)
        entries: dict[int, PrototypeBankEntry] = {}
        for key, meta in index["classes"].items():
            class_id = int(key)
            entries[class_id] = PrototypeBankEntry(
                class_id=class_id,
                fg=load_array(bank_dir / f"class_{class_id:04d}_fg.npy"),
                bg=load_array(bank_dir / f"class_{class_id:04d}_bg.npy"),
                fg_scores=np.asarray(meta["fg_scores"], dtype=np.float64),
                bg_scores=np.asarray(meta["bg_scores"], dtype=np.float64),
                fg_indices=tuple(meta["fg_indices"]),
                bg_indices=tuple(meta["bg_indices"]),
                fallback_used=bool(meta["fallback_used"]),
            )
        return cls(entries=entries, params=index.get("params", {}))
