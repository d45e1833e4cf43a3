"""Confusion accumulation, metric finalization, and hyperparameter sweeps.

Per-class false-positive and false-negative rates are reported as
percentages of the class's union ``TP + FP + FN``, which makes
``IoU + FP + FN == 100`` hold exactly for every class; the headline numbers
average these per-class values (background included as a class).
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .maps import compute_lpcam
from .cam import compute_cam
from .prototypes import select_prototypes
from .clustering import ClusteringConfig, collect_class_features, kmeans
from .seedmask import assemble_seed, upsample
from .types import (
    IGNORE_LABEL,
    ClassifierWeights,
    DatasetManifest,
    DimensionError,
    FeatureBlock,
    PrototypeBank,
    SeedMask,
    load_array,
)

SWEEP_COLUMNS = (
    "tau",
    "mu_f",
    "mu_b",
    "K",
    "bg_threshold",
    "seed",
    "miou",
    "fp",
    "fn",
    "precision",
    "recall",
)


@dataclass
class ConfusionAccumulator:
    """Pixel confusion counts per class, background included as class 0.

    Pixels labeled with the ignore value contribute to no count.
    Accumulators merge by addition, so per-image accumulation order never
    changes the totals.
    """

    num_classes: int  # foreground classes; class labels run 0..num_classes
    tp: np.ndarray = field(init=False)
    fp: np.ndarray = field(init=False)
    fn: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        n = self.num_classes + 1
        self.tp = np.zeros(n, dtype=np.int64)
        self.fp = np.zeros(n, dtype=np.int64)
        self.fn = np.zeros(n, dtype=np.int64)

    def add(self, pred: np.ndarray, gt: np.ndarray) -> None:
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if pred.shape != gt.shape:
            raise DimensionError(f"prediction shape {pred.shape} != ground truth {gt.shape}")
        n = self.num_classes + 1
        valid = gt != IGNORE_LABEL
        p = pred[valid].astype(np.int64)
        g = gt[valid].astype(np.int64)
        if p.size and (p.max() >= n or g.max() >= n):
            raise ValueError(f"labels exceed num_classes={self.num_classes}")
        matrix = np.bincount(g * n + p, minlength=n * n).reshape(n, n)
        diag = np.diag(matrix)
        self.tp += diag
        self.fp += matrix.sum(axis=0) - diag
        self.fn += matrix.sum(axis=1) - diag

    def merge(self, other: "ConfusionAccumulator") -> "ConfusionAccumulator":
        if other.num_classes != self.num_classes:
            raise ValueError("cannot merge accumulators with different class counts")
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        return self


def accumulate(pred: SeedMask | np.ndarray, gt: np.ndarray, num_classes: int) -> ConfusionAccumulator:
    """One image's confusion counts as a fresh accumulator."""
    values = pred.values if isinstance(pred, SeedMask) else pred
    acc = ConfusionAccumulator(num_classes=num_classes)
    acc.add(values, gt)
    return acc


@dataclass
class MetricsReport:
    miou: float
    fp: float
    fn: float
    precision: float
    recall: float
    per_class_iou: dict[int, float]

    def as_dict(self) -> dict:
        return {
            "miou": self.miou,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "per_class_iou": {str(k): v for k, v in sorted(self.per_class_iou.items())},
        }

    def format_table(self) -> str:
        head = f"{'mIoU':>8} {'FP':>8} {'FN':>8} {'Prec.':>8} {'Recall':>8}"
        row = (
            f"{self.miou:8.2f} {self.fp:8.2f} {self.fn:8.2f} "
            f"{self.precision:8.2f} {self.recall:8.2f}"
        )
        return head + "\n" + row


def finalize(acc: ConfusionAccumulator) -> MetricsReport:
    """Reduce confusion counts to the five headline metrics.

    All values are percentages. A class with an empty denominator for a
    given metric is excluded from that metric's mean.
    """
    tp = acc.tp.astype(np.float64)
    fp = acc.fp.astype(np.float64)
    fn = acc.fn.astype(np.float64)
    union = tp + fp + fn
    if not (union > 0).any():
        raise ValueError("accumulator is empty: no pixels were counted")

    def mean_rate(num: np.ndarray, den: np.ndarray) -> float:
        ok = den > 0
        return float((num[ok] / den[ok]).mean() * 100.0)

    seen = union > 0
    per_class = {int(c): float(tp[c] / union[c] * 100.0) for c in np.flatnonzero(seen)}
    return MetricsReport(
        miou=mean_rate(tp, union),
        fp=mean_rate(fp, union),
        fn=mean_rate(fn, union),
        precision=mean_rate(tp, tp + fp),
        recall=mean_rate(tp, tp + fn),
        per_class_iou=per_class,
    )


def evaluate_seed_dir(seed_dir: Path | str, manifest: DatasetManifest) -> MetricsReport:
    """Score every seed mask in a directory against the manifest's ground truth."""
    seed_dir = Path(seed_dir)
    acc = ConfusionAccumulator(num_classes=manifest.num_classes)
    scored = 0
    for record in manifest.records:
        if record.gt_mask_path is None:
            continue
        mask_path = seed_dir / f"{record.image_id}.npy"
        if not mask_path.exists():
            raise FileNotFoundError(f"no seed mask for {record.image_id} in {seed_dir}")
        acc.add(load_array(mask_path), load_array(record.gt_mask_path))
        scored += 1
    if scored == 0:
        raise ValueError("manifest has no records with ground-truth masks")
    return finalize(acc)


@dataclass(frozen=True)
class SweepPoint:
    tau: float
    mu_f: float
    mu_b: float
    k: int
    bg_threshold: float
    seed: int
    report: MetricsReport

    def as_row(self) -> dict:
        return {
            "tau": self.tau,
            "mu_f": self.mu_f,
            "mu_b": self.mu_b,
            "K": self.k,
            "bg_threshold": self.bg_threshold,
            "seed": self.seed,
            "miou": round(self.report.miou, 6),
            "fp": round(self.report.fp, 6),
            "fn": round(self.report.fn, 6),
            "precision": round(self.report.precision, 6),
            "recall": round(self.report.recall, 6),
        }


@dataclass
class SweepResult:
    points: list[SweepPoint]
    cluster_passes: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for point in self.points:
            writer.writerow(point.as_row())
        return buf.getvalue()

    def write_csv(self, path: Path | str) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())


class _ClusterCache:
    """Memoizes per-class cluster centers keyed on everything upstream of
    prototype selection, so downstream-only sweeps never re-cluster."""

    def __init__(self) -> None:
        self.store: dict[tuple, dict[int, tuple[np.ndarray, np.ndarray]]] = {}
        self.passes = 0

    def get(
        self,
        manifest: DatasetManifest,
        weights: ClassifierWeights,
        *,
        tau: float,
        k: int,
        metric: str,
        sample_cap: Optional[int],
        seed: int,
        restarts: int,
    ) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        key = (tau, k, metric, sample_cap, seed, restarts)
        if key in self.store:
            return self.store[key]
        self.passes += 1
        centers: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for class_id in manifest.present_classes():
            fg_bag, bg_bag = collect_class_features(
                manifest, weights, class_id, tau, sample_cap=sample_cap, seed=seed
            )
            if fg_bag.shape[0] == 0:
                raise ValueError(f"class {class_id}: empty foreground bag at tau={tau}")
            fg = kmeans(
                fg_bag,
                ClusteringConfig(
                    k=min(k, fg_bag.shape[0]), metric=metric, seed=seed, restarts=restarts
                ),
            ).centers
            if bg_bag.shape[0] > 0:
                bg = kmeans(
                    bg_bag,
                    ClusteringConfig(
                        k=min(k, bg_bag.shape[0]), metric=metric, seed=seed, restarts=restarts
                    ),
                ).centers
            else:
                bg = np.empty((0, manifest.channels))
            centers[class_id] = (fg, bg)
        self.store[key] = centers
        return centers


def _run_point(
    manifest: DatasetManifest,
    weights: ClassifierWeights,
    cache: _ClusterCache,
    *,
    map_kind: str,
    mode: str,
    tau: float,
    mu_f: float,
    mu_b: float,
    k: int,
    bg_threshold: float,
    seed: int,
    metric: str,
    sample_cap: Optional[int],
    restarts: int,
) -> MetricsReport:
    """Evaluate one configuration end to end, entirely in memory."""
    bank: Optional[PrototypeBank] = None
    if map_kind == "lpcam":
        centers = cache.get(
            manifest,
            weights,
            tau=tau,
            k=k,
            metric=metric,
            sample_cap=sample_cap,
            seed=seed,
            restarts=restarts,
        )
        bank = PrototypeBank(
            entries={
                class_id: select_prototypes(fg, bg, weights, class_id, mu_f, mu_b)
                if bg.shape[0]
                else select_prototypes(fg, np.empty((0, fg.shape[1])), weights, class_id, mu_f, mu_b)
                for class_id, (fg, bg) in centers.items()
            }
        )

    acc = ConfusionAccumulator(num_classes=manifest.num_classes)
    for record in manifest.records:
        if record.gt_mask_path is None:
            continue
        block = FeatureBlock.from_file(record.feature_path)
        gt = load_array(record.gt_mask_path)
        class_maps = {}
        for class_id in record.labels:
            if map_kind == "cam":
                amap = compute_cam(block, weights, class_id)
            else:
                amap = compute_lpcam(block, bank.entry(class_id), mode=mode)
            class_maps[class_id] = upsample(amap.values, gt.shape[0], gt.shape[1])
        seed_mask = assemble_seed(class_maps, bg_threshold, image_id=record.image_id)
        acc.add(seed_mask.values, gt)
    return finalize(acc)


def sweep(
    manifest: DatasetManifest,
    weights: ClassifierWeights,
    grid: dict[str, Sequence],
    *,
    map_kind: str = "lpcam",
    mode: str = "full",
    tau: float = 0.1,
    mu_f: float = 0.9,
    mu_b: float = 0.9,
    k: int = 12,
    bg_threshold: float = 0.3,
    seed: int = 0,
    metric: str = "cosine",
    sample_cap: Optional[int] = None,
    restarts: int = 3,
) -> SweepResult:
    """Grid-run the pipeline and collect one metrics row per grid point.

    ``grid`` maps any of ``tau``, ``mu_f``, ``mu_b``, ``K``, ``bg_threshold``
    to a list of values; unlisted parameters stay at their keyword value.
    Cluster centers are cached across grid points, so sweeping only
    downstream parameters (selection thresholds, seed threshold) performs a
    single clustering pass.
    """
    known = {"tau", "mu_f", "mu_b", "K", "bg_threshold"}
    unknown = set(grid) - known
    if unknown:
        raise ValueError(f"unknown sweep parameters {sorted(unknown)}; expected {sorted(known)}")
    axes = {
        "tau": list(grid.get("tau", [tau])),
        "mu_f": list(grid.get("mu_f", [mu_f])),
        "mu_b": list(grid.get("mu_b", [mu_b])),
        "K": list(grid.get("K", [k])),
        "bg_threshold": list(grid.get("bg_threshold", [bg_threshold])),
    }
    cache = _ClusterCache()
    points: list[SweepPoint] = []
    for tau_v, mu_f_v, mu_b_v, k_v, thr_v in itertools.product(
        axes["tau"], axes["mu_f"], axes["mu_b"], axes["K"], axes["bg_threshold"]
    ):
        report = _run_point(
            manifest,
            weights,
            cache,
            map_kind=map_kind,
            mode=mode,
            tau=float(tau_v),
            mu_f=float(mu_f_v),
            mu_b=float(mu_b_v),
            k=int(k_v),
            bg_threshold=float(thr_v),
            seed=seed,
            metric=metric,
            sample_cap=sample_cap,
            restarts=restarts,
        )
        points.append(
            SweepPoint(
                tau=float(tau_v),
                mu_f=float(mu_f_v),
                mu_b=float(mu_b_v),
                k=int(k_v),
                bg_threshold=float(thr_v),
                seed=seed,
                report=report,
            )
        )
    return SweepResult(points=points, cluster_passes=cache.passes)
