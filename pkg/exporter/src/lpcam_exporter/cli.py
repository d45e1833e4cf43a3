"""Console entry points: ``export-features`` and ``export-gt``."""

from __future__ import annotations

import argparse
import sys
from typing import Optional

from .export import DatasetLayoutError, export_features, export_gt_masks


def main_features(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="export-features",
        description="Run a multi-label classifier over a VOC-style dataset and "
        "export feature blocks, weights, masks, and a manifest.",
    )
    parser.add_argument("dataset_root", help="dataset directory (VOC-style layout)")
    parser.add_argument("checkpoint", help="classifier checkpoint (.pth)")
    parser.add_argument("-o", "--out", required=True, help="output directory")
    parser.add_argument(
        "--flip-average",
        action="store_true",
        help="average features with the re-aligned features of the flipped image",
    )
    parser.add_argument("--batch-size", type=int, default=4)
    args = parser.parse_args(argv)
    try:
        result = export_features(
            args.dataset_root,
            args.checkpoint,
            args.out,
            flip_average=args.flip_average,
            batch_size=args.batch_size,
        )
    except (DatasetLayoutError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{result.num_images} images exported (C={result.channels}) -> {result.manifest_path}")
    return 0


def main_gt(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="export-gt",
        description="Convert VOC-style segmentation PNGs to uint8 NPY label masks.",
    )
    parser.add_argument("dataset_root", help="dataset directory (VOC-style layout)")
    parser.add_argument("-o", "--out", required=True, help="output directory")
    args = parser.parse_args(argv)
    try:
        written = export_gt_masks(args.dataset_root, args.out)
    except (DatasetLayoutError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{len(written)} masks -> {args.out}/gt")
    return 0


if __name__ == "__main__":
    sys.exit(main_features())
