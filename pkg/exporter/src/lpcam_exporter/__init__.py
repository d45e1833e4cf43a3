"""Bridge from a PyTorch multi-label classifier to the lpcam data format."""

from .export import (
    DatasetLayoutError,
    ExportResult,
    decode_mask,
    export_features,
    export_gt_masks,
    read_class_names,
)
from .model import FeatureExtractor, build_classifier, load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "DatasetLayoutError",
    "ExportResult",
    "FeatureExtractor",
    "build_classifier",
    "decode_mask",
    "export_features",
    "export_gt_masks",
    "load_checkpoint",
    "read_class_names",
    "save_checkpoint",
]
