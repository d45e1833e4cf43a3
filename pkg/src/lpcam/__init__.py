"""Class activation maps from clustered local prototypes.

The package turns serialized feature tensors from any multi-label image
classifier into activation maps with whole-object coverage: conventional
weight-based maps locate the discriminative parts, per-class local features
are clustered into prototypes, and averaged prototype-similarity maps
(class minus context) replace the weight-based map. Seed-mask generation
and confusion-based evaluation close the loop.
"""

from .types import (
    IGNORE_LABEL,
    ActivationMap,
    ClassifierWeights,
    DatasetManifest,
    DimensionError,
    FeatureBlock,
    ImageRecord,
    PrototypeBank,
    PrototypeBankEntry,
    SeedMask,
    ValidationReport,
    load_array,
    save_array,
    validate_dataset,
)
from .cam import FgBgSplit, compute_cam, normalize_map, raw_cam, split_by_cam
from .clustering import ClusteringConfig, ClusterResult, collect_class_features, kmeans
from .prototypes import build_prototype_bank, class_scores, score_center, select_prototypes
from .maps import (
    MapArchive,
    aggregate_fg_bg,
    batch_generate,
    compute_lpcam,
    cosine_maps_raw,
    similarity_map,
)
from .seedmask import assemble_seed, generate_seed_masks, upsample
from .evaluation import (
    ConfusionAccumulator,
    MetricsReport,
    SweepResult,
    accumulate,
    evaluate_seed_dir,
    finalize,
    sweep,
)
from .synth import SynthConfig, generate as generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "IGNORE_LABEL",
    "ActivationMap",
    "ClassifierWeights",
    "ClusteringConfig",
    "ClusterResult",
    "ConfusionAccumulator",
    "DatasetManifest",
    "DimensionError",
    "FeatureBlock",
    "FgBgSplit",
    "ImageRecord",
    "MapArchive",
    "MetricsReport",
    "PrototypeBank",
    "PrototypeBankEntry",
    "SeedMask",
    "SweepResult",
    "SynthConfig",
    "ValidationReport",
    "accumulate",
    "aggregate_fg_bg",
    "assemble_seed",
    "batch_generate",
    "build_prototype_bank",
    "class_scores",
    "collect_class_features",
    "compute_cam",
    "compute_lpcam",
    "cosine_maps_raw",
    "evaluate_seed_dir",
    "finalize",
    "generate_seed_masks",
    "generate_synthetic",
    "kmeans",
    "load_array",
    "normalize_map",
    "raw_cam",
    "save_array",
    "score_center",
    "select_prototypes",
    "similarity_map",
    "split_by_cam",
    "sweep",
    "upsample",
    "validate_dataset",
]
