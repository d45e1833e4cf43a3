"""Command-line pipeline driver.

Subcommands: validate, cluster, genmap, seed, eval, sweep, synth.
Configuration precedence is flags > TOML config file > preset defaults
(the VOC preset unless ``--preset coco`` is given). Every command that
writes artifacts also writes a ``provenance.json`` echoing its effective
configuration, so identical provenance implies identical outputs.

Exit codes: 0 clean, 1 record-level errors, 2 fatal errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import subprocess
import sys
from dataclasses import dataclass, asdict, fields, replace
from pathlib import Path
from typing import Optional

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from . import __version__
from .evaluation import evaluate_seed_dir, sweep
from .maps import batch_generate, MapArchive
from .prototypes import build_prototype_bank
from .seedmask import generate_seed_masks
from .synth import SynthConfig, generate
from .types import ClassifierWeights, DatasetManifest, PrototypeBank, validate_dataset

CACHE_ENV = "LPCAM_CACHE_DIR"

PRESETS = {
    "voc": dict(k=12, tau=0.1, mu_f=0.9, mu_b=0.9, bg_threshold=0.3, sample_cap=None),
    "coco": dict(k=20, tau=0.25, mu_f=0.9, mu_b=0.5, bg_threshold=0.3, sample_cap=100),
}


@dataclass(frozen=True)
class PipelineParams:
    """Hyperparameters shared across pipeline stages."""

    k: int = 12
    tau: float = 0.1
    mu_f: float = 0.9
    mu_b: float = 0.9
    bg_threshold: float = 0.3
    metric: str = "cosine"
    max_iters: int = 100
    tol: float = 1e-5
    restarts: int = 3
    seed: int = 0
    sample_cap: Optional[int] = None


def _load_toml(path: Path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def resolve_params(args: argparse.Namespace) -> PipelineParams:
    """Layer preset, config file, then explicit flags."""
    merged = dict(PRESETS["voc"])
    preset = getattr(args, "preset", None)
    if preset:
        merged.update(PRESETS[preset])
    config_path = getattr(args, "config", None)
    if config_path:
        doc = _load_toml(Path(config_path))
        unknown = set(doc) - {f.name for f in fields(PipelineParams)}
        if unknown:
            raise SystemExit(f"unknown config keys in {config_path}: {sorted(unknown)}")
        merged.update(doc)
    params = PipelineParams(**{k: v for k, v in merged.items() if k in PipelineParams.__dataclass_fields__})
    overrides = {}
    for f in fields(PipelineParams):
        value = getattr(args, f.name, None)
        if value is not None:
            overrides[f.name] = value
    return replace(params, **overrides)


def _git_describe() -> Optional[str]:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            cwd=Path(__file__).parent,
            timeout=10,
        )
        return out.stdout.strip() or None
    except (OSError, subprocess.SubprocessError):
        return None


def write_provenance(out_dir: Path, command: str, config: dict) -> None:
    """Record the semantically effective configuration of a command.

    Execution details like worker counts are deliberately excluded: they
    must not change outputs, so they are not part of provenance.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": command,
        "config": config,
        "version": __version__,
        "git": _git_describe(),
    }
    with open(out_dir / "provenance.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_validate(args: argparse.Namespace) -> int:
    manifest = DatasetManifest.load(args.manifest)
    weights = ClassifierWeights.from_file(args.weights) if args.weights else None
    report = validate_dataset(manifest, weights)
    print(report.summary())
    if report.fatal:
        return 2
    return 0 if report.clean else 1


def _cluster_cache_key(manifest_path: Path, params: PipelineParams) -> str:
    payload = json.dumps(
        {
            "manifest": str(Path(manifest_path).resolve()),
            "k": params.k,
            "tau": params.tau,
            "metric": params.metric,
            "max_iters": params.max_iters,
            "tol": params.tol,
            "restarts": params.restarts,
            "seed": params.seed,
            "sample_cap": params.sample_cap,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def cmd_cluster(args: argparse.Namespace) -> int:
    params = resolve_params(args)
    manifest = DatasetManifest.load(args.manifest)
    weights = ClassifierWeights.from_file(args.weights)
    out_dir = Path(args.out)

    cache_root = os.environ.get(CACHE_ENV)
    cache_dir = None
    if cache_root:
        cache_dir = Path(cache_root) / _cluster_cache_key(Path(args.manifest), params)
        if (cache_dir / "index.json").exists():
            bank = PrototypeBank.load(cache_dir)
            bank.save(out_dir)
            write_provenance(out_dir, "cluster", {**asdict(params), "cache_hit": True})
            print(f"prototype bank restored from cache -> {out_dir}")
            return 0

    bank = build_prototype_bank(
        manifest,
        weights,
        k=params.k,
        tau=params.tau,
        mu_f=params.mu_f,
        mu_b=params.mu_b,
        metric=params.metric,
        max_iters=params.max_iters,
        tol=params.tol,
        restarts=params.restarts,
        seed=params.seed,
        sample_cap=params.sample_cap,
    )
    bank.save(out_dir)
    if cache_dir is not None:
        bank.save(cache_dir)
    write_provenance(out_dir, "cluster", asdict(params))
    print(f"prototype bank with {len(bank.entries)} classes -> {out_dir}")
    return 0


def cmd_genmap(args: argparse.Namespace) -> int:
    params = resolve_params(args)
    manifest = DatasetManifest.load(args.manifest)
    weights = ClassifierWeights.from_file(args.weights) if args.weights else None
    bank = PrototypeBank.load(args.bank) if args.bank else None
    if args.kind == "lpcam" and bank is None:
        raise SystemExit("--kind lpcam requires --bank")
    if args.kind == "cam" and weights is None:
        raise SystemExit("--kind cam requires a weights file")
    archive = batch_generate(
        manifest,
        args.out,
        map_kind=args.kind,
        weights=weights,
        bank=bank,
        mode=args.mode,
        workers=args.workers,
    )
    write_provenance(
        Path(args.out),
        "genmap",
        {"kind": args.kind, "mode": args.mode if args.kind == "lpcam" else None,
         "seed": params.seed},
    )
    n_maps = sum(len(r.labels) for r in manifest.records)
    print(f"{n_maps} activation maps -> {archive.root}")
    return 0


def cmd_seed(args: argparse.Namespace) -> int:
    params = resolve_params(args)
    manifest = DatasetManifest.load(args.manifest)
    archive = MapArchive(args.maps)
    out = generate_seed_masks(
        archive, manifest, params.bg_threshold, args.out, write_pgm=args.pgm
    )
    write_provenance(Path(args.out), "seed", {"bg_threshold": params.bg_threshold})
    print(f"{len(manifest.records)} seed masks -> {out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    manifest = DatasetManifest.load(args.manifest)
    report = evaluate_seed_dir(args.seeds, manifest)
    print(report.format_table())
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w") as fh:
            json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    params = resolve_params(args)
    manifest = DatasetManifest.load(args.manifest)
    weights = ClassifierWeights.from_file(args.weights)
    grid = _load_toml(Path(args.grid))
    result = sweep(
        manifest,
        weights,
        grid,
        map_kind=args.kind,
        mode=args.mode,
        tau=params.tau,
        mu_f=params.mu_f,
        mu_b=params.mu_b,
        k=params.k,
        bg_threshold=params.bg_threshold,
        seed=params.seed,
        metric=params.metric,
        sample_cap=params.sample_cap,
        restarts=params.restarts,
    )
    result.write_csv(args.out)
    print(f"{len(result.points)} grid points ({result.cluster_passes} clustering passes) -> {args.out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    config = SynthConfig(
        num_images=args.images,
        num_classes=args.classes,
        feat_h=args.feat_size,
        feat_w=args.feat_size,
        mask_scale=args.mask_scale,
        noise=args.noise,
        seed=args.seed if args.seed is not None else 0,
    )
    manifest_path = generate(config, args.out)
    write_provenance(Path(args.out), "synth", asdict(config))
    print(f"synthetic dataset -> {manifest_path}")
    return 0


def _add_param_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--preset", choices=sorted(PRESETS), help="hyperparameter preset")
    parser.add_argument("--config", help="TOML file overriding preset values")
    parser.add_argument("--k", type=int, help="number of clusters per class")
    parser.add_argument("--tau", type=float, help="activation threshold splitting fg/bg features")
    parser.add_argument("--mu-f", dest="mu_f", type=float, help="min confidence for class prototypes")
    parser.add_argument("--mu-b", dest="mu_b", type=float, help="max confidence for context prototypes")
    parser.add_argument("--bg-threshold", dest="bg_threshold", type=float,
                        help="seed-mask background threshold")
    parser.add_argument("--metric", choices=("cosine", "euclidean"))
    parser.add_argument("--max-iters", dest="max_iters", type=int)
    parser.add_argument("--tol", type=float)
    parser.add_argument("--restarts", type=int)
    parser.add_argument("--seed", type=int, help="seed for all randomness")
    parser.add_argument("--sample-cap", dest="sample_cap", type=int,
                        help="max images per class consumed for clustering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpcam", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a dataset manifest")
    p.add_argument("manifest")
    p.add_argument("--weights", help="optional weights file to validate against the header")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("cluster", help="build a prototype bank")
    p.add_argument("manifest")
    p.add_argument("weights")
    p.add_argument("-o", "--out", required=True, help="output bank directory")
    _add_param_flags(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("genmap", help="generate activation maps for a dataset")
    p.add_argument("manifest")
    p.add_argument("weights", nargs="?", help="weights file (required for --kind cam)")
    p.add_argument("-o", "--out", required=True, help="output map archive directory")
    p.add_argument("--bank", help="prototype bank directory (required for --kind lpcam)")
    p.add_argument("--kind", choices=("cam", "lpcam"), default="lpcam")
    p.add_argument("--mode", choices=("full", "fg_only"), default="full")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    _add_param_flags(p)
    p.set_defaults(func=cmd_genmap)

    p = sub.add_parser("seed", help="assemble seed masks from a map archive")
    p.add_argument("maps", help="map archive directory")
    p.add_argument("manifest")
    p.add_argument("-o", "--out", required=True, help="output seed directory")
    p.add_argument("--pgm", action="store_true", help="also write PGM renderings")
    _add_param_flags(p)
    p.set_defaults(func=cmd_seed)

    p = sub.add_parser("eval", help="score seed masks against ground truth")
    p.add_argument("seeds", help="seed mask directory")
    p.add_argument("manifest")
    p.add_argument("-o", "--out", help="optional JSON report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid-run the pipeline and emit CSV metrics")
    p.add_argument("manifest")
    p.add_argument("weights")
    p.add_argument("--grid", required=True, help="TOML file mapping parameters to value lists")
    p.add_argument("-o", "--out", required=True, help="output CSV path")
    p.add_argument("--kind", choices=("cam", "lpcam"), default="lpcam")
    p.add_argument("--mode", choices=("full", "fg_only"), default="full")
    _add_param_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="generate the synthetic benchmark dataset")
    p.add_argument("-o", "--out", required=True, help="output dataset directory")
    p.add_argument("--images", type=int, default=20)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--feat-size", dest="feat_size", type=int, default=16)
    p.add_argument("--mask-scale", dest="mask_scale", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.06)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
