#!/usr/bin/env python3
"""
DIF Command Line
Train the denoiser, extract fingerprints, detect, cross-detect, analyze lineage,
run the artifact lab and build oracle / perturbed corpora
"""

import argparse
import json
import sys
import traceback
from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import pandas as pd

from config.model_specs import GENERATOR_ARCHS
from config.run_config import RunConfig, load_run_config
from data.dataset import DatasetManifest, ImageSet, load_and_split
from data.jpeg_stats import jpeg_quality_stats
from data.oracle import parse_pattern, write_oracle_corpus
from data.perturb import PerturbationSpec, perturb_directory
from detection.detector import (
    CrossDetectionMatrix,
    check_provenance,
    cross_detect,
    evaluate,
    fingerprint_cross_correlation,
    score,
)
from detection.lineage import lineage_clusters
from fingerprint.extractor import ExtractionConfig, FingerprintRecord, extract_with_method
from lab.artifact_lab import LAB_ARCHS, run_lab
from models.denoiser import (
    DenoiserTrainConfig,
    ResidualFilter,
    extract_residuals,
    load_residual_filter,
    train_dncnn,
)
from utils.checkpoint import file_sha256
from utils.errors import DataError, DIFError, DimensionError
from utils.image_io import center_crop, load_image

CONFIG_KEYS = {f.name for f in fields(RunConfig)}


# ============================================================================
# Helpers
# ============================================================================

def _hash_paths(paths: Iterable[str]) -> Dict[str, Optional[str]]:
    hashes = {}
    for path in paths:
        p = Path(path)
        hashes[str(path)] = file_sha256(str(p)) if p.is_file() else None
    return hashes


def write_provenance(path: str, command: str, cfg: RunConfig, inputs: Iterable[str], outputs: Iterable[str],
                     extra: Optional[Dict[str, Any]] = None) -> str:
    """Config echo plus SHA-256 of every input and output file"""
    document = {
        "command": command,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "inputs": _hash_paths(inputs),
        "outputs": _hash_paths(outputs),
    }
    if extra:
        document.update(extra)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(document, indent=2, sort_keys=True))
    return path


def _provenance_path(out: str) -> str:
    p = Path(out)
    return str(p / "provenance.json") if p.is_dir() else f"{out}.provenance.json"


def _log(cfg_args, message: str):
    if not cfg_args.quiet:
        print(message)


def _check_filter_size(filt: ResidualFilter, size: int):
    if filt.working_size is not None and filt.working_size != size:
        raise DimensionError(f"denoiser working size {filt.working_size} does not match data working size {size}")


def _train_record(train: ImageSet, filt: ResidualFilter, cfg: RunConfig, model_id: str,
                  verbose: bool) -> FingerprintRecord:
    res_real = extract_residuals(train.of_label("real"), filt, workers=cfg.workers, verbose=verbose)
    res_gen = extract_residuals(train.of_label("generated"), filt, workers=cfg.workers, verbose=verbose)
    return extract_with_method(
        res_real, res_gen, filt.content_hash(), method=cfg.method,
        cfg=ExtractionConfig.from_run_config(cfg), source_model_id=model_id, verbose=verbose,
    )


def _model_id(manifest: DatasetManifest, given: Optional[str]) -> str:
    if given:
        return given
    ids = manifest.model_ids()
    return ids[0] if len(ids) == 1 else ",".join(ids)


def _split_list(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


# ============================================================================
# Commands
# ============================================================================

def cmd_train_denoiser(args, cfg: RunConfig) -> int:
    verbose = not args.quiet
    manifest = DatasetManifest.load(args.manifest)
    train = load_and_split(manifest, required=("real",), workers=cfg.workers, verbose=verbose)["train"]
    bundle = train_dncnn(train.of_label("real"), DenoiserTrainConfig.from_run_config(cfg), verbose=verbose)
    bundle.save(args.out)
    _log(args, f"💾 Denoiser saved to {args.out} (content hash {bundle.content_hash()[:12]})")
    write_provenance(_provenance_path(args.out), "train-denoiser", cfg, [args.manifest], [args.out],
                     {"denoiser_id": bundle.content_hash()})
    return 0


def cmd_extract(args, cfg: RunConfig) -> int:
    verbose = not args.quiet
    manifest = DatasetManifest.load(args.manifest)
    filt = load_residual_filter(args.denoiser)
    _check_filter_size(filt, manifest.working_size)
    train = load_and_split(manifest, workers=cfg.workers, verbose=verbose)["train"]
    if args.n_train:
        train = train.balanced_subset(args.n_train // 2)
    record = _train_record(train, filt, cfg, _model_id(manifest, args.model_id), verbose)
    record.save(args.out)
    _log(args, f"💾 Fingerprint saved to {args.out}")
    write_provenance(_provenance_path(args.out), "extract", cfg, [args.manifest, args.denoiser], [args.out],
                     {"mu_real": record.mu_real, "mu_gen": record.mu_gen, "denoiser_id": record.denoiser_id})
    return 0


def cmd_detect(args, cfg: RunConfig) -> int:
    verbose = not args.quiet
    record = FingerprintRecord.load(args.fingerprint)
    filt = load_residual_filter(args.denoiser)
    check_provenance(record, filt)
    outputs: List[str] = []

    if args.image:
        image = center_crop(load_image(args.image), record.working_size)
        label, rho = score(filt.extract(image, args.image), record)
        line = json.dumps({"label": label.value, "rho": rho})
        print(line)
        inputs = [args.fingerprint, args.denoiser, args.image]
        extra = {"image": args.image, "label": label.value, "rho": rho}
        if args.out:
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            Path(args.out).write_text(line + "\n")
            outputs.append(args.out)
            provenance = _provenance_path(args.out)
        else:
            provenance = str(Path(args.fingerprint).with_suffix(".detect.provenance.json"))
        write_provenance(provenance, "detect", cfg, inputs, outputs, extra)
        return 0

    manifest = DatasetManifest.load(args.manifest)
    splits = load_and_split(manifest, workers=cfg.workers, verbose=verbose)
    dataset = splits["test"] if args.split == "test" else ImageSet.concat([splits["train"], splits["test"]])
    metrics = evaluate(dataset, record, filt, workers=cfg.workers, verbose=verbose)
    _log(args, f"📊 Accuracy {metrics.accuracy:.1f}% (TPR {metrics.tpr:.1f}%, TNR {metrics.tnr:.1f}%) "
               f"over {metrics.n_total} images")
    out = args.out or str(Path(args.fingerprint).with_suffix(".metrics.json"))
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    Path(out).write_text(json.dumps(metrics.summary(), indent=2))
    csv_path = str(Path(out).with_suffix(".csv"))
    metrics.per_image_frame().to_csv(csv_path, index=False)
    outputs = [out, csv_path]
    write_provenance(_provenance_path(out), "detect", cfg, [args.fingerprint, args.denoiser, args.manifest], outputs)
    return 0


def cmd_cross_detect(args, cfg: RunConfig) -> int:
    verbose = not args.quiet
    if len(args.fingerprints) != len(args.manifests):
        raise DataError(f"{len(args.fingerprints)} fingerprints vs {len(args.manifests)} manifests")
    filt = load_residual_filter(args.denoiser)
    records = [FingerprintRecord.load(p) for p in args.fingerprints]
    datasets = []
    for path in args.manifests:
        manifest = DatasetManifest.load(path)
        _check_filter_size(filt, manifest.working_size)
        datasets.append(load_and_split(manifest, workers=cfg.workers, verbose=verbose)["test"])
    ids = _split_list(args.ids) if args.ids else None

    matrix = cross_detect(records, datasets, filt, model_ids=ids, workers=cfg.workers, verbose=verbose)
    matrix.to_csv(args.out)
    outputs = [args.out]
    if args.heatmap:
        outputs.append(matrix.save_heatmap(args.heatmap))
    if args.fp_correlation:
        corr = pd.DataFrame(fingerprint_cross_correlation(records, records[0].correlation_scope),
                            index=matrix.model_ids, columns=matrix.model_ids)
        corr.to_csv(args.fp_correlation, index_label="fingerprint")
        outputs.append(args.fp_correlation)
    if verbose:
        print(matrix.to_frame().round(1).to_string())
    write_provenance(_provenance_path(args.out), "cross-detect", cfg,
                     list(args.fingerprints) + list(args.manifests) + [args.denoiser], outputs)
    return 0


def cmd_lineage(args, cfg: RunConfig) -> int:
    matrix = CrossDetectionMatrix.from_csv(args.matrix)
    report = lineage_clusters(matrix, cfg.t_high, cfg.t_sym)
    out = args.out or str(Path(args.matrix).with_suffix(".lineage.json"))
    report.save_json(out)
    if report.clusters:
        for cluster in report.clusters:
            _log(args, f"🔗 Cluster: {', '.join(cluster)}")
    else:
        _log(args, "🔗 No related models at these thresholds")
    write_provenance(_provenance_path(out), "lineage", cfg, [args.matrix], [out])
    return 0


def cmd_monochrome_lab(args, cfg: RunConfig) -> int:
    archs = _split_list(args.lab_archs)
    table = run_lab(archs, size=cfg.lab_size, steps=cfg.lab_steps, seed=cfg.seed, gray=cfg.gray,
                    hidden_width=cfg.toy_width, out_dir=args.out, verbose=not args.quiet)
    if not args.quiet:
        print(table.to_string(index=False))
    outputs = sorted(str(p) for p in Path(args.out).glob("*") if p.suffix in (".png", ".json"))
    write_provenance(str(Path(args.out) / "provenance.json"), "monochrome-lab", cfg, [], outputs)
    return 0


def cmd_perturb(args, cfg: RunConfig) -> int:
    spec = PerturbationSpec.parse(args.kind, args.quality, args.sigma, cfg.seed)
    written = perturb_directory(args.in_dir, args.out_dir, spec, verbose=not args.quiet)
    write_provenance(str(Path(args.out_dir) / "provenance.json"), "perturb", cfg, [], written,
                     {"perturbation": spec.tag, "in_dir": args.in_dir})
    return 0


def cmd_sweep_train_size(args, cfg: RunConfig) -> int:
    verbose = not args.quiet
    manifest = DatasetManifest.load(args.manifest)
    filt = load_residual_filter(args.denoiser)
    _check_filter_size(filt, manifest.working_size)
    splits = load_and_split(manifest, workers=cfg.workers, verbose=verbose)
    model_id = _model_id(manifest, None)

    rows = []
    for n_train in (int(s) for s in _split_list(args.sizes)):
        train = splits["train"].balanced_subset(n_train // 2)
        record = _train_record(train, filt, cfg, model_id, verbose)
        metrics = evaluate(splits["test"], record, filt, workers=cfg.workers)
        rows.append({"n_train": len(train), "accuracy": metrics.accuracy, "tpr": metrics.tpr,
                     "tnr": metrics.tnr, "mu_real": record.mu_real, "mu_gen": record.mu_gen})
        _log(args, f"📊 N_S={len(train)}: accuracy {metrics.accuracy:.1f}%")

    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows).to_csv(args.out, index=False)
    write_provenance(_provenance_path(args.out), "sweep-train-size", cfg, [args.manifest, args.denoiser],
                     [args.out])
    return 0


def cmd_ablate(args, cfg: RunConfig) -> int:
    verbose = not args.quiet
    manifest = DatasetManifest.load(args.manifest)
    filt = load_residual_filter(args.denoiser)
    _check_filter_size(filt, manifest.working_size)
    splits = load_and_split(manifest, workers=cfg.workers, verbose=verbose)
    model_id = _model_id(manifest, None)

    rows = []
    for arch in _split_list(args.archs):
        arch_cfg = replace(cfg, arch=arch).validate()
        record = _train_record(splits["train"], filt, arch_cfg, model_id, verbose)
        metrics = evaluate(splits["test"], record, filt, workers=cfg.workers)
        rows.append({"arch": arch, "accuracy": metrics.accuracy, "mu_real": record.mu_real,
                     "mu_gen": record.mu_gen})
        _log(args, f"📊 {arch}: accuracy {metrics.accuracy:.1f}%")

    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows).to_csv(args.out, index=False)
    write_provenance(_provenance_path(args.out), "ablate", cfg, [args.manifest, args.denoiser], [args.out])
    return 0


def cmd_oracle(args, cfg: RunConfig) -> int:
    pattern = parse_pattern(args.pattern, amplitude=cfg.amplitude)
    manifest_path = write_oracle_corpus(args.out, pattern, args.count, cfg.working_size, seed=cfg.seed,
                                        noise_sigma=cfg.noise_sigma, model_id=args.model_id)
    _log(args, f"✅ Oracle corpus ({pattern.describe()}, amplitude {cfg.amplitude:g}/255): {manifest_path}")
    write_provenance(str(Path(args.out) / "provenance.json"), "oracle", cfg, [], [manifest_path],
                     {"pattern": pattern.describe()})
    return 0


def cmd_jpeg_stats(args, cfg: RunConfig) -> int:
    stats = jpeg_quality_stats(args.in_dir, verbose=not args.quiet)
    document = {"mean": stats.mean, "median": stats.median, "count": stats.count, "skipped": stats.skipped}
    print(json.dumps(document))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps({**document, "per_file": stats.per_file}, indent=2))
        write_provenance(_provenance_path(args.out), "jpeg-stats", cfg, [], [args.out])
    return 0


# ============================================================================
# Parser
# ============================================================================

def _add_extraction_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--arch", choices=[a.value for a in GENERATOR_ARCHS], default=None)
    parser.add_argument("--margin", type=float, default=None, help="Margin m (default 0.01)")
    parser.add_argument("--lr", type=float, default=None, help="Adam learning rate (default 5e-4)")
    parser.add_argument("--steps", type=int, default=None, help="Optimization steps (default 2000)")
    parser.add_argument("--ema-decay", dest="ema_decay", type=float, default=None)
    parser.add_argument("--batch", type=int, default=None, help="Residuals per class per step (default 8)")
    parser.add_argument("--correlation-scope", dest="correlation_scope", choices=["channel", "tensor"],
                        default=None)
    parser.add_argument("--margin-clamp", dest="margin_clamp", action="store_true", default=None,
                        help="Use max(0, m - D) for the negative-pair term")
    parser.add_argument("--method", choices=["dif", "average", "fourier"], default=None)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (a provenance JSON also works)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--workers", type=int, default=None, help="Threads for per-image work")
    common.add_argument("--no-env", action="store_true", help="Ignore DIF_* environment variables")
    common.add_argument("--quiet", action="store_true", help="Only print results")

    parser = argparse.ArgumentParser(
        description="Deep image fingerprints: extraction, detection and lineage analysis",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python dif.py oracle --pattern checkerboard:2 --count 256 --out runs/oracle
  python dif.py train-denoiser --manifest runs/oracle/manifest.json --out runs/dncnn.dif
  python dif.py extract --manifest runs/oracle/manifest.json --denoiser runs/dncnn.dif --out runs/fp.dif
  python dif.py detect --fingerprint runs/fp.dif --denoiser runs/dncnn.dif --manifest runs/oracle/manifest.json
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-denoiser", parents=[common], help="Train DnCNN-S on the real images")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", dest="denoiser_epochs", type=int, default=None)
    p.add_argument("--denoiser-lr", dest="denoiser_lr", type=float, default=None)
    p.add_argument("--crop", type=int, default=None)
    p.add_argument("--images", dest="denoiser_images", type=int, default=None)
    p.add_argument("--depth", dest="dncnn_depth", type=int, default=None)
    p.add_argument("--width", dest="dncnn_width", type=int, default=None)
    p.set_defaults(func=cmd_train_denoiser)

    p = sub.add_parser("extract", parents=[common], help="Extract a fingerprint record")
    p.add_argument("--manifest", required=True)
    p.add_argument("--denoiser", required=True, help="DIF1 denoiser checkpoint or gaussian[:sigma]")
    p.add_argument("--out", required=True)
    p.add_argument("--model-id", dest="model_id", default=None)
    p.add_argument("--n-train", dest="n_train", type=int, default=None, help="Total training images N_S")
    _add_extraction_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("detect", parents=[common], help="Classify images with a fingerprint")
    p.add_argument("--fingerprint", required=True)
    p.add_argument("--denoiser", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--manifest")
    group.add_argument("--image")
    p.add_argument("--split", choices=["test", "all"], default="test")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("cross-detect", parents=[common], help="Cross-detection matrix")
    p.add_argument("--fingerprints", nargs="+", required=True)
    p.add_argument("--manifests", nargs="+", required=True)
    p.add_argument("--denoiser", required=True)
    p.add_argument("--ids", default=None, help="Comma-separated model ids")
    p.add_argument("--out", required=True, help="CSV output")
    p.add_argument("--heatmap", default=None, help="Optional PNG heatmap")
    p.add_argument("--fp-correlation", dest="fp_correlation", default=None,
                   help="Optional CSV of pairwise fingerprint correlations")
    p.set_defaults(func=cmd_cross_detect)

    p = sub.add_parser("lineage", parents=[common], help="Cluster related models")
    p.add_argument("--matrix", required=True)
    p.add_argument("--t-high", dest="t_high", type=float, default=None)
    p.add_argument("--t-sym", dest="t_sym", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_lineage)

    p = sub.add_parser("monochrome-lab", parents=[common], help="Constant-image artifact experiment")
    p.add_argument("--arch", dest="lab_archs", default=",".join(LAB_ARCHS), help="Comma-separated architectures")
    p.add_argument("--size", dest="lab_size", type=int, default=None)
    p.add_argument("--steps", dest="lab_steps", type=int, default=None)
    p.add_argument("--gray", type=float, default=None)
    p.add_argument("--width", dest="toy_width", type=int, default=None)
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(func=cmd_monochrome_lab)

    p = sub.add_parser("perturb", parents=[common], help="Write a perturbed copy of an image tree")
    p.add_argument("--in-dir", dest="in_dir", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--kind", required=True, choices=["none", "jpeg", "resize", "blur", "mixed"])
    p.add_argument("--quality", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("sweep-train-size", parents=[common], help="Accuracy as a function of N_S")
    p.add_argument("--manifest", required=True)
    p.add_argument("--denoiser", required=True)
    p.add_argument("--sizes", default="128,256,512,1024")
    p.add_argument("--out", required=True)
    _add_extraction_flags(p)
    p.set_defaults(func=cmd_sweep_train_size)

    p = sub.add_parser("ablate", parents=[common], help="Extraction accuracy per generator architecture")
    p.add_argument("--manifest", required=True)
    p.add_argument("--denoiser", required=True)
    p.add_argument("--archs", default=",".join(a.value for a in GENERATOR_ARCHS))
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("oracle", parents=[common], help="Synthetic corpus with an injected pattern")
    p.add_argument("--pattern", default="checkerboard:2")
    p.add_argument("--amplitude", type=float, default=None, help="Peak amplitude in 1/255 units")
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=None)
    p.add_argument("--count", type=int, default=256, help="Images per class")
    p.add_argument("--size", dest="working_size", type=int, default=None)
    p.add_argument("--model-id", dest="model_id", default="oracle")
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("jpeg-stats", parents=[common], help="Mean/median JPEG quality of a directory")
    p.add_argument("--in-dir", dest="in_dir", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_jpeg_stats)

    return parser


def flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Config keys given explicitly on the command line"""
    return {k: v for k, v in vars(args).items() if k in CONFIG_KEYS and v is not None}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_run_config(args.config, flag_overrides(args), use_env=not args.no_env)
        return args.func(args, cfg)
    except DIFError as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
