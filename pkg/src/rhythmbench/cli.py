"""Command-line harness.

Subcommands: extract, trial, baselines, repartition, dilate, crosseval,
report. Every command stamps its outputs with the pipeline hash and the full
config hash, and refuses to combine artifacts whose pipeline hashes differ.
Outputs contain no wall-clock data, so identical invocations produce
byte-identical result trees.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .audio import RESAMPLER_DESCRIPTIONS, load_wav
from .config import BASELINE_MODELS, RunConfig, build_run_config
from .datasets import DatasetManifest, ingest, random_partition, read_manifest_csv, write_manifest_csv
from .experiments import (
    DEFAULT_CONTRASTS,
    baseline_distribution,
    cross_dataset_eval,
    dilation_probe,
    fit_models,
    random_reference_level,
    repartition_study,
    run_trial,
    write_contrasts_csv,
    write_dilation_csv,
    write_figures_csv,
    write_json,
    write_repartition_trials_csv,
)
from .features import (
    FeatureRecord,
    FeatureTable,
    extract_feature,
    fit_normalizer,
    read_feature_cache,
    write_feature_cache,
)
from .metrics import FIGURE_NAMES
from .models import save_models

logger = logging.getLogger("rhythmbench")

SAMPLED_BASELINES = ("unif", "freq")


class CliError(Exception):
    """User-facing command failure; rendered as a machine-readable record."""


def _extract_one(task: tuple[str | None, str, str, dict]) -> FeatureRecord:
    root, clip_id, label, pipeline_dict = task
    from .config import PipelineConfig

    pipeline = PipelineConfig(**pipeline_dict)
    path = Path(root) / clip_id if root else Path(clip_id)
    clip = load_wav(path, target_rate=pipeline.sample_rate, resampler=pipeline.resampler, clip_id=clip_id)
    feature = extract_feature(clip, pipeline)
    return FeatureRecord(
        clip_id=clip_id, label=label, values=feature.values, pipeline_hash=pipeline.hash
    )


def extract_features_from_manifest(
    manifest: DatasetManifest, pipeline, workers: int = 1
) -> list[FeatureRecord]:
    """Decode and featurize every manifest entry, in manifest order."""
    tasks = [
        (manifest.root, clip_id, label, pipeline.to_dict()) for clip_id, label in manifest.entries
    ]
    if workers <= 1:
        return [_extract_one(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_extract_one, tasks, chunksize=8))


def _run_record(cfg: RunConfig, command: str, **extra) -> dict:
    record = {
        "command": command,
        "version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash,
        "pipeline_hash": cfg.pipeline_hash,
        "seed": cfg.seed,
    }
    record.update(extra)
    return record


def _load_manifest(cfg: RunConfig) -> DatasetManifest:
    if cfg.manifest:
        return read_manifest_csv(cfg.manifest, root=cfg.dataset_root)
    if cfg.dataset_root:
        return ingest(cfg.dataset_root)
    raise CliError("no dataset given: pass --root or --manifest")


def _load_table(cfg: RunConfig, features_path: str | None) -> FeatureTable:
    path = Path(features_path) if features_path else Path(cfg.out) / "features.csv"
    if not path.is_file():
        raise CliError(f"no feature cache at {path}; run extract first")
    table = read_feature_cache(path)
    if table.pipeline_hash != cfg.pipeline_hash:
        raise CliError(
            f"pipeline hash mismatch: cache {path} has {table.pipeline_hash}, "
            f"config is {cfg.pipeline_hash}"
        )
    return table


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_extract(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    manifest = _load_manifest(cfg)
    records = extract_features_from_manifest(manifest, cfg.pipeline, workers=cfg.workers)
    write_feature_cache(out / "features.csv", records)
    write_manifest_csv(manifest, out / "manifest.csv")
    if manifest.excluded:
        with open(out / "exclusions.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path"])
            for path in manifest.excluded:
                writer.writerow([path])
    write_json(
        out / "extract_run.json",
        _run_record(
            cfg,
            "extract",
            clips=len(manifest),
            excluded=list(manifest.excluded),
            labels=list(manifest.label_vocabulary),
            resampler=RESAMPLER_DESCRIPTIONS[cfg.pipeline.resampler],
        ),
    )
    logger.info("extracted features clips=%d out=%s", len(manifest), out)
    return 0


def _partition_labels(table: FeatureTable, cfg: RunConfig):
    partition = random_partition(
        table.ids, cfg.ratio, cfg.seed, stratified=cfg.stratified, labels=table.labels
    )
    train_y = table.label_indices(partition.train_ids)
    test_y = table.label_indices(partition.test_ids)
    return partition, train_y, test_y


def cmd_trial(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    table = _load_table(cfg, args.features)
    partition, train_y, test_y = _partition_labels(table, cfg)
    point_specs = [m for m in cfg.models if m not in SAMPLED_BASELINES]
    outcome = run_trial(table, partition, point_specs, seed=cfg.seed)
    dist = None
    if any(m in SAMPLED_BASELINES for m in cfg.models):
        dist = baseline_distribution(
            train_y, test_y, table.n_classes, n_draws=cfg.baseline_draws, seed=cfg.seed
        )
    write_figures_csv(
        out / "trial.csv", cfg.models, outcome.reports, dist, cfg.pipeline_hash, cfg.hash, cfg.seed
    )
    payload = _run_record(
        cfg,
        "trial",
        train_size=len(partition.train_ids),
        test_size=len(partition.test_ids),
        reports={name: r.to_dict() for name, r in outcome.reports.items()},
        baselines=dist.to_dict() if dist else None,
    )
    write_json(out / "trial.json", payload)
    save_models(out / "models.json", outcome.models, cfg.pipeline_hash, cfg.hash)
    logger.info(
        "trial done train=%d test=%d out=%s",
        len(partition.train_ids),
        len(partition.test_ids),
        out,
    )
    return 0


def cmd_baselines(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    table = _load_table(cfg, args.features)
    partition, train_y, test_y = _partition_labels(table, cfg)
    dist = baseline_distribution(
        train_y, test_y, table.n_classes, n_draws=cfg.baseline_draws, seed=cfg.seed
    )
    write_figures_csv(
        out / "baselines.csv", BASELINE_MODELS, {}, dist, cfg.pipeline_hash, cfg.hash, cfg.seed
    )
    write_json(
        out / "baselines.json",
        _run_record(cfg, "baselines", test_size=len(partition.test_ids), baselines=dist.to_dict()),
    )
    logger.info("baseline distribution done draws=%d out=%s", cfg.baseline_draws, out)
    return 0


def cmd_repartition(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    table = _load_table(cfg, args.features)
    specs = tuple(m for m in cfg.models if m not in BASELINE_MODELS)
    if not specs:
        raise CliError("repartition needs at least one learned model")
    known = set(specs)
    contrasts = tuple(
        c for c in DEFAULT_CONTRASTS if set(c.left) | set(c.right) <= known
    )
    for skipped in set(c.name for c in DEFAULT_CONTRASTS) - set(c.name for c in contrasts):
        logger.info("skipping contrast without its models name=%s", skipped)
    study = repartition_study(
        table,
        n_trials=cfg.trials,
        base_seed=cfg.seed,
        ratio=cfg.ratio,
        model_specs=specs,
        contrasts=contrasts,
        stratified=cfg.stratified,
    )
    write_repartition_trials_csv(out / "repartition_trials.csv", study, cfg.pipeline_hash, cfg.hash)
    write_contrasts_csv(out / "contrasts.csv", study, cfg.pipeline_hash, cfg.hash)
    write_json(out / "repartition.json", _run_record(cfg, "repartition", **study.to_dict()))
    logger.info("repartition study done trials=%d out=%s", cfg.trials, out)
    return 0


def cmd_dilate(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    table = _load_table(cfg, args.features)
    manifest = _load_manifest(cfg)
    partition, train_y, test_y = _partition_labels(table, cfg)
    missing = [i for i in partition.test_ids if i not in set(manifest.ids)]
    if missing:
        raise CliError(f"test clips missing from the manifest: {missing[:5]}")
    specs = tuple(m for m in cfg.models if m not in BASELINE_MODELS)
    if not specs:
        raise CliError("dilate needs at least one learned model")
    outcome = run_trial(table, partition, specs, seed=cfg.seed)
    dist = baseline_distribution(
        train_y, test_y, table.n_classes, n_draws=cfg.baseline_draws, seed=cfg.seed
    )
    clips = [
        load_wav(
            manifest.path_of(clip_id),
            target_rate=cfg.pipeline.sample_rate,
            resampler=cfg.pipeline.resampler,
            clip_id=clip_id,
        )
        for clip_id in partition.test_ids
    ]
    curve = dilation_probe(
        outcome.models,
        outcome.normalizer,
        clips,
        test_y,
        table.n_classes,
        cfg.factors,
        cfg.pipeline,
        random_reference=random_reference_level(dist),
    )
    write_dilation_csv(out / "dilation.csv", curve, cfg.pipeline_hash, cfg.hash, cfg.seed)
    write_json(out / "dilate.json", _run_record(cfg, "dilate", **curve.to_dict()))
    logger.info("dilation probe done factors=%d out=%s", len(cfg.factors), out)
    return 0


def cmd_crosseval(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    if not args.train_features or not args.test_features:
        raise CliError("crosseval needs --train-features and --test-features")
    table_a = _load_table(cfg, args.train_features)
    table_b = _load_table(cfg, args.test_features)
    train_x, train_y = table_a.select(table_a.ids)
    normalizer = fit_normalizer(train_x)
    point_specs = [m for m in cfg.models if m not in SAMPLED_BASELINES]
    models = fit_models(normalizer.transform(train_x), train_y, table_a.n_classes, point_specs)
    rng = np.random.default_rng(cfg.seed)
    reports, _ = cross_dataset_eval(models, normalizer, table_a.vocabulary, table_b, rng)
    dist = None
    if any(m in SAMPLED_BASELINES for m in cfg.models):
        test_y = table_b.label_indices()
        dist = baseline_distribution(
            train_y, test_y, table_a.n_classes, n_draws=cfg.baseline_draws, seed=cfg.seed
        )
    write_figures_csv(
        out / "crosseval.csv", cfg.models, reports, dist, cfg.pipeline_hash, cfg.hash, cfg.seed
    )
    write_json(
        out / "crosseval.json",
        _run_record(
            cfg,
            "crosseval",
            train_size=len(table_a),
            test_size=len(table_b),
            reports={name: r.to_dict() for name, r in reports.items()},
            baselines=dist.to_dict() if dist else None,
        ),
    )
    logger.info("cross-dataset eval done train=%d test=%d out=%s", len(table_a), len(table_b), out)
    return 0


def _read_csv_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _format_figure_table(rows: list[dict]) -> list[str]:
    lines = [f"{'model':<8}" + "".join(f"{name:>12}" for name in FIGURE_NAMES)]
    for row in rows:
        cells = []
        for name in FIGURE_NAMES:
            value = float(row[name])
            std = row.get(f"{name}_std", "")
            if std not in ("", None):
                cells.append(f"{value:.3f}+-{float(std):.3f}")
            else:
                cells.append(f"{value:.3f}")
        lines.append(f"{row['model']:<8}" + "".join(f"{cell:>12}" for cell in cells))
    return lines


def cmd_report(cfg: RunConfig, args) -> int:
    out = Path(cfg.out)
    tables: list[str] = []
    hashes: dict[str, str] = {}

    sections = [
        ("trial.csv", "single train/test trial"),
        ("crosseval.csv", "cross-dataset evaluation"),
        ("baselines.csv", "random baseline distribution"),
    ]
    found_any = False
    for filename, title in sections:
        path = out / filename
        if not path.is_file():
            continue
        rows = _read_csv_rows(path)
        if not rows:
            continue
        found_any = True
        hashes[filename] = rows[0]["pipeline_hash"]
        tables.append(f"== {title} ==")
        tables.extend(_format_figure_table(rows))
        tables.append("")

    contrasts_path = out / "contrasts.csv"
    if contrasts_path.is_file():
        rows = _read_csv_rows(contrasts_path)
        if rows:
            found_any = True
            hashes["contrasts.csv"] = rows[0]["pipeline_hash"]
            tables.append("== repartition contrasts ==")
            tables.append(
                f"{'contrast':<28}{'figure':>10}{'mean':>10}{'std':>10}{'p_emp':>10}{'p_gauss':>12}"
            )
            for row in rows:
                tables.append(
                    f"{row['contrast']:<28}{row['figure']:>10}"
                    f"{float(row['mean']):>10.4f}{float(row['std']):>10.4f}"
                    f"{float(row['empirical_negative_fraction']):>10.3f}"
                    f"{float(row['gaussian_negative_fraction']):>12.3e}"
                )
            tables.append("")

    dilation_path = out / "dilation.csv"
    if dilation_path.is_file():
        rows = _read_csv_rows(dilation_path)
        if rows:
            found_any = True
            hashes["dilation.csv"] = rows[0]["pipeline_hash"]
            models = list(dict.fromkeys(row["model"] for row in rows))
            factors = list(dict.fromkeys(row["factor"] for row in rows))
            by_key = {(row["factor"], row["model"]): row["accuracy"] for row in rows}
            fig_path = out / "fig_dilation.csv"
            with open(fig_path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["factor", *models, "random_reference"])
                for factor in factors:
                    writer.writerow(
                        [factor, *(by_key[(factor, m)] for m in models), rows[0]["random_reference"]]
                    )
            tables.append("== dilation probe ==")
            tables.append(f"{'factor':>8}" + "".join(f"{m:>8}" for m in models) + f"{'random':>8}")
            for factor in factors:
                cells = "".join(f"{float(by_key[(factor, m)]):>8.3f}" for m in models)
                tables.append(
                    f"{float(factor):>8.3f}" + cells + f"{float(rows[0]['random_reference']):>8.3f}"
                )
            tables.append(f"(plot-ready data written to {fig_path})")
            tables.append("")

    if not found_any:
        raise CliError(f"no results found in {out}")
    unique_hashes = sorted(set(hashes.values()))
    if len(unique_hashes) > 1:
        detail = ", ".join(f"{name}={value}" for name, value in sorted(hashes.items()))
        raise CliError(f"refusing to mix artifacts with mismatched pipeline hashes: {detail}")

    text = "\n".join(tables).rstrip() + "\n"
    (out / "report.txt").write_text(text)
    print(text, end="")
    return 0


COMMANDS = {
    "extract": cmd_extract,
    "trial": cmd_trial,
    "baselines": cmd_baselines,
    "repartition": cmd_repartition,
    "dilate": cmd_dilate,
    "crosseval": cmd_crosseval,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rhythmbench",
        description="Rhythm-feature classification experiments with validity audits.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp: argparse.ArgumentParser) -> argparse.ArgumentParser:
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--seed", type=int, help="base RNG seed")
        sp.add_argument("--trials", type=int, help="number of repartition trials")
        sp.add_argument("--ratio", type=float, help="train fraction of the split")
        sp.add_argument("--factors", help="comma-separated dilation factors")
        sp.add_argument("--out", help="results directory")
        sp.add_argument("--manifest", help="manifest CSV (path,label)")
        sp.add_argument("--models", help="comma-separated model list")
        return sp

    sp = add_common(sub.add_parser("extract", help="decode audio and cache features"))
    sp.add_argument("--root", help="dataset root with one directory per label")
    sp.add_argument("--workers", type=int, help="extraction worker processes")

    for name, about in (
        ("trial", "one train/test split, all models"),
        ("baselines", "random-baseline distribution on one split"),
        ("repartition", "repeated-partition contrast study"),
    ):
        sp = add_common(sub.add_parser(name, help=about))
        sp.add_argument("--features", help="feature cache CSV (default: <out>/features.csv)")
        sp.add_argument("--draws", type=int, help="baseline label drawings")
        sp.add_argument("--stratified", action="store_true", help="stratify the split by label")

    sp = add_common(sub.add_parser("dilate", help="time-dilation confound probe"))
    sp.add_argument("--root", help="dataset root with one directory per label")
    sp.add_argument("--features", help="feature cache CSV (default: <out>/features.csv)")
    sp.add_argument("--draws", type=int, help="baseline label drawings")
    sp.add_argument("--stratified", action="store_true", help="stratify the split by label")

    sp = add_common(sub.add_parser("crosseval", help="train on one corpus, test on another"))
    sp.add_argument("--train-features", help="feature cache CSV of the training corpus")
    sp.add_argument("--test-features", help="feature cache CSV of the evaluation corpus")
    sp.add_argument("--draws", type=int, help="baseline label drawings")

    add_common(sub.add_parser("report", help="render result tables from a results directory"))
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    overrides = {
        "seed": args.seed,
        "trials": args.trials,
        "ratio": args.ratio,
        "factors": args.factors,
        "out": args.out,
        "manifest": args.manifest,
        "models": args.models,
        "baseline_draws": getattr(args, "draws", None),
        "dataset_root": getattr(args, "root", None),
        "workers": getattr(args, "workers", None),
    }
    if getattr(args, "stratified", False):
        overrides["stratified"] = True
    return overrides


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    try:
        cfg = build_run_config(args.config, _overrides(args))
        return COMMANDS[args.command](cfg, args)
    except (CliError, ValueError, OSError) as exc:
        print(json.dumps({"error": str(exc), "command": args.command}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
