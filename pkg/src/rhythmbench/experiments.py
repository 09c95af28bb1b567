"""Experiment orchestration: single train/test trials, random-baseline
distributions, the repeated-repartition contrast study, the time-dilation
probe, and cross-dataset evaluation.

Every experiment is reproducible from (feature table, config, seed): trial t
of a study uses seed base_seed + t for both its partition and its RNG stream,
so per-trial results do not depend on execution order.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import ndtr

from .config import DEFAULT_MODELS, LEARNED_MODELS, PipelineConfig
from .datasets import Partition, random_partition
from .dsp import time_stretch
from .features import FeatureTable, Normalizer, extract_feature, fit_normalizer
from .metrics import FIGURE_NAMES, ConfusionMatrix, FigureOfMerit, confusion, figures_of_merit
from .models import (
    BASELINE_KINDS,
    GAUSSIAN_KINDS,
    KnnClassifier,
    knn_votes,
    parse_model_spec,
    predict_model,
    train_baseline,
    train_gaussian,
    train_knn,
)


@dataclass(frozen=True)
class EvaluationReport:
    """One model's confusion matrix and figures of merit on one test set."""

    model: str
    figures: FigureOfMerit
    confusion: ConfusionMatrix

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "figures": self.figures.as_dict(),
            "confusion": self.confusion.counts.tolist(),
        }


@dataclass
class TrialOutcome:
    """Everything produced by one train/test trial."""

    reports: dict[str, EvaluationReport]
    predictions: dict[str, np.ndarray]
    normalizer: Normalizer
    models: dict[str, object]
    partition: Partition


def fit_models(
    features: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    model_specs: Sequence[str] = DEFAULT_MODELS,
) -> dict[str, object]:
    """Train one model per spec string on (already normalized) features."""
    if len(set(model_specs)) != len(model_specs):
        raise ValueError("duplicate model specs")
    models: dict[str, object] = {}
    for spec in model_specs:
        family, k = parse_model_spec(spec)
        if family in GAUSSIAN_KINDS:
            models[spec] = train_gaussian(features, labels, n_classes, kind=family)
        elif family == "knn":
            models[spec] = train_knn(features, labels, k, n_classes)
        else:
            models[spec] = train_baseline(labels, n_classes, kind=family)
    return models


def evaluate_models(
    models: Mapping[str, object],
    features: np.ndarray,
    true_labels: np.ndarray,
    n_classes: int,
    rng: np.random.Generator | None = None,
) -> tuple[dict[str, EvaluationReport], dict[str, np.ndarray]]:
    """Predict with every model and score against the true labels.

    Random baselines draw from `rng` in model order. kNN models sharing one
    training set reuse a single distance computation.
    """
    true_labels = np.asarray(true_labels)
    predictions: dict[str, np.ndarray] = {}
    knn_groups: dict[tuple[int, int], list[str]] = {}
    for name, model in models.items():
        if isinstance(model, KnnClassifier):
            knn_groups.setdefault((id(model.features), id(model.labels)), []).append(name)
        else:
            predictions[name] = predict_model(model, features, rng)
    for names in knn_groups.values():
        first = models[names[0]]
        ks = tuple(sorted({models[n].k for n in names}))
        votes = knn_votes(first.features, first.labels, features, ks, n_classes)
        for name in names:
            predictions[name] = votes[models[name].k]
    reports: dict[str, EvaluationReport] = {}
    for name in models:
        cm = confusion(true_labels, predictions[name], n_classes)
        reports[name] = EvaluationReport(model=name, figures=figures_of_merit(cm), confusion=cm)
    return reports, predictions


def run_trial(
    table: FeatureTable,
    partition: Partition,
    model_specs: Sequence[str] = DEFAULT_MODELS,
    seed: int = 0,
) -> TrialOutcome:
    """One full trial: normalize on train only, train every model, evaluate.

    The normalizer and all models see training rows exclusively; test labels
    enter only when predictions are scored.
    """
    train_x, train_y = table.select(partition.train_ids)
    test_x, test_y = table.select(partition.test_ids)
    normalizer = fit_normalizer(train_x)
    models = fit_models(normalizer.transform(train_x), train_y, table.n_classes, model_specs)
    rng = np.random.default_rng(seed)
    reports, predictions = evaluate_models(
        models, normalizer.transform(test_x), test_y, table.n_classes, rng
    )
    return TrialOutcome(
        reports=reports,
        predictions=predictions,
        normalizer=normalizer,
        models=models,
        partition=partition,
    )


@dataclass(frozen=True)
class FigureStats:
    mean: float
    std: float


@dataclass
class BaselineDistribution:
    """Figure-of-merit statistics for the random baselines on one test set.

    unif and freq are sampled over `n_draws` label drawings (mean and
    population std per figure); maj is a point value with std 0.
    """

    n_draws: int
    seed: int
    stats: dict[str, dict[str, FigureStats]]

    def to_dict(self) -> dict:
        return {
            "n_draws": self.n_draws,
            "seed": self.seed,
            "stats": {
                kind: {name: {"mean": s.mean, "std": s.std} for name, s in figs.items()}
                for kind, figs in self.stats.items()
            },
        }


def baseline_distribution(
    train_labels,
    test_labels,
    n_classes: int,
    n_draws: int = 10000,
    seed: int = 0,
) -> BaselineDistribution:
    """Empirical distribution of baseline figures over repeated label draws."""
    if n_draws < 100:
        raise ValueError("n_draws must be at least 100")
    test_y = np.asarray(test_labels)
    rng = np.random.default_rng(seed)
    stats: dict[str, dict[str, FigureStats]] = {}
    for kind in BASELINE_KINDS:
        model = train_baseline(train_labels, n_classes, kind)
        if kind == "maj":
            pred = predict_model(model, np.empty((test_y.size, 1)))
            point = figures_of_merit(confusion(test_y, pred, n_classes))
            stats[kind] = {
                name: FigureStats(mean=value, std=0.0) for name, value in point.as_dict().items()
            }
            continue
        samples = np.empty((n_draws, len(FIGURE_NAMES)))
        for i in range(n_draws):
            pred = predict_model(model, np.empty((test_y.size, 1)), rng)
            samples[i] = figures_of_merit(confusion(test_y, pred, n_classes)).as_tuple()
        means = samples.mean(axis=0)
        stds = samples.std(axis=0)
        stats[kind] = {
            name: FigureStats(mean=float(means[j]), std=float(stds[j]))
            for j, name in enumerate(FIGURE_NAMES)
        }
    return BaselineDistribution(n_draws=n_draws, seed=seed, stats=stats)


def random_reference_level(dist: BaselineDistribution) -> float:
    """Mean accuracy of the best sampled baseline plus twice its std."""
    return max(
        dist.stats[kind]["accuracy"].mean + 2.0 * dist.stats[kind]["accuracy"].std
        for kind in ("unif", "freq")
    )


@dataclass(frozen=True)
class Contrast:
    """Per-trial difference: best of `left` minus best of `right`."""

    name: str
    left: tuple[str, ...]
    right: tuple[str, ...]


DEFAULT_CONTRASTS = (
    Contrast("best_gaussian_vs_best_knn", ("lda", "qda"), ("1nn", "3nn", "5nn", "7nn", "9nn")),
    Contrast("qda_vs_best_other", ("qda",), ("lda", "1nn", "3nn", "5nn", "7nn", "9nn")),
)


@dataclass(frozen=True)
class ContrastSummary:
    mean: float
    std: float
    empirical_negative_fraction: float
    gaussian_negative_fraction: float


@dataclass
class ContrastStudy:
    """Per-trial figures for every model plus contrast distributions."""

    n_trials: int
    base_seed: int
    ratio: float
    model_figures: dict[str, dict[str, np.ndarray]]
    contrast_samples: dict[str, dict[str, np.ndarray]]
    contrast_stats: dict[str, dict[str, ContrastSummary]]

    def to_dict(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "base_seed": self.base_seed,
            "ratio": self.ratio,
            "contrasts": {
                cname: {
                    fname: {
                        "mean": s.mean,
                        "std": s.std,
                        "empirical_negative_fraction": s.empirical_negative_fraction,
                        "gaussian_negative_fraction": s.gaussian_negative_fraction,
                    }
                    for fname, s in figs.items()
                }
                for cname, figs in self.contrast_stats.items()
            },
        }


def _contrast_summary(samples: np.ndarray) -> ContrastSummary:
    mean = float(samples.mean())
    std = float(samples.std(ddof=1)) if samples.size > 1 else 0.0
    empirical = float((samples <= 0.0).mean())
    if std > 0.0:
        gaussian = float(ndtr((0.0 - mean) / std))
    else:
        gaussian = 1.0 if mean <= 0.0 else 0.0
    return ContrastSummary(
        mean=mean,
        std=std,
        empirical_negative_fraction=empirical,
        gaussian_negative_fraction=gaussian,
    )


def repartition_study(
    table: FeatureTable,
    n_trials: int,
    base_seed: int,
    ratio: float = 0.7,
    model_specs: Sequence[str] = LEARNED_MODELS,
    contrasts: Sequence[Contrast] = DEFAULT_CONTRASTS,
    stratified: bool = False,
) -> ContrastStudy:
    """Repeat the trial over fresh random partitions and contrast the models.

    Trial t draws its partition (and RNG stream) from seed base_seed + t.
    Each contrast's exceedance is reported two ways: the empirical fraction
    of trials with contrast <= 0, and the lower tail of a Gaussian fitted to
    the contrast samples.
    """
    if n_trials < 2:
        raise ValueError("n_trials must be at least 2")
    known = set(model_specs)
    for contrast in contrasts:
        members = set(contrast.left) | set(contrast.right)
        if not members <= known:
            raise ValueError(
                f"contrast {contrast.name!r} references models outside the study: "
                f"{sorted(members - known)}"
            )
    model_figures = {
        spec: {name: np.empty(n_trials) for name in FIGURE_NAMES} for spec in model_specs
    }
    for t in range(n_trials):
        try:
            partition = random_partition(
                table.ids, ratio, base_seed + t, stratified=stratified, labels=table.labels
            )
            outcome = run_trial(table, partition, model_specs, seed=base_seed + t)
        except ValueError as exc:
            raise ValueError(f"trial {t} failed: {exc}") from exc
        for spec in model_specs:
            figures = outcome.reports[spec].figures.as_dict()
            for name in FIGURE_NAMES:
                model_figures[spec][name][t] = figures[name]

    contrast_samples: dict[str, dict[str, np.ndarray]] = {}
    contrast_stats: dict[str, dict[str, ContrastSummary]] = {}
    for contrast in contrasts:
        samples_by_figure: dict[str, np.ndarray] = {}
        stats_by_figure: dict[str, ContrastSummary] = {}
        for name in FIGURE_NAMES:
            left = np.max([model_figures[m][name] for m in contrast.left], axis=0)
            right = np.max([model_figures[m][name] for m in contrast.right], axis=0)
            samples = left - right
            samples_by_figure[name] = samples
            stats_by_figure[name] = _contrast_summary(samples)
        contrast_samples[contrast.name] = samples_by_figure
        contrast_stats[contrast.name] = stats_by_figure
    return ContrastStudy(
        n_trials=n_trials,
        base_seed=base_seed,
        ratio=ratio,
        model_figures=model_figures,
        contrast_samples=contrast_samples,
        contrast_stats=contrast_stats,
    )


@dataclass
class DilationCurve:
    """Accuracy per model across time-dilation factors, with the reference
    level that random performance would reach (best sampled baseline mean
    plus two std)."""

    factors: tuple[float, ...]
    accuracies: dict[str, tuple[float, ...]]
    random_reference: float

    def to_dict(self) -> dict:
        return {
            "factors": list(self.factors),
            "accuracies": {name: list(values) for name, values in self.accuracies.items()},
            "random_reference": self.random_reference,
        }


def dilation_probe(
    models: Mapping[str, object],
    normalizer: Normalizer,
    clips: Sequence,
    labels,
    n_classes: int,
    factors: Sequence[float],
    config: PipelineConfig,
    random_reference: float,
    stretch_fn: Callable | None = None,
    extract_fn: Callable | None = None,
) -> DilationCurve:
    """Evaluate trained models on time-dilated copies of the test clips.

    Factor 1.0 bypasses resynthesis entirely, so its accuracies match the
    undilated evaluation bit for bit. `stretch_fn` and `extract_fn` exist for
    controlled substitutions in tests; the defaults are the production
    pipeline.
    """
    factors = tuple(float(f) for f in factors)
    if not factors:
        raise ValueError("factors must be nonempty")
    if any(b <= a for a, b in zip(factors, factors[1:])):
        raise ValueError("factors must be strictly increasing")
    if 1.0 not in factors:
        raise ValueError("factors must include 1.0")
    for f in factors:
        if not 0.5 <= f <= 2.0:
            raise ValueError("unsupported dilation factor")
    if stretch_fn is None:
        stretch_fn = lambda clip, factor: time_stretch(
            clip, factor, config.stretch_frame_length, config.stretch_hop
        )
    if extract_fn is None:
        extract_fn = lambda clip: extract_feature(clip, config)
    true_y = np.asarray(labels)
    if true_y.size != len(clips):
        raise ValueError("length mismatch between clips and labels")

    accuracies: dict[str, list[float]] = {name: [] for name in models}
    for factor in factors:
        rows = []
        for clip in clips:
            try:
                dilated = clip if factor == 1.0 else stretch_fn(clip, factor)
                rows.append(extract_fn(dilated).values)
            except ValueError as exc:
                raise ValueError(f"dilation failed for clip {clip.id!r} at {factor}: {exc}") from exc
        transformed = normalizer.transform(np.asarray(rows))
        for name, model in models.items():
            pred = predict_model(model, transformed)
            cm = confusion(true_y, pred, n_classes)
            accuracies[name].append(figures_of_merit(cm).accuracy)
    return DilationCurve(
        factors=factors,
        accuracies={name: tuple(values) for name, values in accuracies.items()},
        random_reference=float(random_reference),
    )


def cross_dataset_eval(
    models: Mapping[str, object],
    normalizer: Normalizer,
    train_vocabulary: Sequence[str],
    table: FeatureTable,
    rng: np.random.Generator | None = None,
) -> tuple[dict[str, EvaluationReport], dict[str, np.ndarray]]:
    """Evaluate models trained on one corpus against every clip of another.

    The target table's label vocabulary must match the training vocabulary
    exactly; the test normalization reuses the training statistics.
    """
    if tuple(table.vocabulary) != tuple(train_vocabulary):
        unmapped = sorted(set(table.vocabulary) ^ set(train_vocabulary))
        raise ValueError(f"label vocabulary mismatch; unmapped labels: {unmapped}")
    features, true_y = table.select(table.ids)
    return evaluate_models(models, normalizer.transform(features), true_y, table.n_classes, rng)


# ---------------------------------------------------------------------------
# result serialization
# ---------------------------------------------------------------------------

_STD_COLUMNS = [f"{name}_std" for name in FIGURE_NAMES]


def write_figures_csv(
    path: str | Path,
    model_order: Sequence[str],
    point_reports: Mapping[str, EvaluationReport],
    dist: BaselineDistribution | None,
    pipeline_hash: str,
    config_hash: str,
    seed: int,
) -> None:
    """Figure-of-merit table, one row per model in the given order.

    Sampled baselines take their mean/std from `dist`; all other rows are
    point values with empty std cells.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["model", *FIGURE_NAMES, *_STD_COLUMNS, "pipeline_hash", "config_hash", "seed"]
        )
        for name in model_order:
            if name in point_reports:
                figs = point_reports[name].figures.as_dict()
                values = [repr(figs[f]) for f in FIGURE_NAMES]
                stds = ["" for _ in FIGURE_NAMES]
            elif dist is not None and name in dist.stats:
                values = [repr(dist.stats[name][f].mean) for f in FIGURE_NAMES]
                stds = [repr(dist.stats[name][f].std) for f in FIGURE_NAMES]
            else:
                raise ValueError(f"no results for model {name!r}")
            writer.writerow([name, *values, *stds, pipeline_hash, config_hash, seed])


def write_repartition_trials_csv(
    path: str | Path, study: ContrastStudy, pipeline_hash: str, config_hash: str
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "model", *FIGURE_NAMES, "pipeline_hash", "config_hash", "seed"])
        for t in range(study.n_trials):
            for model, figures in study.model_figures.items():
                writer.writerow(
                    [
                        t,
                        model,
                        *(repr(float(figures[name][t])) for name in FIGURE_NAMES),
                        pipeline_hash,
                        config_hash,
                        study.base_seed + t,
                    ]
                )


def write_contrasts_csv(
    path: str | Path, study: ContrastStudy, pipeline_hash: str, config_hash: str
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "contrast",
                "figure",
                "mean",
                "std",
                "empirical_negative_fraction",
                "gaussian_negative_fraction",
                "trials",
                "pipeline_hash",
                "config_hash",
                "seed",
            ]
        )
        for cname, figs in study.contrast_stats.items():
            for fname, s in figs.items():
                writer.writerow(
                    [
                        cname,
                        fname,
                        repr(s.mean),
                        repr(s.std),
                        repr(s.empirical_negative_fraction),
                        repr(s.gaussian_negative_fraction),
                        study.n_trials,
                        pipeline_hash,
                        config_hash,
                        study.base_seed,
                    ]
                )


def write_dilation_csv(
    path: str | Path, curve: DilationCurve, pipeline_hash: str, config_hash: str, seed: int
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["factor", "model", "accuracy", "random_reference", "pipeline_hash", "config_hash", "seed"]
        )
        for i, factor in enumerate(curve.factors):
            for model, values in curve.accuracies.items():
                writer.writerow(
                    [
                        repr(factor),
                        model,
                        repr(values[i]),
                        repr(curve.random_reference),
                        pipeline_hash,
                        config_hash,
                        seed,
                    ]
                )


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
