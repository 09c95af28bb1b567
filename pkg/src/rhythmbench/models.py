"""Classifiers for the rhythm experiment.

Three families: Gaussian classifiers with a shared (lda) or per-class (qda)
covariance, brute-force k-nearest-neighbour, and feature-blind random
baselines (unif, freq, maj). All tie-breaking rules are total and documented
on the predict functions, so predictions are deterministic.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

GAUSSIAN_KINDS = ("lda", "qda")
BASELINE_KINDS = ("unif", "freq", "maj")

_LOG_2PI = float(np.log(2.0 * np.pi))
_KNN_SPEC = re.compile(r"(\d+)nn")


@dataclass(frozen=True)
class GaussianClassifier:
    """Gaussian class-conditional model; `covariances` is (C, d, d).

    For kind "lda" every class row holds the same pooled matrix, which makes
    prediction one code path for both kinds.
    """

    kind: str
    means: np.ndarray
    covariances: np.ndarray
    log_priors: np.ndarray


@dataclass(frozen=True)
class KnnClassifier:
    k: int
    features: np.ndarray
    labels: np.ndarray
    n_classes: int


@dataclass(frozen=True)
class BaselineModel:
    kind: str
    class_frequencies: np.ndarray


def _validate_training_set(features: np.ndarray, labels: np.ndarray, n_classes: int) -> None:
    if features.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    if labels.shape != (features.shape[0],):
        raise ValueError("length mismatch between features and labels")
    if not np.all(np.isfinite(features)):
        raise ValueError("non-finite feature")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels outside 0..{n_classes - 1}")


def train_gaussian(
    features,
    labels,
    n_classes: int,
    kind: str,
    ridge: float = 1e-6,
) -> GaussianClassifier:
    """Fit class means, covariance(s), and priors from training frequencies.

    Covariances use the population convention (divide by the count) and get a
    ridge of `ridge * (trace/d) * I` before factorization; if a covariance is
    exactly zero the ridge scale falls back to 1 so degenerate but separable
    training sets still factorize.
    """
    if kind not in GAUSSIAN_KINDS:
        raise ValueError(f"unknown gaussian kind: {kind!r}")
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    _validate_training_set(X, y, n_classes)
    n, dim = X.shape
    counts = np.bincount(y, minlength=n_classes)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise ValueError(f"empty class: {missing.tolist()}")
    if kind == "qda" and counts.min() < 2:
        raise ValueError("each class needs at least 2 examples for a per-class covariance")
    if kind == "lda" and n < n_classes + dim:
        raise ValueError(f"too few examples for a pooled covariance: {n} < {n_classes + dim}")

    means = np.empty((n_classes, dim))
    scatters = np.empty((n_classes, dim, dim))
    for c in range(n_classes):
        rows = X[y == c]
        means[c] = rows.mean(axis=0)
        centered = rows - means[c]
        scatters[c] = centered.T @ centered

    if kind == "lda":
        pooled = scatters.sum(axis=0) / n
        covariances = np.broadcast_to(pooled, (n_classes, dim, dim)).copy()
    else:
        covariances = scatters / counts[:, None, None]

    eye = np.eye(dim)
    for c in range(n_classes):
        scale = np.trace(covariances[c]) / dim
        if scale <= 0.0:
            scale = 1.0
        covariances[c] = covariances[c] + ridge * scale * eye
    for c in range(n_classes):
        try:
            np.linalg.cholesky(covariances[c])
        except np.linalg.LinAlgError:
            raise ValueError(f"singular covariance for class {c}") from None

    log_priors = np.log(counts / n)
    return GaussianClassifier(kind=kind, means=means, covariances=covariances, log_priors=log_priors)


def gaussian_scores(model: GaussianClassifier, features: np.ndarray) -> np.ndarray:
    """Joint log density log prior + log N(x; mean_c, cov_c), shape (n, C)."""
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature")
    n_classes, dim = model.means.shape
    if X.shape[1] != dim:
        raise ValueError(f"dimension mismatch: model has {dim} dims, features have {X.shape[1]}")
    scores = np.empty((X.shape[0], n_classes))
    for c in range(n_classes):
        chol = np.linalg.cholesky(model.covariances[c])
        solved = solve_triangular(chol, (X - model.means[c]).T, lower=True)
        mahalanobis = np.einsum("ij,ij->j", solved, solved)
        log_det = 2.0 * np.log(np.diag(chol)).sum()
        scores[:, c] = model.log_priors[c] - 0.5 * (mahalanobis + log_det + dim * _LOG_2PI)
    return scores


def predict_gaussian(model: GaussianClassifier, features: np.ndarray) -> np.ndarray:
    """Argmax of the joint log density; ties go to the lowest class index."""
    return gaussian_scores(model, features).argmax(axis=1)


def train_knn(features, labels, k: int, n_classes: int) -> KnnClassifier:
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    _validate_training_set(X, y, n_classes)
    if k < 1 or k % 2 == 0:
        raise ValueError("k must be a positive odd integer")
    if k > X.shape[0]:
        raise ValueError(f"k={k} exceeds training set size {X.shape[0]}")
    return KnnClassifier(k=k, features=X, labels=y.astype(np.int64), n_classes=n_classes)


def knn_votes(
    train_features: np.ndarray,
    train_labels: np.ndarray,
    test_features: np.ndarray,
    ks: tuple[int, ...],
    n_classes: int,
) -> dict[int, np.ndarray]:
    """Predictions for several k values from one distance computation.

    Euclidean distance; equal distances rank in training-set order. The
    majority vote breaks ties by the smaller summed distance of the tied
    class's neighbours, then by the lowest class index.
    """
    X = np.atleast_2d(np.asarray(test_features, dtype=np.float64))
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature")
    if X.shape[1] != train_features.shape[1]:
        raise ValueError("dimension mismatch between training and query features")
    diffs = X[:, None, :] - train_features[None, :, :]
    distances = np.sqrt((diffs * diffs).sum(axis=2))
    order = np.argsort(distances, axis=1, kind="stable")
    n_queries = X.shape[0]
    rows = np.arange(n_queries)
    out: dict[int, np.ndarray] = {}
    for k in ks:
        if k > train_features.shape[0]:
            raise ValueError(f"k={k} exceeds training set size {train_features.shape[0]}")
        top = order[:, :k]
        top_labels = train_labels[top]
        top_dists = np.take_along_axis(distances, top, axis=1)
        votes = np.zeros((n_queries, n_classes), dtype=np.int64)
        sums = np.zeros((n_queries, n_classes))
        flat_rows = np.repeat(rows, k)
        np.add.at(votes, (flat_rows, top_labels.ravel()), 1)
        np.add.at(sums, (flat_rows, top_labels.ravel()), top_dists.ravel())
        best_votes = votes.max(axis=1, keepdims=True)
        tied = votes == best_votes
        sums_masked = np.where(tied, sums, np.inf)
        best_sums = sums_masked.min(axis=1, keepdims=True)
        winners = (tied & (sums_masked == best_sums)).argmax(axis=1)
        out[k] = winners
    return out


def predict_knn(model: KnnClassifier, features: np.ndarray) -> np.ndarray:
    return knn_votes(model.features, model.labels, features, (model.k,), model.n_classes)[model.k]


def train_baseline(labels, n_classes: int, kind: str) -> BaselineModel:
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline kind: {kind!r}")
    y = np.asarray(labels)
    if y.size == 0:
        raise ValueError("empty training labels")
    if y.min() < 0 or y.max() >= n_classes:
        raise ValueError(f"labels outside 0..{n_classes - 1}")
    frequencies = np.bincount(y, minlength=n_classes) / y.size
    return BaselineModel(kind=kind, class_frequencies=frequencies)


def predict_baseline(
    model: BaselineModel, n_items: int, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Label sequence from a feature-blind baseline.

    unif draws i.i.d. uniform labels, freq draws from the training
    frequencies, maj repeats the most frequent training class (ties to the
    lowest index). unif and freq need an RNG; maj is deterministic.
    """
    n_classes = model.class_frequencies.size
    if n_items < 0:
        raise ValueError("n_items must be nonnegative")
    if model.kind == "maj":
        return np.full(n_items, int(model.class_frequencies.argmax()), dtype=np.int64)
    if rng is None:
        raise ValueError(f"baseline {model.kind!r} needs an RNG")
    if model.kind == "unif":
        return rng.integers(0, n_classes, size=n_items)
    return rng.choice(n_classes, size=n_items, p=model.class_frequencies)


def predict_model(model, features: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
    """Uniform predict dispatch; callables are used as predict functions."""
    if isinstance(model, GaussianClassifier):
        return predict_gaussian(model, features)
    if isinstance(model, KnnClassifier):
        return predict_knn(model, features)
    if isinstance(model, BaselineModel):
        return predict_baseline(model, len(np.atleast_2d(features)), rng)
    if callable(model):
        return np.asarray(model(features))
    raise TypeError(f"cannot predict with {type(model).__name__}")


def parse_model_spec(spec: str) -> tuple[str, int | None]:
    """Map a spec string to (family, k): 'lda', 'qda', '<k>nn', baselines."""
    if spec in GAUSSIAN_KINDS or spec in BASELINE_KINDS:
        return spec, None
    match = _KNN_SPEC.fullmatch(spec)
    if match:
        return "knn", int(match.group(1))
    raise ValueError(f"unknown model spec: {spec!r}")


def model_to_dict(model) -> dict:
    if isinstance(model, GaussianClassifier):
        return {
            "family": "gaussian",
            "kind": model.kind,
            "means": model.means.tolist(),
            "covariances": model.covariances.tolist(),
            "log_priors": model.log_priors.tolist(),
        }
    if isinstance(model, KnnClassifier):
        return {
            "family": "knn",
            "k": model.k,
            "features": model.features.tolist(),
            "labels": model.labels.tolist(),
            "n_classes": model.n_classes,
        }
    if isinstance(model, BaselineModel):
        return {
            "family": "baseline",
            "kind": model.kind,
            "class_frequencies": model.class_frequencies.tolist(),
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(data: dict):
    family = data.get("family")
    if family == "gaussian":
        return GaussianClassifier(
            kind=data["kind"],
            means=np.asarray(data["means"], dtype=np.float64),
            covariances=np.asarray(data["covariances"], dtype=np.float64),
            log_priors=np.asarray(data["log_priors"], dtype=np.float64),
        )
    if family == "knn":
        return KnnClassifier(
            k=int(data["k"]),
            features=np.asarray(data["features"], dtype=np.float64),
            labels=np.asarray(data["labels"], dtype=np.int64),
            n_classes=int(data["n_classes"]),
        )
    if family == "baseline":
        return BaselineModel(
            kind=data["kind"],
            class_frequencies=np.asarray(data["class_frequencies"], dtype=np.float64),
        )
    raise ValueError(f"unknown model family: {family!r}")


def save_models(path: str | Path, models: dict, pipeline_hash: str, config_hash: str) -> None:
    payload = {
        "pipeline_hash": pipeline_hash,
        "config_hash": config_hash,
        "models": {name: model_to_dict(model) for name, model in models.items()},
    }
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True))


def load_models(path: str | Path) -> tuple[dict, str, str]:
    payload = json.loads(Path(path).read_text())
    models = {name: model_from_dict(d) for name, d in payload["models"].items()}
    return models, payload["pipeline_hash"], payload["config_hash"]
