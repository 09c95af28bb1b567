"""Rhythm feature extraction and normalization.

A clip's feature is the 12 coefficients of an order-12 AR model fitted to the
onset-autocorrelation window, plus the model's final prediction-error
variance: 13 dimensions. Extraction is deterministic, so a feature cache on
disk is an exact substitute for recomputation.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import DEFAULT_PIPELINE, PipelineConfig
from .dsp import biased_autocorrelation, levinson_durbin, normalized_autocorrelation, onset_strength

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-12


@dataclass(frozen=True)
class RhythmFeature:
    """Feature vector (AR coefficients plus gain) for one clip."""

    values: np.ndarray
    clip_id: str = ""

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("feature values must be 1-D")
        object.__setattr__(self, "values", values)


def extract_feature(clip, config: PipelineConfig = DEFAULT_PIPELINE) -> RhythmFeature:
    """Run the full onset -> autocorrelation -> AR pipeline on one clip.

    Degenerate clips (for example digital silence, whose onset envelope is
    identically zero) map to the zero vector with a logged warning so corpus
    runs stay total.
    """
    try:
        envelope = onset_strength(
            clip, hop=config.hop, frame_length=config.frame_length, n_mels=config.n_mels
        )
        window = normalized_autocorrelation(envelope, config.lag_min, config.lag_max)
        acf = biased_autocorrelation(window.values, config.ar_order)
        model = levinson_durbin(acf, config.ar_order)
    except ValueError as exc:
        if "degenerate autocorrelation" in str(exc):
            logger.warning("degenerate clip, emitting zero feature clip_id=%s", clip.id)
            return RhythmFeature(values=np.zeros(config.feature_dim), clip_id=clip.id)
        raise
    values = np.concatenate([model.coefficients, [model.error_variance]])
    return RhythmFeature(values=values, clip_id=clip.id)


@dataclass(frozen=True)
class Normalizer:
    """Per-dimension z-scoring with statistics taken from training data only."""

    mean: np.ndarray
    std: np.ndarray

    def transform(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.shape[-1] != self.mean.size:
            raise ValueError(
                f"dimension mismatch: normalizer has {self.mean.size} dims, "
                f"features have {values.shape[-1]}"
            )
        return (values - self.mean) / self.std

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


def _as_matrix(features) -> np.ndarray:
    if isinstance(features, np.ndarray):
        matrix = features
    else:
        matrix = np.asarray([np.asarray(f.values) for f in features], dtype=np.float64)
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError("expected a 2-D feature matrix")
    return matrix


def fit_normalizer(features) -> Normalizer:
    """Estimate per-dimension mean and population std (floored at 1e-12)."""
    matrix = _as_matrix(features)
    if matrix.shape[0] < 2:
        raise ValueError("insufficient data: need at least 2 features")
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)
    std = np.maximum(std, STD_FLOOR)
    return Normalizer(mean=mean, std=std)


def apply_normalizer(normalizer: Normalizer, feature: RhythmFeature) -> RhythmFeature:
    return RhythmFeature(values=normalizer.transform(feature.values), clip_id=feature.clip_id)


@dataclass(frozen=True)
class FeatureRecord:
    """One cached feature row: clip id, label, values, pipeline hash."""

    clip_id: str
    label: str
    values: np.ndarray
    pipeline_hash: str


@dataclass
class FeatureTable:
    """In-memory view of a feature cache, ordered like the source manifest."""

    ids: tuple[str, ...]
    labels: tuple[str, ...]
    matrix: np.ndarray
    vocabulary: tuple[str, ...]
    pipeline_hash: str

    def __post_init__(self) -> None:
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate clip ids in feature table")
        self._row_of = {clip_id: i for i, clip_id in enumerate(self.ids)}
        self._class_of = {label: i for i, label in enumerate(self.vocabulary)}
        unknown = sorted(set(self.labels) - set(self.vocabulary))
        if unknown:
            raise ValueError(f"labels outside vocabulary: {unknown}")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def n_classes(self) -> int:
        return len(self.vocabulary)

    def label_indices(self, ids: Sequence[str] | None = None) -> np.ndarray:
        ids = self.ids if ids is None else ids
        return np.asarray([self._class_of[self.labels[self._row_of[i]]] for i in ids])

    def select(self, ids: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Feature matrix and class indices for the given clip ids."""
        missing = [i for i in ids if i not in self._row_of]
        if missing:
            raise ValueError(f"missing features for ids: {missing[:5]}")
        rows = [self._row_of[i] for i in ids]
        return self.matrix[rows], self.label_indices(ids)


def table_from_records(records: Sequence[FeatureRecord]) -> FeatureTable:
    if not records:
        raise ValueError("no feature records")
    hashes = {r.pipeline_hash for r in records}
    if len(hashes) > 1:
        raise ValueError(f"mixed pipeline hashes in feature set: {sorted(hashes)}")
    dims = {r.values.size for r in records}
    if len(dims) > 1:
        raise ValueError("inconsistent feature dimensions")
    return FeatureTable(
        ids=tuple(r.clip_id for r in records),
        labels=tuple(r.label for r in records),
        matrix=np.asarray([r.values for r in records], dtype=np.float64),
        vocabulary=tuple(sorted({r.label for r in records})),
        pipeline_hash=records[0].pipeline_hash,
    )


def write_feature_cache(path: str | Path, records: Iterable[FeatureRecord]) -> None:
    """Write features as CSV; floats use repr so read-back is bit-exact."""
    records = list(records)
    if not records:
        raise ValueError("no feature records")
    dim = records[0].values.size
    header = ["clip_id", "label"] + [f"v{i:02d}" for i in range(dim)] + ["pipeline_hash"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for record in records:
            row = [record.clip_id, record.label]
            row += [repr(float(v)) for v in record.values]
            row.append(record.pipeline_hash)
            writer.writerow(row)


def read_feature_cache(path: str | Path) -> FeatureTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["clip_id", "label"] or header[-1] != "pipeline_hash":
            raise ValueError(f"not a feature cache: {path}")
        dim = len(header) - 3
        records = []
        for row in reader:
            if len(row) != len(header):
                raise ValueError(f"malformed feature row in {path}: {row[:3]}...")
            values = np.asarray([float(v) for v in row[2 : 2 + dim]])
            records.append(
                FeatureRecord(clip_id=row[0], label=row[1], values=values, pipeline_hash=row[-1])
            )
    return table_from_records(records)
