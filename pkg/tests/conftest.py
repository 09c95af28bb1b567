"""Shared fixtures.

Two kinds of test data: pure-numeric Gaussian blob feature tables (fast, no
audio involved) and a small synthetic two-rhythm click corpus rendered to WAV
once per session.
"""

import numpy as np
import pytest

from rhythmbench.cli import extract_features_from_manifest
from rhythmbench.config import DEFAULT_PIPELINE
from rhythmbench.features import FeatureTable, table_from_records
from rhythmbench.synth import build_click_dataset


def make_blob_table(n_per_class=30, n_classes=8, dim=13, seed=0, spread=0.35):
    """Well-separated Gaussian blobs posing as a feature table."""
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, 2.0, size=(n_classes, dim))
    blocks = []
    labels = []
    for c in range(n_classes):
        blocks.append(means[c] + spread * rng.standard_normal((n_per_class, dim)))
        labels.extend([f"class{c}"] * n_per_class)
    matrix = np.concatenate(blocks, axis=0)
    ids = tuple(f"clip{i:03d}" for i in range(matrix.shape[0]))
    return FeatureTable(
        ids=ids,
        labels=tuple(labels),
        matrix=matrix,
        vocabulary=tuple(f"class{c}" for c in range(n_classes)),
        pipeline_hash="0" * 12,
    )


@pytest.fixture
def blob_table():
    return make_blob_table()


@pytest.fixture(scope="session")
def click_manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("clicks")
    return build_click_dataset(root, n_per_class=30, duration=6.0, seed=11)


@pytest.fixture(scope="session")
def click_table(click_manifest):
    records = extract_features_from_manifest(click_manifest, DEFAULT_PIPELINE, workers=1)
    return table_from_records(records)
