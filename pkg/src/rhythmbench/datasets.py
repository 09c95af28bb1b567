"""Dataset ingestion and train/test partitioning.

A dataset on disk is a root directory with one subdirectory per class label,
each holding WAV files. Ingestion produces a deterministic manifest (sorted
relative paths), so re-ingesting an identical tree is byte-identical.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered (clip id, label) pairs plus the sorted label vocabulary.

    Clip ids are paths relative to `root` when the manifest came from a
    directory tree; a manifest CSV may carry arbitrary ids.
    """

    entries: tuple[tuple[str, str], ...]
    label_vocabulary: tuple[str, ...]
    root: str | None = None
    excluded: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        ids = [clip_id for clip_id, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate clip ids in manifest")
        labels = {label for _, label in self.entries}
        if not labels <= set(self.label_vocabulary):
            raise ValueError("manifest entry labels outside vocabulary")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(clip_id for clip_id, _ in self.entries)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for _, label in self.entries)

    def path_of(self, clip_id: str) -> Path:
        if self.root is None:
            return Path(clip_id)
        return Path(self.root) / clip_id


def _readable_wav(path: Path) -> bool:
    # cheap header check; full decoding happens at extraction time
    try:
        with open(path, "rb") as fh:
            head = fh.read(12)
    except OSError:
        return False
    return len(head) == 12 and head[:4] == b"RIFF" and head[8:12] == b"WAVE"


def ingest(root: str | Path) -> DatasetManifest:
    """Scan a label-per-directory tree of WAV files into a manifest.

    Unreadable files are excluded and reported; empty label directories are
    warned about and dropped from the vocabulary.
    """
    root = Path(root)
    if not root.is_dir():
        raise ValueError(f"dataset root is not a directory: {root}")
    entries: list[tuple[str, str]] = []
    excluded: list[str] = []
    vocabulary: list[str] = []
    for label_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        label = label_dir.name
        wavs = sorted(p for p in label_dir.rglob("*") if p.is_file() and p.suffix.lower() == ".wav")
        kept = 0
        for wav in wavs:
            rel = wav.relative_to(root).as_posix()
            if _readable_wav(wav):
                entries.append((rel, label))
                kept += 1
            else:
                excluded.append(rel)
                logger.warning("excluding unreadable file path=%s", rel)
        if kept == 0:
            logger.warning("empty label directory label=%s", label)
        else:
            vocabulary.append(label)
    if not entries:
        raise ValueError(f"no labels found under {root}")
    return DatasetManifest(
        entries=tuple(entries),
        label_vocabulary=tuple(vocabulary),
        root=str(root),
        excluded=tuple(excluded),
    )


def write_manifest_csv(manifest: DatasetManifest, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label"])
        for clip_id, label in manifest.entries:
            writer.writerow([clip_id, label])


def read_manifest_csv(path: str | Path, root: str | Path | None = None) -> DatasetManifest:
    """Load a manifest CSV; `root` anchors relative paths (defaults to the
    CSV's own directory)."""
    path = Path(path)
    entries: list[tuple[str, str]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["path", "label"]:
            raise ValueError(f"not a manifest CSV: {path}")
        for row in reader:
            if len(row) != 2:
                raise ValueError(f"malformed manifest row in {path}: {row}")
            entries.append((row[0], row[1]))
    if not entries:
        raise ValueError(f"no labels found in {path}")
    vocabulary = tuple(sorted({label for _, label in entries}))
    anchor = str(root) if root is not None else str(path.parent)
    return DatasetManifest(entries=tuple(entries), label_vocabulary=vocabulary, root=anchor)


@dataclass(frozen=True)
class Partition:
    """Disjoint train/test clip ids covering one manifest."""

    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    seed: int
    ratio: float

    def __post_init__(self) -> None:
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise ValueError(f"train/test overlap: {sorted(overlap)[:5]}")
        if not self.train_ids or not self.test_ids:
            raise ValueError("degenerate partition: empty train or test side")


def random_partition(
    ids: Sequence[str],
    ratio: float,
    seed: int,
    stratified: bool = False,
    labels: Sequence[str] | None = None,
) -> Partition:
    """Seeded shuffle split: floor(ratio * n) clips train, the rest test.

    With `stratified=True` the split happens per label (floor(ratio * n_c)
    training clips from each class), which needs `labels`.
    """
    ids = list(ids)
    n = len(ids)
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be strictly between 0 and 1")
    if n < 2:
        raise ValueError("need at least 2 clips to partition")
    rng = np.random.default_rng(seed)
    if not stratified:
        order = rng.permutation(n)
        n_train = int(ratio * n)
        if n_train == 0 or n_train == n:
            raise ValueError("degenerate partition: empty train or test side")
        train = [ids[i] for i in order[:n_train]]
        test = [ids[i] for i in order[n_train:]]
        return Partition(train_ids=tuple(train), test_ids=tuple(test), seed=seed, ratio=ratio)

    if labels is None or len(labels) != n:
        raise ValueError("stratified partition needs one label per clip")
    train: list[str] = []
    test: list[str] = []
    for label in sorted(set(labels)):
        rows = [i for i, lab in enumerate(labels) if lab == label]
        order = rng.permutation(len(rows))
        n_train = int(ratio * len(rows))
        train += [ids[rows[i]] for i in order[:n_train]]
        test += [ids[rows[i]] for i in order[n_train:]]
    if not train or not test:
        raise ValueError("degenerate partition: empty train or test side")
    return Partition(train_ids=tuple(train), test_ids=tuple(test), seed=seed, ratio=ratio)
