"""Synthetic two-rhythm click-train corpus.

Two classes with distinct rhythmic structure: "straight" plays one accented
click per beat at 96..126 BPM, "swing" adds an off-beat click two thirds of
the way through each beat at 150..190 BPM. Tempo, phase, timing, amplitude,
click timbre, and the noise floor are all jittered per clip, so features vary
within a class while the classes stay firmly separable. Used by the
acceptance fallback suite and the demo scripts; everything is seeded and
deterministic.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .audio import AudioClip, save_wav
from .datasets import DatasetManifest, ingest

RHYTHM_CLASSES = ("straight", "swing")
TEMPO_RANGES_BPM = {"straight": (96.0, 126.0), "swing": (150.0, 190.0)}


def click_burst(sample_rate: int, freq: float, duration: float, decay: float) -> np.ndarray:
    """Exponentially damped sine, the building block of every onset."""
    t = np.arange(int(duration * sample_rate)) / sample_rate
    return np.sin(2.0 * np.pi * freq * t) * np.exp(-t * decay)


def rhythm_clip(
    kind: str,
    tempo_bpm: float,
    duration: float,
    sample_rate: int,
    rng: np.random.Generator,
    clip_id: str = "",
) -> AudioClip:
    """Render one click-train clip of the requested rhythm class."""
    if kind not in RHYTHM_CLASSES:
        raise ValueError(f"unknown rhythm class: {kind!r}")
    n = int(duration * sample_rate)
    samples = np.zeros(n)
    beat = 60.0 / tempo_bpm
    click_freq = rng.uniform(700.0, 1300.0)
    decay = rng.uniform(80.0, 140.0)
    burst = click_burst(sample_rate, click_freq, 0.05, decay)

    onsets: list[tuple[float, float]] = []
    phase = rng.uniform(0.0, beat)
    t = phase
    index = 0
    while t < duration:
        accent = 1.0 if index % 2 == 0 else 0.75
        onsets.append((t, accent))
        if kind == "swing":
            off = t + 2.0 * beat / 3.0
            if off < duration:
                onsets.append((off, 0.5))
        t += beat
        index += 1

    for onset_time, accent in onsets:
        jitter = rng.uniform(-0.002, 0.002)
        start = int(round((onset_time + jitter) * sample_rate))
        if start < 0 or start >= n:
            continue
        gain = accent * rng.uniform(0.85, 1.0)
        end = min(start + burst.size, n)
        samples[start:end] += gain * burst[: end - start]

    noise_level = rng.uniform(1e-4, 1e-3)
    samples += noise_level * rng.standard_normal(n)
    peak = np.abs(samples).max()
    if peak > 0:
        samples = 0.9 * samples / peak
    return AudioClip(samples=samples, sample_rate=sample_rate, id=clip_id)


def build_click_dataset(
    root: str | Path,
    n_per_class: int = 40,
    duration: float = 6.0,
    sample_rate: int = 22050,
    seed: int = 0,
) -> DatasetManifest:
    """Write a label-per-directory WAV tree and return its manifest."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    for kind in RHYTHM_CLASSES:
        class_dir = root / kind
        class_dir.mkdir(parents=True, exist_ok=True)
        lo, hi = TEMPO_RANGES_BPM[kind]
        for i in range(n_per_class):
            tempo = rng.uniform(lo, hi)
            clip = rhythm_clip(kind, tempo, duration, sample_rate, rng)
            save_wav(class_dir / f"{kind}_{i:03d}.wav", clip.samples, sample_rate)
    return ingest(root)
