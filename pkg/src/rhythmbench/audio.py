"""WAV decoding, channel downmix, and sample-rate conversion.

Decoded audio is always a mono float64 signal in [-1, 1] at the harness
sample rate (22050 Hz by default). Only PCM WAV input is supported: 8, 16,
and 24 bit integer plus 32 bit float, any channel count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

DEFAULT_SAMPLE_RATE = 22050

RESAMPLER_DESCRIPTIONS = {
    "sinc": "polyphase windowed sinc (scipy.signal.resample_poly, Kaiser window)",
    "linear": "linear interpolation (numpy.interp)",
}


@dataclass(frozen=True)
class AudioClip:
    """Decoded mono signal with its sample rate and an opaque identifier."""

    samples: np.ndarray
    sample_rate: int
    id: str = ""

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a nonempty 1-D array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        """Clip length in seconds."""
        return self.samples.size / self.sample_rate


def to_float(data: np.ndarray) -> np.ndarray:
    """Map integer PCM (or float) sample data onto float64 in [-1, 1]."""
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        # scipy delivers 24-bit PCM left-justified in int32
        return data.astype(np.float64) / 2147483648.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise ValueError(f"unsupported WAV sample format: {data.dtype}")


def downmix(data: np.ndarray) -> np.ndarray:
    """Average all channels down to mono."""
    if data.ndim == 1:
        return data
    if data.ndim == 2:
        return data.mean(axis=1)
    raise ValueError(f"unsupported channel layout with shape {data.shape}")


def resample(
    samples: np.ndarray, orig_rate: int, target_rate: int, method: str = "sinc"
) -> np.ndarray:
    """Convert `samples` from `orig_rate` to `target_rate`.

    `method` is "sinc" (polyphase windowed sinc) or "linear"; the caller
    records the choice in run metadata.
    """
    if orig_rate <= 0 or target_rate <= 0:
        raise ValueError("sample rates must be positive")
    if orig_rate == target_rate:
        return np.asarray(samples, dtype=np.float64)
    if method == "sinc":
        g = math.gcd(int(orig_rate), int(target_rate))
        return resample_poly(samples, target_rate // g, orig_rate // g).astype(np.float64)
    if method == "linear":
        n_out = int(round(len(samples) * target_rate / orig_rate))
        t_out = np.arange(n_out) * (orig_rate / target_rate)
        return np.interp(t_out, np.arange(len(samples)), samples)
    raise ValueError(f"unknown resampler: {method!r}")


def load_wav(
    path: str | Path,
    target_rate: int = DEFAULT_SAMPLE_RATE,
    resampler: str = "sinc",
    clip_id: str | None = None,
) -> AudioClip:
    """Decode a PCM WAV file into a mono AudioClip at `target_rate`."""
    path = Path(path)
    rate, data = wavfile.read(str(path))
    mono = downmix(to_float(np.atleast_1d(data)))
    if mono.size == 0:
        raise ValueError(f"empty audio file: {path}")
    out = resample(mono, rate, target_rate, method=resampler)
    return AudioClip(samples=out, sample_rate=target_rate, id=clip_id or str(path))


def save_wav(path: str | Path, samples: np.ndarray, sample_rate: int) -> None:
    """Write mono float samples as 16-bit PCM WAV (values clipped to [-1, 1])."""
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype(np.int16)
    wavfile.write(str(path), int(sample_rate), pcm)
