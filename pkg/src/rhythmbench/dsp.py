"""Signal-processing kernels: STFT, onset strength, autocorrelation, AR fitting,
and phase-vocoder time stretching.

Conventions used throughout:

* spectrogram frames are rows (time on axis 0, frequency on axis 1);
* windows are periodic Hann unless a caller asks for rectangular;
* centered framing pads by reflection, non-centered framing never pads;
* every function is a pure, deterministic map from its inputs, so repeated
  calls are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_FRAME_LENGTH = 2048
DEFAULT_HOP = 1024
DEFAULT_N_MELS = 128
STRETCH_FRAME_LENGTH = 2048
STRETCH_HOP = 512

# Slaney mel scale: linear below 1 kHz, logarithmic above.
_MEL_BREAK_HZ = 1000.0
_MEL_LINEAR_STEP = 200.0 / 3.0
_MEL_LOG_STEP = math.log(6.4) / 27.0


@dataclass(frozen=True)
class OnsetEnvelope:
    """Onset-strength time series sampled at `frame_rate` frames per second."""

    values: np.ndarray
    frame_rate: float


@dataclass(frozen=True)
class Autocorrelation:
    """Normalized autocorrelation values over a retained window of lags."""

    values: np.ndarray
    lag_seconds: np.ndarray


@dataclass(frozen=True)
class ArModel:
    """Autoregressive model: x[n] ~ sum_k coefficients[k] * x[n-1-k].

    `error_variances[m]` is the prediction-error variance after fitting order
    m, so `error_variances[0]` is the zero-lag autocorrelation and
    `error_variances[order]` equals `error_variance`.
    """

    coefficients: np.ndarray
    error_variance: float
    order: int
    error_variances: np.ndarray


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(length) / length)


def _window_by_name(name: str | None, length: int) -> np.ndarray:
    if name is None or name == "rectangular":
        return np.ones(length)
    if name == "hann":
        return hann_window(length)
    raise ValueError(f"unknown window: {name!r}")


def _frame(samples: np.ndarray, frame_length: int, hop: int) -> np.ndarray:
    """Strided view of shape (n_frames, frame_length); no copies, no padding."""
    windows = np.lib.stride_tricks.sliding_window_view(samples, frame_length)
    return windows[::hop]


def _stft_complex(
    samples: np.ndarray,
    frame_length: int,
    hop: int,
    window: np.ndarray,
    center: bool,
) -> np.ndarray:
    if center:
        samples = np.pad(samples, frame_length // 2, mode="reflect")
    frames = _frame(samples, frame_length, hop)
    return np.fft.rfft(frames * window, axis=1)


def stft_magnitude(
    clip,
    frame_length: int = DEFAULT_FRAME_LENGTH,
    hop: int = DEFAULT_HOP,
    window: str | None = "hann",
    center: bool = False,
) -> np.ndarray:
    """Magnitude spectrogram of shape (n_frames, frame_length // 2 + 1).

    Without centering, n_frames = 1 + (len(samples) - frame_length) // hop.
    With centering, the signal is first reflect-padded by half a frame on
    each side, giving n_frames = 1 + len(samples) // hop.
    """
    if frame_length <= 0 or hop <= 0:
        raise ValueError("frame_length and hop must be positive")
    samples = np.asarray(clip.samples, dtype=np.float64)
    if samples.size < frame_length:
        raise ValueError("signal too short")
    win = _window_by_name(window, frame_length)
    return np.abs(_stft_complex(samples, frame_length, hop, win, center))


def _hz_to_mel(freq_hz: np.ndarray | float) -> np.ndarray:
    freq_hz = np.asarray(freq_hz, dtype=np.float64)
    mels = freq_hz / _MEL_LINEAR_STEP
    break_mel = _MEL_BREAK_HZ / _MEL_LINEAR_STEP
    log_part = break_mel + np.log(np.maximum(freq_hz, _MEL_BREAK_HZ) / _MEL_BREAK_HZ) / _MEL_LOG_STEP
    return np.where(freq_hz >= _MEL_BREAK_HZ, log_part, mels)


def _mel_to_hz(mels: np.ndarray | float) -> np.ndarray:
    mels = np.asarray(mels, dtype=np.float64)
    break_mel = _MEL_BREAK_HZ / _MEL_LINEAR_STEP
    linear = mels * _MEL_LINEAR_STEP
    log_part = _MEL_BREAK_HZ * np.exp(_MEL_LOG_STEP * (mels - break_mel))
    return np.where(mels >= break_mel, log_part, linear)


def mel_filterbank(
    sample_rate: int,
    n_fft: int,
    n_mels: int = DEFAULT_N_MELS,
    fmin: float = 0.0,
    fmax: float | None = None,
) -> np.ndarray:
    """Triangular mel filterbank, shape (n_mels, n_fft // 2 + 1).

    Slaney-style scale with each triangle normalized to unit area, so band
    energies are comparable across the spectrum.
    """
    if fmax is None:
        fmax = sample_rate / 2.0
    if not 0.0 <= fmin < fmax:
        raise ValueError("need 0 <= fmin < fmax")
    fft_freqs = np.linspace(0.0, sample_rate / 2.0, 1 + n_fft // 2)
    edges = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2))
    weights = np.zeros((n_mels, fft_freqs.size))
    for m in range(n_mels):
        lower, center, upper = edges[m], edges[m + 1], edges[m + 2]
        rising = (fft_freqs - lower) / max(center - lower, np.finfo(float).tiny)
        falling = (upper - fft_freqs) / max(upper - center, np.finfo(float).tiny)
        weights[m] = np.maximum(0.0, np.minimum(rising, falling))
        weights[m] *= 2.0 / (upper - lower)
    return weights


def onset_strength(
    clip,
    hop: int = DEFAULT_HOP,
    frame_length: int = DEFAULT_FRAME_LENGTH,
    n_mels: int = DEFAULT_N_MELS,
) -> OnsetEnvelope:
    """Spectral-flux onset envelope.

    Centered magnitude STFT -> mel bands -> log1p compression -> first-order
    frame difference -> half-wave rectification -> mean across bands. The
    envelope has one value per frame pair (STFT frame count minus one) and is
    nonnegative by construction.
    """
    mags = stft_magnitude(clip, frame_length=frame_length, hop=hop, window="hann", center=True)
    bank = mel_filterbank(clip.sample_rate, frame_length, n_mels)
    compressed = np.log1p(mags @ bank.T)
    flux = np.diff(compressed, axis=0)
    values = np.maximum(flux, 0.0).mean(axis=1)
    return OnsetEnvelope(values=values, frame_rate=clip.sample_rate / hop)


def raw_autocorrelation(x: np.ndarray) -> np.ndarray:
    """Unnormalized autocorrelation r[k] = sum_n x[n] x[n+k] for k = 0..N-1."""
    x = np.asarray(x, dtype=np.float64)
    return np.correlate(x, x, mode="full")[x.size - 1 :]


def biased_autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased estimate r[k] = (1/N) sum_n x[n] x[n+k] for k = 0..max_lag."""
    x = np.asarray(x, dtype=np.float64)
    if max_lag >= x.size:
        raise ValueError("max_lag must be smaller than the series length")
    return raw_autocorrelation(x)[: max_lag + 1] / x.size


def normalized_autocorrelation(
    envelope: OnsetEnvelope, lag_min: float, lag_max: float
) -> Autocorrelation:
    """Autocorrelation of the envelope, normalized by lag 0, on [lag_min, lag_max].

    Lag endpoints map to indices via round(lag * frame_rate), both inclusive.
    """
    if lag_min < 0 or lag_max < lag_min:
        raise ValueError("need 0 <= lag_min <= lag_max")
    x = np.asarray(envelope.values, dtype=np.float64)
    lo = int(round(lag_min * envelope.frame_rate))
    hi = int(round(lag_max * envelope.frame_rate))
    if hi >= x.size:
        raise ValueError("envelope too short for requested lags")
    full = raw_autocorrelation(x)
    if full[0] <= 0.0:
        raise ValueError("degenerate autocorrelation")
    values = full[lo : hi + 1] / full[0]
    lags = np.arange(lo, hi + 1) / envelope.frame_rate
    return Autocorrelation(values=values, lag_seconds=lags)


def levinson_durbin(acf: np.ndarray, order: int) -> ArModel:
    """Fit an AR model from autocorrelation values via the Levinson recursion.

    Solves the order-p Yule-Walker system in O(p^2). `acf` must hold lags
    0..order of a positive-semidefinite autocorrelation sequence.
    """
    r = np.asarray(acf, dtype=np.float64)
    if order < 1:
        raise ValueError("order must be at least 1")
    if r.ndim != 1 or r.size < order + 1:
        raise ValueError("need autocorrelation values for lags 0..order")
    if not np.all(np.isfinite(r)):
        raise ValueError("invalid input: non-finite autocorrelation")
    if r[0] <= 0.0:
        raise ValueError("degenerate autocorrelation")

    variances = np.empty(order + 1)
    variances[0] = r[0]
    coeffs = np.zeros(0)
    for m in range(1, order + 1):
        if variances[m - 1] <= 0.0:
            raise ValueError("degenerate autocorrelation")
        reflection = (r[m] - coeffs @ r[m - 1 : 0 : -1]) / variances[m - 1]
        updated = np.empty(m)
        updated[: m - 1] = coeffs - reflection * coeffs[::-1]
        updated[m - 1] = reflection
        variances[m] = variances[m - 1] * (1.0 - reflection * reflection)
        coeffs = updated
    return ArModel(
        coefficients=coeffs,
        error_variance=float(variances[order]),
        order=order,
        error_variances=variances,
    )


def _istft(
    spectrum: np.ndarray, frame_length: int, hop: int, window: np.ndarray
) -> np.ndarray:
    """Overlap-add inverse of a centered complex STFT (frames on axis 0)."""
    frames = np.fft.irfft(spectrum, n=frame_length, axis=1)
    n_frames = frames.shape[0]
    out_length = (n_frames - 1) * hop + frame_length
    out = np.zeros(out_length)
    weight = np.zeros(out_length)
    win_sq = window * window
    for i in range(n_frames):
        start = i * hop
        out[start : start + frame_length] += frames[i] * window
        weight[start : start + frame_length] += win_sq
    safe = weight > np.finfo(float).tiny
    out[safe] /= weight[safe]
    half = frame_length // 2
    return out[half : out_length - half]


def time_stretch(
    clip,
    factor: float,
    frame_length: int = STRETCH_FRAME_LENGTH,
    hop: int = STRETCH_HOP,
):
    """Phase-vocoder time stretch preserving pitch.

    `factor` multiplies the duration: 1.1 makes the clip 10% longer at the
    same pitch. Output length is exactly round(factor * len(samples)).
    Supported factors are 0.5..2.0.
    """
    from .audio import AudioClip

    if not 0.5 <= factor <= 2.0:
        raise ValueError("unsupported dilation factor")
    samples = np.asarray(clip.samples, dtype=np.float64)
    if samples.size < frame_length:
        raise ValueError("signal too short")
    target_length = int(round(factor * samples.size))

    window = hann_window(frame_length)
    spectrum = _stft_complex(samples, frame_length, hop, window, center=True)
    n_frames, n_bins = spectrum.shape
    # one zero frame at the end so interpolation at the last step stays in range
    spectrum = np.vstack([spectrum, np.zeros((1, n_bins), dtype=spectrum.dtype)])

    steps = np.arange(0, n_frames, 1.0 / factor)
    expected_advance = 2.0 * np.pi * hop * np.arange(n_bins) / frame_length
    magnitudes = np.abs(spectrum)
    phases = np.angle(spectrum)

    stretched = np.empty((steps.size, n_bins), dtype=np.complex128)
    phase_acc = phases[0].copy()
    for out_idx, step in enumerate(steps):
        base = int(step)
        frac = step - base
        mag = (1.0 - frac) * magnitudes[base] + frac * magnitudes[base + 1]
        stretched[out_idx] = mag * np.exp(1j * phase_acc)
        deviation = phases[base + 1] - phases[base] - expected_advance
        deviation -= 2.0 * np.pi * np.round(deviation / (2.0 * np.pi))
        phase_acc += expected_advance + deviation

    out = _istft(stretched, frame_length, hop, window)
    if out.size >= target_length:
        out = out[:target_length]
    else:
        out = np.pad(out, (0, target_length - out.size))
    return AudioClip(samples=out, sample_rate=clip.sample_rate, id=clip.id)
