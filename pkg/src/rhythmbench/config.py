"""Run configuration: dataclasses, validation, hashing, and the flat
key = value config-file format.

Two hashes matter downstream. The pipeline hash covers only the parameters
that change extracted features, and keys the feature cache. The run hash
covers the full configuration (seed included) and identifies one run.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

DEFAULT_MODELS = ("lda", "qda", "1nn", "3nn", "5nn", "7nn", "9nn", "unif", "freq", "maj")
LEARNED_MODELS = ("lda", "qda", "1nn", "3nn", "5nn", "7nn", "9nn")
BASELINE_MODELS = ("unif", "freq", "maj")

DILATION_LOW = 0.80
DILATION_HIGH = 1.25
DILATION_POINTS = 13


def default_dilation_factors() -> tuple[float, ...]:
    """Log-spaced dilation grid over [0.80, 1.25]; the midpoint snaps to 1.0."""
    log_lo, log_hi = math.log(DILATION_LOW), math.log(DILATION_HIGH)
    grid = []
    for i in range(DILATION_POINTS):
        value = math.exp(log_lo + (log_hi - log_lo) * i / (DILATION_POINTS - 1))
        if abs(value - 1.0) < 1e-9:
            value = 1.0
        grid.append(round(value, 12))
    return tuple(grid)


def config_hash(mapping: dict) -> str:
    """Short stable digest of a JSON-serializable mapping."""
    canonical = json.dumps(mapping, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class PipelineConfig:
    """Everything that determines the 13-dim rhythm feature of a clip."""

    sample_rate: int = 22050
    frame_length: int = 2048
    hop: int = 1024
    n_mels: int = 128
    lag_min: float = 0.23
    lag_max: float = 4.14
    ar_order: int = 12
    stretch_frame_length: int = 2048
    stretch_hop: int = 512
    resampler: str = "sinc"

    def validate(self) -> None:
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.frame_length <= 0 or self.hop <= 0 or self.hop > self.frame_length:
            raise ValueError("need 0 < hop <= frame_length")
        if self.stretch_frame_length <= 0 or self.stretch_hop <= 0:
            raise ValueError("stretch frame and hop must be positive")
        if self.stretch_hop > self.stretch_frame_length:
            raise ValueError("stretch_hop must not exceed stretch_frame_length")
        if self.n_mels < 1:
            raise ValueError("n_mels must be at least 1")
        if not 0.0 <= self.lag_min <= self.lag_max:
            raise ValueError("need 0 <= lag_min <= lag_max")
        if self.ar_order < 1:
            raise ValueError("ar_order must be at least 1")
        if self.resampler not in ("sinc", "linear"):
            raise ValueError("resampler must be 'sinc' or 'linear'")

    @property
    def feature_dim(self) -> int:
        return self.ar_order + 1

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def hash(self) -> str:
        return config_hash(self.to_dict())


DEFAULT_PIPELINE = PipelineConfig()


@dataclass
class RunConfig:
    """Full harness configuration for one CLI command invocation."""

    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    dataset_root: str | None = None
    manifest: str | None = None
    out: str = "results"
    seed: int = 0
    ratio: float = 0.7
    trials: int = 1000
    baseline_draws: int = 10000
    factors: tuple[float, ...] = field(default_factory=default_dilation_factors)
    models: tuple[str, ...] = DEFAULT_MODELS
    workers: int = 1
    stratified: bool = False

    def validate(self) -> None:
        self.pipeline.validate()
        if not 0.0 < self.ratio < 1.0:
            raise ValueError("ratio must be strictly between 0 and 1")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.baseline_draws < 100:
            raise ValueError("baseline_draws must be at least 100")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if not self.factors:
            raise ValueError("factors must be nonempty")
        for f in self.factors:
            if not 0.5 <= f <= 2.0:
                raise ValueError("unsupported dilation factor")
        if not self.models:
            raise ValueError("models must be nonempty")

    # Execution details that must not influence results: artifacts carry
    # neither, so reruns of the same (data, config, seed) byte-compare equal
    # no matter where they were written or how many workers ran.
    _EXECUTION_ONLY = ("out", "workers")

    def to_dict(self) -> dict:
        d = {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if f.name != "pipeline" and f.name not in self._EXECUTION_ONLY
        }
        d["factors"] = list(self.factors)
        d["models"] = list(self.models)
        d["pipeline"] = self.pipeline.to_dict()
        return d

    @property
    def hash(self) -> str:
        return config_hash(self.to_dict())

    @property
    def pipeline_hash(self) -> str:
        return self.pipeline.hash


_PIPELINE_KEYS = {f.name for f in fields(PipelineConfig)}
_INT_KEYS = {
    "sample_rate", "frame_length", "hop", "n_mels", "ar_order",
    "stretch_frame_length", "stretch_hop", "seed", "trials",
    "baseline_draws", "workers",
}
_FLOAT_KEYS = {"lag_min", "lag_max", "ratio"}
_BOOL_KEYS = {"stratified"}
_LIST_KEYS = {"factors", "models"}
_STR_KEYS = {"resampler", "dataset_root", "manifest", "out"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _LIST_KEYS | _STR_KEYS


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Parse a flat `key = value` config file; '#' starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _ALL_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value
    return values


def _coerce(key: str, value):
    if value is None:
        return None
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key in _BOOL_KEYS:
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot read boolean config value {value!r} for {key}")
    if key in _LIST_KEYS:
        if isinstance(value, (tuple, list)):
            items = list(value)
        else:
            items = [item.strip() for item in str(value).split(",") if item.strip()]
        if key == "factors":
            return tuple(float(item) for item in items)
        return tuple(str(item) for item in items)
    return str(value)


def build_run_config(
    config_file: str | Path | None = None, overrides: dict | None = None
) -> RunConfig:
    """Assemble a validated RunConfig from an optional file plus overrides.

    Override values of None mean "not supplied" and are ignored, so CLI flag
    defaults do not mask config-file settings.
    """
    merged: dict[str, object] = {}
    if config_file is not None:
        merged.update(parse_config_file(config_file))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _ALL_KEYS:
            raise ValueError(f"unknown config key {key!r}")
        merged[key] = value

    pipeline_kwargs = {}
    run_kwargs = {}
    for key, value in merged.items():
        coerced = _coerce(key, value)
        if key in _PIPELINE_KEYS:
            pipeline_kwargs[key] = coerced
        else:
            run_kwargs[key] = coerced
    cfg = RunConfig(pipeline=PipelineConfig(**pipeline_kwargs), **run_kwargs)
    cfg.validate()
    return cfg
