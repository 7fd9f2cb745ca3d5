"""Run configuration: defaults, JSON files and flag overrides."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .detector import DEFAULT_FILTER_SIZES
from .losses import LossWeights


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    scales: int = 5
    filter_sizes: tuple[int, ...] = DEFAULT_FILTER_SIZES
    detection_threshold: float = 1e-4
    ratio_threshold: float = 0.8
    ransac_threshold_px: float = 3.0
    ransac_confidence: float = 0.999
    ransac_max_iters: int = 2000
    rng_seed: int = 0
    min_inliers: int = 8
    lambda_rec: float = 8.0
    lambda_det: float = 2.0
    lambda_desc: float = 2.0
    lambda_adv: float = 1.0
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "filter_sizes", tuple(int(s) for s in self.filter_sizes))
        if self.scales < 1:
            raise ConfigError("scales must be >= 1")
        if self.scales > len(self.filter_sizes):
            raise ConfigError(f"scales={self.scales} but only {len(self.filter_sizes)} filter sizes given")
        for s in self.filter_sizes:
            if s < 9 or s % 2 == 0 or s % 3 != 0:
                raise ConfigError(f"filter size {s} must be an odd multiple of 3, >= 9")
        for name in ("detection_threshold", "ratio_threshold", "ransac_threshold_px",
                     "ransac_confidence", "ransac_max_iters", "threads"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not self.ransac_confidence < 1:
            raise ConfigError("ransac_confidence must be < 1")
        if self.min_inliers < 0:
            raise ConfigError("min_inliers must be >= 0")
        for name in ("lambda_rec", "lambda_det", "lambda_desc", "lambda_adv"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be non-negative")

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_rec, self.lambda_det, self.lambda_desc, self.lambda_adv)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["filter_sizes"] = list(self.filter_sizes)
        return d


FIELD_NAMES = {f.name for f in fields(RunConfig)}


def read_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then values from the JSON file at ``path``, then ``overrides``.

    ``None`` values in ``overrides`` are ignored so unset flags can be passed
    straight through.
    """
    values: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        values.update(data)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = set(values) - FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return replace(RunConfig(), **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
