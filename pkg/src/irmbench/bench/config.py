from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from ..sem import DEFAULT_SIGMAS, Variant
from ..solve import DEFAULT_LAMBDA_GRID, TrainConfig

DEFAULT_SAMPLE_GRID = (50, 200, 500, 1000, 1500, 2000)
METHODS = ("erm", "irm")


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


@dataclass(frozen=True)
class ExperimentConfig:
    variant: str = "ac"
    dim_s: int = 5
    sample_grid: tuple[int, ...] = DEFAULT_SAMPLE_GRID
    trials: int = 25
    sigma_envs: tuple[float, ...] = DEFAULT_SIGMAS
    methods: tuple[str, ...] = METHODS
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    seed: int = 0
    out: str = "results"
    weight_scale: float | None = None
    fixed_w: bool = False
    jobs: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        try:
            object.__setattr__(self, "variant", Variant.parse(self.variant).value)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        grid = tuple(int(n) for n in self.sample_grid)
        if not grid or any(n < 4 or n % 2 for n in grid):
            raise ConfigError(f"sample sizes must be even and >= 4, got {list(grid)}")
        object.__setattr__(self, "sample_grid", grid)
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.dim_s < 1:
            raise ConfigError("dim_s must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        methods = tuple(m.lower() for m in self.methods)
        if not methods or set(methods) - set(METHODS):
            raise ConfigError(f"methods must be a nonempty subset of {METHODS}, got {list(methods)}")
        object.__setattr__(self, "methods", methods)
        if not self.lambda_grid or any(l < 0 for l in self.lambda_grid):
            raise ConfigError("lambda grid must be nonempty with values >= 0")
        object.__setattr__(self, "lambda_grid", tuple(float(l) for l in self.lambda_grid))
        sig = tuple(float(s) for s in self.sigma_envs)
        if not sig or any(s <= 0 for s in sig):
            raise ConfigError("sigma_envs must be positive")
        object.__setattr__(self, "sigma_envs", sig)
        if self.weight_scale is not None and not self.weight_scale > 0:
            raise ConfigError("weight_scale must be positive")
        if not isinstance(self.train, TrainConfig):
            object.__setattr__(self, "train", _train_from(self.train))

    def to_dict(self) -> dict[str, Any]:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        for k in ("sample_grid", "sigma_envs", "methods", "lambda_grid"):
            d[k] = list(d[k])
        d["train"] = self.train.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        extra = set(d) - known - {"bounds"}
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        d.pop("bounds", None)
        if "train" in d:
            d["train"] = _train_from(d["train"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def override(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


def _train_from(d) -> TrainConfig:
    try:
        return TrainConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train options: {exc}") from None


def load_json(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc
