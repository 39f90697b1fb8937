"""Run configuration: one JSON file drives the whole pipeline.

Sections mirror the pipeline stages (scenario, pilot, train, eval, counts,
paths).  Unknown keys and type mismatches are reported with their dotted
field names so a bad config fails loudly before any work starts.  Relative
paths are resolved against the config file's directory.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .channels import ScenarioConfig
from .estimators.cnn import TrainConfig
from .exceptions import ValidationError

DESK_COUNTS = {"n_cov": 200, "n_train": 2000, "n_test": 1000}
FULL_COUNTS = {"n_cov": 1000, "n_train": 20000, "n_test": 10000}
DEFAULT_SNR_GRID = [-15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0]


@dataclass(frozen=True)
class PilotOptions:
    n_p: int | None = None  # None = full pilots (n_p = n_tx)


@dataclass(frozen=True)
class EvalOptions:
    snr_grid_db: list = field(default_factory=lambda: list(DEFAULT_SNR_GRID))
    fixed_snr_db: float = 5.0
    per_snr_models: bool = True
    seed: int = 20210421
    genie_k_max: int | None = None
    omp_oversampling: int = 2

    def __post_init__(self):
        if not self.snr_grid_db:
            raise ValidationError("eval.snr_grid_db must be nonempty")


@dataclass(frozen=True)
class Counts:
    n_cov: int = FULL_COUNTS["n_cov"]
    n_train: int = FULL_COUNTS["n_train"]
    n_test: int = FULL_COUNTS["n_test"]
    include_gauss: bool = True

    def __post_init__(self):
        if min(self.n_cov, self.n_train, self.n_test) < 1:
            raise ValidationError("counts must be >= 1")


@dataclass(frozen=True)
class Paths:
    data_dir: str = "data"
    model_dir: str = "models"
    report_dir: str = "reports"


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    pilot: PilotOptions = field(default_factory=PilotOptions)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalOptions = field(default_factory=EvalOptions)
    counts: Counts = field(default_factory=Counts)
    paths: Paths = field(default_factory=Paths)
    base_dir: str = "."

    def resolved(self, attr: str) -> Path:
        return (Path(self.base_dir) / getattr(self.paths, attr)).resolve()

    def as_dict(self) -> dict:
        out = {}
        for section in ("scenario", "pilot", "train", "eval", "counts", "paths"):
            out[section] = dataclasses.asdict(getattr(self, section))
        return out


_SECTIONS = {
    "scenario": ScenarioConfig,
    "pilot": PilotOptions,
    "train": TrainConfig,
    "eval": EvalOptions,
    "counts": Counts,
    "paths": Paths,
}


def _build_section(cls, raw: dict, prefix: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValidationError(
            f"unknown fields: {', '.join(prefix + '.' + u for u in unknown)}"
        )
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise ValidationError(f"{prefix}: {exc}") from exc
        raise ValidationError(f"{prefix}: {exc}") from exc


def config_from_dict(payload: dict, base_dir: str = ".") -> RunConfig:
    unknown = sorted(set(payload) - set(_SECTIONS))
    if unknown:
        raise ValidationError(f"unknown config sections: {', '.join(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        raw = payload.get(name, {})
        if not isinstance(raw, dict):
            raise ValidationError(f"section {name!r} must be an object")
        kwargs[name] = _build_section(cls, raw, name)
    return RunConfig(base_dir=base_dir, **kwargs)


def apply_overrides(payload: dict, overrides: list) -> dict:
    """Apply --set key=value pairs (dotted keys, JSON-parsed values)."""
    for item in overrides:
        if "=" not in item:
            raise ValidationError(f"override {item!r} is not of the form key=value")
        key, _, raw_value = item.partition("=")
        try:
            value = json.loads(raw_value)
        except json.JSONDecodeError:
            value = raw_value  # bare strings are allowed unquoted
        node = payload
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValidationError(f"override {key!r} crosses a non-object")
        node[parts[-1]] = value
    return payload


def load_run_config(path, overrides: list | None = None) -> RunConfig:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(payload, dict):
        raise ValidationError(f"{path}: top level must be an object")
    if overrides:
        payload = apply_overrides(payload, list(overrides))
    return config_from_dict(payload, base_dir=str(path.parent))
