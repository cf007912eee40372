"""Tool configuration: builtin defaults, optional YAML file, CLI overrides.

Precedence is flags > config file > builtins. The file is a flat YAML
mapping; unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

import yaml

from .architect import DEFAULT_MAX_ITERATIONS, DEFAULT_PARAM_BUDGET, Thresholds
from .errors import SchemaError
from .llm import DEFAULT_BASE_URL, DEFAULT_MAX_CALLS, DEFAULT_MODEL_ID

_THRESHOLD_KEYS = {f.name for f in fields(Thresholds)}


@dataclass(frozen=True)
class Config:
    param_budget: int = DEFAULT_PARAM_BUDGET
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    model_id: str = DEFAULT_MODEL_ID
    base_url: str = DEFAULT_BASE_URL
    max_llm_calls: int = DEFAULT_MAX_CALLS
    thresholds: Thresholds = Thresholds()

    def __post_init__(self) -> None:
        if self.param_budget < 1:
            raise SchemaError("param_budget must be positive")
        if self.max_iterations < 1:
            raise SchemaError("max_iterations must be positive")
        if self.max_llm_calls < 1:
            raise SchemaError("max_llm_calls must be positive")


def load_config(path: str | Path | None = None, **overrides) -> Config:
    """Build a Config from the builtins, an optional file, then overrides.

    Override values of None are ignored, so CLI flags can be passed
    through unconditionally.
    """
    values: dict = {}
    threshold_values: dict = {}
    if path is not None:
        raw = yaml.safe_load(Path(path).read_text())
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise SchemaError(f"{path}: config must be a mapping")
        for key, value in raw.items():
            if key == "thresholds":
                if not isinstance(value, dict):
                    raise SchemaError(f"{path}: thresholds must be a mapping")
                bad = set(value) - _THRESHOLD_KEYS
                if bad:
                    raise SchemaError(f"{path}: unknown threshold keys {sorted(bad)}")
                threshold_values.update(value)
            elif key in {"param_budget", "max_iterations", "model_id", "base_url", "max_llm_calls"}:
                values[key] = value
            else:
                raise SchemaError(f"{path}: unknown config key {key!r}")
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in {"param_budget", "max_iterations", "model_id", "base_url", "max_llm_calls"}:
            raise ValueError(f"unknown override {key!r}")
        values[key] = value
    try:
        config = Config(**values)
    except TypeError as exc:
        raise SchemaError(f"bad config value: {exc}") from exc
    if threshold_values:
        config = replace(config, thresholds=Thresholds(**threshold_values))
    return config
