"""Experiment configuration: a flat key=value file plus CLI overrides.

Every run-affecting knob lives here so a config file pins a run completely;
unknown keys are rejected rather than ignored, since a misspelled key that
silently falls back to a default is the usual way sweeps go wrong.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from . import envs
from .nn import ContractError

__all__ = ["ExperimentConfig", "parse_config", "load_config", "apply_overrides", "format_config"]

AGENT_NAMES = ("ae", "ae-plus", "qtopt", "naf", "actor-critic", "optimal-q")
EXPLORATION_MODES = ("policy", "ou")


@dataclass(frozen=True)
class ExperimentConfig:
    env: str = "bimodal"
    agent: str = "ae"
    seed: int = 0
    total_steps: int = 20000
    eval_period: int = 200
    eval_episodes: int = 10
    batch_size: int = 32
    buffer_capacity: int = 1000000
    warmup_steps: int = 1000
    gamma: float = 0.99
    tau: float = 0.01
    width: int = 200
    k: int = 2
    actor_lr: float = 1e-3
    expert_lr: float = 1e-2
    slow_rate: float = 1.0
    n_samples: int = 30
    rho: float = 0.2
    refine: bool = False
    n_ascent: int = 10
    w_max: float = 1e6
    exploration: str = "policy"
    naf_scale: float = 1.0
    qtopt_iters: int = 2
    qtopt_samples: int = 64
    qtopt_elite: int = 6
    n_baseline: int = 30
    grid_step: float = 0.001
    stop_at_return: float = float("nan")  # nan disables early stopping
    out_dir: str = "runs"

    def validate(self) -> "ExperimentConfig":
        if self.env not in envs.ENV_NAMES:
            raise ContractError(f"unknown env {self.env!r}; choose from {envs.ENV_NAMES}")
        if self.agent not in AGENT_NAMES:
            raise ContractError(f"unknown agent {self.agent!r}; choose from {AGENT_NAMES}")
        if self.exploration not in EXPLORATION_MODES:
            raise ContractError(
                f"unknown exploration {self.exploration!r}; choose from {EXPLORATION_MODES}"
            )
        positive = (
            "eval_period", "eval_episodes", "batch_size", "buffer_capacity",
            "width", "k", "actor_lr", "expert_lr", "n_samples", "w_max",
            "n_ascent", "qtopt_iters", "qtopt_samples", "qtopt_elite",
            "n_baseline", "grid_step", "naf_scale",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive, got {getattr(self, name)}")
        if self.total_steps < 0 or self.warmup_steps < 0:
            raise ContractError("step counts must be non-negative")
        if not 0.0 < self.rho <= 1.0:
            raise ContractError(f"rho must lie in (0, 1], got {self.rho}")
        if not 0.0 <= self.slow_rate <= 1.0:
            raise ContractError(f"slow_rate must lie in [0, 1], got {self.slow_rate}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ContractError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0.0 <= self.tau <= 1.0:
            raise ContractError(f"tau must lie in [0, 1], got {self.tau}")
        return self


_FIELDS = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _convert(key: str, value: str):
    kind = _FIELDS[key]
    value = value.strip()
    if kind == "bool":
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ContractError(f"{key} expects a boolean, got {value!r}")
    if kind == "int":
        try:
            return int(value)
        except ValueError as err:
            raise ContractError(f"{key} expects an integer, got {value!r}") from err
    if kind == "float":
        try:
            return float(value)
        except ValueError as err:
            raise ContractError(f"{key} expects a number, got {value!r}") from err
    return value


def parse_config(text: str) -> ExperimentConfig:
    """Parse `key = value` lines; '#' starts a comment; unknown keys error."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ContractError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = body.split("=", 1)
        key = key.strip()
        if key not in _FIELDS:
            raise ContractError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ContractError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, value)
    return ExperimentConfig(**values).validate()


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def apply_overrides(cfg: ExperimentConfig, overrides) -> ExperimentConfig:
    """Apply `key=value` strings on top of a parsed config."""
    values = {}
    for item in overrides:
        if "=" not in item:
            raise ContractError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip()
        if key not in _FIELDS:
            raise ContractError(f"unknown key {key!r}")
        values[key] = _convert(key, value)
    return dataclasses.replace(cfg, **values).validate()


def format_config(cfg: ExperimentConfig) -> str:
    """Render the resolved config back to the flat file format."""
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in dataclasses.fields(ExperimentConfig)]
    return "\n".join(lines) + "\n"
