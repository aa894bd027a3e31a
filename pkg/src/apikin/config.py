"""Layered pipeline configuration: file < environment < command-line flags.

The file format is flat `key = value` lines; `#` starts a comment line.
Environment variables override file values using the APIKIN_ prefix with the
key uppercased and non-alphanumerics mapped to underscores (for example
beta.pytorch-like becomes APIKIN_BETA_PYTORCH_LIKE).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from .analyzer import DEFAULT_BETAS, SimilarityThresholds
from .sampler import DEFAULT_PERF_MARKERS, SamplerPolicy

ENV_PREFIX = "APIKIN_"


class ConfigError(Exception):
    """Bad configuration value or file; the CLI exits with code 2."""


def parse_kv_text(text: str, ctx: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{ctx}:{lineno}: expected key = value")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def _env_key(key: str) -> str:
    return ENV_PREFIX + re.sub(r"[^A-Za-z0-9]", "_", key).upper()


_SCALAR_KEYS = (
    "alpha_io",
    "alpha_call",
    "beta",
    "min_comments",
    "timeout_s",
    "margin",
    "jobs",
    "runner_cmd",
    "out_dir",
    "bug_labels",
    "hardware_exclusions",
    "noise_patterns",
    "suppress_list",
)


@dataclass
class PipelineConfig:
    alpha_io: float = 0.8
    alpha_call: float = 0.8
    beta: Optional[float] = None
    beta_by_framework: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_BETAS))
    bug_labels: tuple[str, ...] = ("bug", "crash")
    hardware_exclusions: tuple[str, ...] = ("m1",)
    min_comments: int = 3
    noise_patterns: tuple[str, ...] = ()
    runner_cmd: str = ""
    timeout_s: float = 60.0
    margin: float = 1.05
    out_dir: Path = Path("out")
    jobs: int = 1
    suppress_list: Optional[Path] = None

    def thresholds(self) -> SimilarityThresholds:
        try:
            return SimilarityThresholds(
                alpha_io=self.alpha_io,
                alpha_call=self.alpha_call,
                beta=self.beta,
                beta_by_framework=dict(self.beta_by_framework),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def sampler_policy(self) -> SamplerPolicy:
        return SamplerPolicy(
            bug_labels=frozenset(self.bug_labels),
            hardware_exclusions=frozenset(self.hardware_exclusions),
            min_comments=self.min_comments,
            perf_markers=DEFAULT_PERF_MARKERS,
            default_margin=self.margin,
        )

    def validate(self) -> None:
        self.thresholds()
        for tag, value in self.beta_by_framework.items():
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"beta.{tag} must be in [0, 1], got {value}")
        if self.timeout_s <= 0:
            raise ConfigError(f"timeout_s must be positive, got {self.timeout_s}")
        if self.margin < 1.0:
            raise ConfigError(f"margin must be >= 1.0, got {self.margin}")
        if self.min_comments < 0:
            raise ConfigError(f"min_comments must be >= 0, got {self.min_comments}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key} must be a number, got {raw!r}") from exc


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{key} must be an integer, got {raw!r}") from exc


def _parse_list(raw: str) -> tuple[str, ...]:
    return tuple(item.strip() for item in raw.split(",") if item.strip())


def _apply(config: PipelineConfig, key: str, raw: str) -> None:
    if key == "alpha_io":
        config.alpha_io = _parse_float(key, raw)
    elif key == "alpha_call":
        config.alpha_call = _parse_float(key, raw)
    elif key == "beta":
        config.beta = _parse_float(key, raw)
    elif key.startswith("beta."):
        config.beta_by_framework[key[len("beta.") :]] = _parse_float(key, raw)
    elif key == "bug_labels":
        config.bug_labels = _parse_list(raw)
    elif key == "hardware_exclusions":
        config.hardware_exclusions = _parse_list(raw)
    elif key == "min_comments":
        config.min_comments = _parse_int(key, raw)
    elif key == "noise_patterns":
        config.noise_patterns = _parse_list(raw)
    elif key == "runner_cmd":
        config.runner_cmd = raw
    elif key == "timeout_s":
        config.timeout_s = _parse_float(key, raw)
    elif key == "margin":
        config.margin = _parse_float(key, raw)
    elif key == "out_dir":
        config.out_dir = Path(raw)
    elif key == "jobs":
        config.jobs = _parse_int(key, raw)
    elif key == "suppress_list":
        config.suppress_list = Path(raw) if raw else None
    else:
        raise ConfigError(f"unknown configuration key {key!r}")


def load_config(
    config_path: Optional[Path | str] = None,
    env: Optional[Mapping[str, str]] = None,
    overrides: Optional[Mapping[str, Optional[str]]] = None,
) -> PipelineConfig:
    """Resolve configuration layers; later layers win key by key."""
    config = PipelineConfig()
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        for key, raw in parse_kv_text(path.read_text(encoding="utf-8"), str(path)).items():
            _apply(config, key, raw)
    if env:
        file_keys = list(_SCALAR_KEYS) + [f"beta.{tag}" for tag in config.beta_by_framework]
        for key in file_keys:
            raw = env.get(_env_key(key))
            if raw is not None:
                _apply(config, key, raw)
    if overrides:
        for key, raw in overrides.items():
            if raw is not None:
                _apply(config, key, str(raw))
    config.validate()
    return config
