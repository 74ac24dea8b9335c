"""Flat key=value run configuration.

One dataclass drives the whole pipeline: seeds, resolutions, loss weights,
training budgets, and blink statistics. The on-disk format is a plain text
file of `key = value` lines with `#` comments. The EMOFACE_SEED environment
variable, when set, overrides the seed at load time so sweeps can vary the
seed without touching config files.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

SEED_ENV_VAR = "EMOFACE_SEED"
FRAME_RATE = 30


@dataclass
class PipelineConfig:
    seed: int = 0
    fps: int = FRAME_RATE
    resolution: int = 64
    channel_scale: float = 1.0
    heatmap_sigma: float = 1.5
    feature_dim: int = 128
    lambda_ver: float = 1.0
    lambda_gan: float = 0.5
    lambda_rec: float = 1.0
    lambda_per: float = 10.0
    lambda_adv: float = 1.0
    landmark_lr: float = 2e-4
    landmark_steps: int = 300
    landmark_batch: int = 4
    texture_lr: float = 2e-4
    texture_steps: int = 300
    texture_batch: int = 4
    adapt_steps: int = 5
    adapt_lr: float = 2e-4
    blink_interval: float = 3.0
    blink_duration: float = 0.3
    blink_amplitude: float = 0.8
    perceptual_backend: str = "conv-pyramid"

    def __post_init__(self):
        if self.fps != FRAME_RATE:
            raise ConfigError(f"fps is fixed at {FRAME_RATE}, got {self.fps}")
        if self.resolution < 16 or self.resolution % 16 != 0:
            raise ConfigError("resolution must be a positive multiple of 16")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        for name in (
            "channel_scale", "heatmap_sigma", "landmark_lr", "texture_lr",
            "adapt_lr", "blink_interval", "blink_duration",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("landmark_steps", "landmark_batch", "texture_steps", "texture_batch"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if not 1 <= self.adapt_steps <= 5:
            raise ConfigError("adapt_steps must be 1..5")
        if not 0.0 <= self.blink_amplitude <= 1.0:
            raise ConfigError("blink_amplitude must lie in [0, 1]")
        for name in ("lambda_ver", "lambda_gan", "lambda_rec", "lambda_per", "lambda_adv"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    try:
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw


def parse_config(text: str) -> PipelineConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw)
    return PipelineConfig(**values)


def serialize_config(config: PipelineConfig) -> str:
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        text = value if isinstance(value, str) else repr(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def load_config(path: str | Path | None = None, apply_env: bool = True) -> PipelineConfig:
    """Read a config file (or take defaults), then apply EMOFACE_SEED if set."""
    if path is None:
        config = PipelineConfig()
    else:
        config = parse_config(Path(path).read_text())
    if apply_env:
        raw = os.environ.get(SEED_ENV_VAR)
        if raw is not None:
            try:
                seed = int(raw)
            except ValueError as exc:
                raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from exc
            config.seed = seed
    return config


def save_config(config: PipelineConfig, path: str | Path) -> None:
    Path(path).write_text(serialize_config(config))
