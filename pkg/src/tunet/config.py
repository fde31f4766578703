"""Run configuration and the plain-text ``key = value`` config file format.

Keys mirror the run-level and architecture field names; unknown keys are
rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from tunet.model import TUNetConfig

__all__ = ["RunConfig", "parse_config_text", "load_config_file", "apply_overrides"]


@dataclass
class RunConfig:
    task: str = "train"
    data_dir: str = ""
    val_dir: str = ""
    out_dir: str = ""
    learning_rate: float = 3e-4
    batch_size: int = 16
    epochs: int = 2
    max_steps: int = 0  # 0 = run the full epoch budget
    alpha: float = 10000.0
    augmentation: str = "single"
    seed: int = 0
    mask_block: int = 256
    mask_rate: float = 0.2
    masked_only: bool = False
    width_divisor: int = 1
    checkpoint_every: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if self.augmentation not in ("single", "multi", "sinc"):
            raise ValueError(f"unknown augmentation {self.augmentation!r}")
        if not 0.0 <= self.mask_rate <= 1.0:
            raise ValueError(f"mask_rate must be in [0, 1], got {self.mask_rate}")
        if self.width_divisor < 1:
            raise ValueError(f"width_divisor must be >= 1, got {self.width_divisor}")


_RUN_FIELDS = {f.name: f.type for f in fields(RunConfig)}
_MODEL_KEYS = set(TUNetConfig().to_flat_dict())


def _coerce(key: str, raw: str, default):
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"config key {key}: expected boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config_text(text: str) -> tuple[RunConfig, TUNetConfig]:
    """Parse ``key = value`` lines into run and model configs."""
    run_kwargs: dict = {}
    model_flat = TUNetConfig().to_flat_dict()
    run_defaults = RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key in _RUN_FIELDS:
            run_kwargs[key] = _coerce(key, value, getattr(run_defaults, key))
        elif key in _MODEL_KEYS:
            model_flat[key] = value
        else:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
    run = RunConfig(**run_kwargs)
    model = TUNetConfig.from_flat_dict(model_flat)
    if run.width_divisor > 1:
        model = model.scaled(run.width_divisor)
    return run, model


def load_config_file(path) -> tuple[RunConfig, TUNetConfig]:
    return parse_config_text(Path(path).read_text())


def apply_overrides(run: RunConfig, **overrides) -> RunConfig:
    kwargs = {f.name: getattr(run, f.name) for f in fields(RunConfig)}
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in kwargs:
            raise ValueError(f"unknown run option {key!r}")
        kwargs[key] = value
    return RunConfig(**kwargs)
