"""Run configuration: JSON schema, defaults, and flag merging.

Every CLI flag has a config-file equivalent; explicit flags override the
file, which overrides the defaults.  ``resolve`` tracks which keys were set
explicitly so commands that inherit architecture from a checkpoint can
detect genuine conflicts.
"""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema

from .errors import ValidationError
from .models import ArchitectureConfig

DEFAULTS: dict = {
    "latent_dim": 100,
    "image_size": 64,
    "channels": 3,
    "base_width": 64,
    "batch_size": 64,
    "learning_rate": 2e-4,
    "beta1": 0.5,
    "beta2": 0.999,
    "adam_eps": 1e-8,
    "optimizer": "adam",
    "threads": 0,
    "grad_steps": 500,
    "grad_alpha": 0.1,
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "latent_dim": {"type": "integer", "minimum": 1},
        "image_size": {"type": "integer", "minimum": 8},
        "channels": {"type": "integer", "minimum": 1},
        "base_width": {"type": "integer", "minimum": 1},
        "batch_size": {"type": "integer", "minimum": 1},
        "learning_rate": {"type": "number", "exclusiveMinimum": 0},
        "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "adam_eps": {"type": "number", "exclusiveMinimum": 0},
        "optimizer": {"enum": ["adam", "sgd"]},
        "threads": {"type": "integer", "minimum": 0},
        "grad_steps": {"type": "integer", "minimum": 0},
        "grad_alpha": {"type": "number", "minimum": 0},
    },
}


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file does not exist: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON: {e}") from e
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        raise ValidationError(f"{path}: {e.message}") from e
    return raw


def resolve(config_path=None, overrides: dict | None = None) -> tuple[dict, set]:
    """DEFAULTS <- config file <- explicit flags; returns (config, explicit keys)."""
    cfg = dict(DEFAULTS)
    explicit: set[str] = set()
    if config_path:
        file_cfg = load_config_file(config_path)
        cfg.update(file_cfg)
        explicit |= set(file_cfg)
    for key, value in (overrides or {}).items():
        if value is not None:
            if key not in DEFAULTS:
                raise ValidationError(f"unknown config key {key!r}")
            cfg[key] = value
            explicit.add(key)
    jsonschema.validate(cfg, CONFIG_SCHEMA)
    return cfg, explicit


def arch_from(cfg: dict) -> ArchitectureConfig:
    return ArchitectureConfig(latent_dim=cfg["latent_dim"], image_size=cfg["image_size"],
                              channels=cfg["channels"], base_width=cfg["base_width"])
