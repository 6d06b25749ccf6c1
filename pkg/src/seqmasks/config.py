"""YAML training configuration: documented schema, strict key checking."""
from __future__ import annotations

import os
from pathlib import Path

import yaml

from .errors import ConfigError
from .training import SPEC_VERSION, TrainConfig

SEED_ENV_VAR = "SEQMASKS_SEED"

# section -> yaml key -> TrainConfig field (None means same name)
SCHEMA: dict[str, dict[str, str | None]] = {
    "data": {
        "root": "data_root",
        "dataset": None,
        "min_effective": None,
        "fg_threshold": None,
    },
    "model": {
        "backbone": None,
        "backbone_weights": None,
        "backbone_channels": None,
        "variant": None,
        "use_foreground": None,
        "use_gait": None,
        "use_ffm": None,
        "embed_dim": None,
        "bottleneck_hidden": None,
        "bottleneck_norm": None,
    },
    "loss": {
        "lambda1": None,
        "lambda2": None,
        "lambda3": None,
        "margin_hard": None,
        "margin_all": None,
        "lsr_eps": None,
    },
    "train": {
        "regime": None,
        "p": None,
        "kseq": None,
        "t_frames": None,
        "k_sils": None,
        "epochs": None,
        "steps_per_epoch": None,
        "lr_heads": None,
        "lr_backbone": None,
        "decay_milestones": None,
        "decay_gamma": None,
        "deterministic": None,
        "shared_frames": None,
        "augment": None,
        "checkpoint_dir": None,
        "log_every": None,
    },
    "finetune": {
        "appearance_checkpoint": None,
        "gait_checkpoint": None,
    },
}
TOP_LEVEL_KEYS = {"spec_version", "seed", *SCHEMA}
LOSS_KEYS = set(SCHEMA["loss"])


def load_train_config(path: Path | str) -> TrainConfig:
    """Parse and validate a YAML config file into a TrainConfig.

    Unknown keys at any level are errors. The SEQMASKS_SEED environment
    variable, when set, overrides the file's seed.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")

    unknown = set(raw) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown top-level keys {sorted(unknown)}")
    version = raw.get("spec_version", SPEC_VERSION)
    if version != SPEC_VERSION:
        raise ConfigError(f"{path}: spec_version {version} is not supported (expected {SPEC_VERSION})")

    values: dict = {}
    loss_values: dict = {}
    for section, keys in SCHEMA.items():
        block = raw.get(section, {})
        if block is None:
            block = {}
        if not isinstance(block, dict):
            raise ConfigError(f"{path}: section '{section}' must be a mapping")
        bad = set(block) - set(keys)
        if bad:
            raise ConfigError(f"{path}: unknown keys in '{section}': {sorted(bad)}")
        for key, val in block.items():
            target = keys[key] or key
            if key in LOSS_KEYS and section == "loss":
                loss_values[target] = val
            else:
                values[target] = val
    if loss_values:
        values["weights"] = loss_values
    if "seed" in raw:
        values["seed"] = raw["seed"]
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            values["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}") from exc

    config = TrainConfig.from_dict(values)
    config.validate()
    return config
