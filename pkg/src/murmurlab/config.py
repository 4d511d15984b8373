"""Pipeline configuration: declared defaults, YAML overlay, validation.

Every tunable lives here with its default so a run is fully specified by one
file plus a seed; ``murmurlab run --print-config`` dumps the effective
configuration.
"""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Optional

import yaml


class ConfigError(Exception):
    pass


DEFAULTS: dict = {
    "seed": 0,
    "synth": {
        "n_mild": 50,
        "n_moderate": 40,
        "n_loud_thrilling": 50,
        "snr_db": 15.0,
        "heart_rate_min": 60.0,
        "heart_rate_max": 160.0,
        "duration_s": 10.0,
        "sc_flip_p": 0.2,  # adjacent-class error rate of the site labels
        "rater": {
            "adjacent_flip_p": 0.2,
            "off_domain_p": 0.05,
        },
    },
    "dsp": {
        "f_lo": 50.0,
        "f_hi": 500.0,
        "order": 4,
        "smooth_ms": 20.0,
        "peak_k": 1.0,
        "refractory_factor": 0.6,
    },
    "split": {
        "fraction": 0.2,
    },
    "train": {
        "classifiers": ["random_forest", "adaboost", "gradient_boost"],
        "class_weight": "balanced",
        "random_forest": {"n_trees": 500, "max_depth": 12, "min_leaf": 2},
        "adaboost": {"n_rounds": 200, "stump_depth": 2, "learning_rate": 0.5},
        # Fewer, stronger rounds than the library default (300 @ 0.1): the
        # pipeline trains two models per classifier and must stay desk-scale.
        "gradient_boost": {"n_rounds": 100, "max_depth": 4, "learning_rate": 0.22,
                           "reg_lambda": 1.0, "gamma": 0.0},
    },
}

_LIST_KEYS = {"train.classifiers"}


def _merge(base: dict, overlay: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in overlay.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key: {path}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path} must be a mapping")
            out[key] = _merge(base[key], value, prefix=f"{path}.")
        else:
            out[key] = value
    return out


def _validate(cfg: dict, defaults: dict, prefix: str = "") -> None:
    for key, default in defaults.items():
        path = f"{prefix}{key}"
        if key not in cfg or cfg[key] is None:
            raise ConfigError(f"missing config key: {path}")
        value = cfg[key]
        if isinstance(default, dict):
            _validate(value, default, prefix=f"{path}.")
        elif path in _LIST_KEYS:
            if not isinstance(value, list) or not value:
                raise ConfigError(f"config key {path} must be a non-empty list")
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"config key {path} must be a boolean")
        elif isinstance(default, (int, float)):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"config key {path} must be a number")
        elif isinstance(default, str):
            if not isinstance(value, str):
                raise ConfigError(f"config key {path} must be a string")


def load_config(path: Optional[str] = None, seed: Optional[int] = None) -> dict:
    """Defaults overlaid with an optional YAML file and an optional seed."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must contain a mapping")
        cfg = _merge(cfg, data)
    if seed is not None:
        cfg["seed"] = int(seed)
    _validate(cfg, DEFAULTS)
    if not (0.0 < cfg["split"]["fraction"] < 1.0):
        raise ConfigError("config key split.fraction must lie in (0, 1)")
    unknown = set(cfg["train"]["classifiers"]) - {"random_forest", "adaboost", "gradient_boost"}
    if unknown:
        raise ConfigError(f"unknown classifiers in train.classifiers: {sorted(unknown)}")
    return cfg


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=False)
