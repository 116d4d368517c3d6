"""Pipeline configuration: YAML-style nested key/value file with strict validation."""

import copy
import hashlib
import json
import os

import yaml

from .cf import BASE_LEARNERS
from .errors import ConfigError
from .metalearn import META_LEARNERS

# Implicit threshold is strict: rating > threshold creates an interaction.
DEFAULTS = {
    "ratings_file": None,
    "work_dir": "work",
    "delimiter": ",",
    "skip_header": 0,
    "implicit_threshold": 3.5,
    "min_interactions": 10,
    "split": {"ratios": [0.7, 0.1, 0.2], "seed": 42},
    "eval": {"k": 30},
    "base": {
        "als": {"f": 64, "reg": 0.01, "alpha": 40.0, "iters": 15},
        "bpr": {"f": 64, "lr": 0.05, "reg": 0.01, "epochs": 30},
        "lmf": {"f": 64, "lr": 0.05, "reg": 0.01, "neg_ratio": 4, "epochs": 30},
        "seed": 7,
    },
    "embeddings": [
        {"method": "cdae", "size": 50, "corruption": 0.5, "lr": 1e-3, "epochs": 30, "seed": 11},
        {"method": "cdae", "size": 200, "corruption": 0.5, "lr": 1e-3, "epochs": 30, "seed": 12},
        {"method": "vae", "size": 200, "hidden": 600, "beta": 0.2, "corruption": 0.5,
         "lr": 1e-3, "epochs": 50, "seed": 13},
    ],
    "meta": {
        "learners": list(META_LEARNERS),
        "grid_search": False,
        "params": {},
        "normalize": True,
        "smote": False,
        "remove_zeroes": False,
        "n_folds": 5,
        "seed": 21,
    },
    "fallback": "most_popular",
}

_EMBED_KEYS = {"method", "size", "hidden", "beta", "corruption", "lr", "epochs", "seed",
               "batch_size"}


def _merge(defaults, override, path=""):
    if not isinstance(override, dict):
        raise ConfigError(f"section {path or '<root>'} must be a mapping")
    out = copy.deepcopy(defaults)
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(defaults[key], dict) and key != "params":
            out[key] = _merge(defaults[key], val, where)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _validate(cfg):
    if not cfg.get("ratings_file"):
        raise ConfigError("ratings_file is required")
    ratios = cfg["split"]["ratios"]
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split.ratios must be 3 values summing to 1, got {ratios}")
    if cfg["eval"]["k"] < 1:
        raise ConfigError("eval.k must be >= 1")
    if cfg["min_interactions"] < 1:
        raise ConfigError("min_interactions must be >= 1")
    if cfg["fallback"] not in BASE_LEARNERS:
        raise ConfigError(f"fallback must be one of {BASE_LEARNERS}")
    for spec in cfg["embeddings"]:
        unknown = set(spec) - _EMBED_KEYS
        if unknown:
            raise ConfigError(f"unknown embedding key(s) {sorted(unknown)}")
        if spec.get("method") not in ("cdae", "vae"):
            raise ConfigError("embedding method must be 'cdae' or 'vae'")
        if int(spec.get("size", 0)) < 1:
            raise ConfigError("embedding size must be >= 1")
    for name in cfg["meta"]["learners"]:
        if name not in META_LEARNERS:
            raise ConfigError(f"unknown meta learner {name!r}; choose from {META_LEARNERS}")
    return cfg


def load_config(path, overrides=None):
    """Load, merge with defaults, and validate before any stage runs."""
    try:
        raw = yaml.safe_load(open(path)) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    cfg = _merge(DEFAULTS, raw)
    for key, val in (overrides or {}).items():
        cfg[key] = val
    cfg["ratings_file"] = os.path.abspath(
        os.path.join(os.path.dirname(os.path.abspath(path)), cfg["ratings_file"])
    ) if not os.path.isabs(cfg["ratings_file"]) else cfg["ratings_file"]
    return _validate(cfg)


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()
