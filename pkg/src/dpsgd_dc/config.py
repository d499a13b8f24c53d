"""INI run configuration for the command-line tool.

A config file has one section per module. Keys are the field names of the
underlying dataclasses::

    [mechanism]
    n = 16
    b = 2
    eta = 0.2
    clip_c = 2
    diameter_d = 1
    sigma_dp = 4
    t_iters = 1000
    smooth_l = 1

    [accountant]
    family = dc
    alpha = 1.1
    delta = 1e-5

Precedence, highest first: command-line flags, the config file, curve
presets, built-in defaults. Unknown sections and keys are rejected. A
relative config path is resolved under ``$DPSGD_DC_CONFIG_DIR`` when that
variable is set, otherwise against the working directory.
"""

from __future__ import annotations

import configparser
import os
from pathlib import Path

from .errors import ConfigurationError


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text):
    if str(text).strip().lower() in ("", "none"):
        return None
    return float(text)


def _beta(text):
    return "auto" if str(text).strip().lower() == "auto" else float(text)


ENV_CONFIG_DIR = "DPSGD_DC_CONFIG_DIR"

SCHEMA: dict[str, dict[str, type]] = {
    "mechanism": {
        "n": int, "b": int, "eta": float, "clip_c": float, "diameter_d": _optional_float,
        "sigma_dp": float, "t_iters": int, "smooth_l": float, "dim": int,
    },
    "accountant": {
        "family": str, "alpha": float, "mode": str, "beta": _beta, "delta": float, "eps_dp": float,
        "lipschitz_m": float, "weak_convex_m": float, "baseline_constant": float,
        "alpha_min": float, "alpha_max": float, "alpha_num": int,
    },
    # values are handed to problems.problem_from_mapping, which checks them
    "problem": {
        "kind": str, "dim": int, "n": int, "seed": int, "lam": float, "label_noise": float,
        "curvature": float, "spread": float, "anisotropy": float, "center": str,
    },
    "train": {"sampling": str, "record_every": int},
    "utility": {"sgd_sigma": float, "strong_mu": float, "constant_c": float, "target": str},
    "attack": {
        "epochs": int, "trials": int, "shadows": int, "shuffle_labels": _bool,
        "dim": int, "label_noise": float, "lam": float, "data_seed": int,
    },
    "curve": {"preset": str, "families": str, "t_min": int, "t_max": int, "t_step": int, "log_y": _bool},
    "run": {"seed": int},
}


def resolve_path(path) -> Path:
    path = Path(path).expanduser()
    if not path.is_absolute():
        base = os.environ.get(ENV_CONFIG_DIR)
        if base:
            path = Path(base).expanduser() / path
    return path


def convert(section: str, key: str, value):
    """Validate one (section, key) pair and convert its value."""
    if section not in SCHEMA:
        raise ConfigurationError(f"unknown config section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigurationError(f"unknown key {key!r} in [{section}]")
    try:
        return SCHEMA[section][key](value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad value for [{section}] {key}: {exc}") from None


def load_config(path) -> dict[str, dict]:
    """Parse and type-check an INI file into ``{section: {key: value}}``."""
    path = resolve_path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from None
    out: dict[str, dict] = {}
    for section in parser.sections():
        out[section] = {key: convert(section, key, raw) for key, raw in parser[section].items()}
    return out


def merge(*layers: dict[str, dict]) -> dict[str, dict]:
    """Overlay config layers; later layers win key by key."""
    out: dict[str, dict] = {}
    for layer in layers:
        for section, values in layer.items():
            out.setdefault(section, {}).update(values)
    return out
