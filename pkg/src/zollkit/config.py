"""Experiment configuration: TOML files validated against a fixed schema."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError

COMMANDS = ("closure", "conjugacy", "flow-portrait", "disks", "twistor", "lagrangian")

# allowed keys per section; values are the defaults
SCHEMA: dict = {
    "profile": {"family": "round", "eps": 0.0, "d": 0.5, "delta": 0.3, "variant": "printed",
                "csv": "", "delta0": 0.0, "amplitude": 0.3},
    "grid": {"phi": [0.3, 1.3, 3], "psi": [0.3, 1.3, 3]},
    "closure": {"tol": 1e-10, "threshold": 1e-5, "horizon_factor": 3.0},
    "conjugacy": {"tol": 1e-10, "method": "both", "expected": 2, "wronskian_threshold": 1e-8},
    "flow_portrait": {"tol": 1e-10, "samples": 401},
    "band": {"family": "zero", "eps": 0.05, "center": [0.0, 0.0], "widths": [1.0, 1.0],
             "shape": "gaussian", "R": 2.0, "csv": ""},
    "disks": {"w": [[0.0, 0.0], [0.1, 0.0]], "N": 32, "tol": 1e-12, "threshold": 1e-10,
              "w_max": 0.3, "c1_threshold": 0.1, "jacobian": "analytic", "foliation": True,
              "flat_threshold": 1e-8, "band_threshold": 1e-8, "points": 64},
    "slice": {"gamma": "round", "amp_re": 0.0, "amp_im": 0.0, "center": 0.8, "width": 0.3,
              "g": "none", "g_amp": 0.0, "g_center": 0.8, "g_width": 0.3},
    "twistor": {"phi": [0.4, 1.2, 5], "threshold": 1e-7, "resolution": 1024, "step": 2.5e-4,
                "reconstruct": True, "h_eps": 0.2, "variant": "consistent"},
    "lagrangian": {"phi": [0.05, 1.52, 24], "theta": 8, "threshold": 1e-6, "lam": 1.0, "sign": 1,
                   "expect": "lagrangian"},
}
TOP_LEVEL = ("command",)


@dataclass
class ExperimentConfig:
    command: str
    sections: dict = field(default_factory=dict)
    path: Optional[Path] = None

    def get(self, section: str) -> dict:
        return self.sections[section]

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        if not p.is_absolute() and self.path is not None:
            p = self.path.parent / p
        return p


def _merge(section: str, given: Any) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(f"[{section}] must be a table")
    allowed = SCHEMA[section]
    unknown = set(given) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    out = dict(allowed)
    out.update(given)
    return out


def _check_positive(cfg: dict, section: str, keys) -> None:
    for k in keys:
        v = cfg[section][k]
        if not isinstance(v, (int, float)) or v <= 0:
            raise ConfigError(f"[{section}] {k} must be a positive number")


def linspace_spec(spec, name: str) -> np.ndarray:
    """``[lo, hi, n]`` or an explicit list of values."""
    if isinstance(spec, list) and len(spec) == 3 and isinstance(spec[2], int) and spec[2] >= 1 \
            and not isinstance(spec[2], bool):
        lo, hi, n = spec
        return np.linspace(float(lo), float(hi), n)
    if isinstance(spec, list) and spec:
        return np.asarray(spec, float)
    raise ConfigError(f"grid {name} must be [lo, hi, n] or a nonempty list")


def parse_config(data: dict, command: Optional[str] = None, tol: Optional[float] = None,
                 path: Optional[Path] = None) -> ExperimentConfig:
    unknown = set(data) - set(SCHEMA) - set(TOP_LEVEL)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    cmd = command or data.get("command")
    if cmd not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}, got {cmd!r}")
    sections = {s: _merge(s, data.get(s, {})) for s in SCHEMA}
    if tol is not None:
        if tol <= 0:
            raise ConfigError("--tol must be positive")
        for s in ("closure", "conjugacy", "flow_portrait", "disks"):
            sections[s]["tol"] = float(tol)
    _check_positive(sections, "closure", ["tol", "threshold", "horizon_factor"])
    _check_positive(sections, "conjugacy", ["tol", "wronskian_threshold"])
    _check_positive(sections, "flow_portrait", ["tol", "samples"])
    _check_positive(sections, "disks", ["tol", "threshold", "N", "w_max", "c1_threshold"])
    _check_positive(sections, "twistor", ["threshold", "resolution", "step"])
    _check_positive(sections, "lagrangian", ["threshold", "theta"])
    for name in ("phi", "psi"):
        linspace_spec(sections["grid"][name], name)
    linspace_spec(sections["twistor"]["phi"], "twistor.phi")
    linspace_spec(sections["lagrangian"]["phi"], "lagrangian.phi")
    if not sections["disks"]["w"]:
        raise ConfigError("[disks] w must be nonempty")
    return ExperimentConfig(cmd, sections, path)


def load_config(path, command: Optional[str] = None, tol: Optional[float] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(data, command, tol, path)
