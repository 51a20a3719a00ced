"""Run configuration.

The configuration file is sectioned ``key = value`` text read with
:mod:`configparser`. Every section and key is checked against the schema in
``SCHEMA`` before any computation; unknown names are rejected. Lists are
comma separated, booleans accept ``true/false/yes/no/1/0`` and relative paths
resolve against the directory of the configuration file.

Grammar::

    [grid]      bounds, nx, ny, metric, unit_km, mask
    [basis]     counts, apertures, kernel, centers
    [model]     model, data_model, tabulated
    [priors]    preset, sigma_p, beta0, lambda, theta_s, theta_s_<p>, theta_r, nu
    [mcmc]      iterations, burn_in, thin, seed, chains, workers, theta_target,
                y_target, d_min, cov_start, cov_reg, init_theta_sd,
                store_y_obs, store_y_miss, store_bau
    [data]      dataset, retrievals, truth
    [simulate]  model, beta0, sigma_p, lambda, theta_s, theta_r, nu,
                sigma_o_ratio, missingness, missing_fraction, mbd_blocks,
                replicates, base_seed
    [diagnose]  alpha, fits, truth, models, replicates
    [output]    dir
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .priors import parse_prior

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "parse_id_list", "SCHEMA"]


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(",") if v.strip())


def parse_id_list(s: str) -> tuple[int, ...]:
    """Integer list with ``a-b`` ranges (inclusive)."""
    out: list[int] = []
    for part in s.split(","):
        part = part.strip()
        if not part:
            continue
        m = re.fullmatch(r"(\d+)\s*-\s*(\d+)", part)
        out.extend(range(int(m[1]), int(m[2]) + 1) if m else [int(part)])
    return tuple(out)


def _blocks(s: str) -> tuple[tuple[float, ...], ...]:
    """Rectangles ``x0 y0 x1 y1`` separated by ``;``."""
    out = []
    for part in s.split(";"):
        if part.strip():
            vals = tuple(float(v) for v in part.replace(",", " ").split())
            if len(vals) != 4:
                raise ValueError("each block needs 4 numbers")
            out.append(vals)
    return tuple(out)


def _words(s: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in s.split(",") if v.strip())


_PRIOR_KEY = re.compile(r"(sigma_p|beta0|lambda|theta_s(_\d+)?|theta_r|nu)")

SCHEMA: dict[str, dict] = {
    "grid": {"bounds": _floats, "nx": int, "ny": int, "metric": str, "unit_km": float, "mask": Path},
    "basis": {"counts": _ints, "apertures": _floats, "kernel": str, "centers": Path},
    "model": {"model": str, "data_model": str, "tabulated": _bool},
    "priors": {"preset": str},
    "mcmc": {
        "iterations": int, "burn_in": int, "thin": int, "seed": int, "chains": int, "workers": int,
        "theta_target": float, "y_target": float, "d_min": float, "cov_start": int, "cov_reg": float,
        "init_theta_sd": float, "store_y_obs": _bool, "store_y_miss": _bool, "store_bau": parse_id_list,
    },
    "data": {"dataset": Path, "retrievals": Path, "truth": Path},
    "simulate": {
        "model": str, "beta0": float, "sigma_p": float, "lambda": float, "theta_s": _floats,
        "theta_r": float, "nu": float, "sigma_o_ratio": float, "missingness": str,
        "missing_fraction": float, "mbd_blocks": _blocks, "replicates": int, "base_seed": int,
    },
    "diagnose": {"alpha": float, "fits": str, "truth": str, "models": _words, "replicates": parse_id_list},
    "output": {"dir": Path},
}


@dataclass
class RunConfig:
    """Validated configuration, one dict per section."""

    sections: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def section(self, name: str) -> dict:
        return dict(self.sections.get(name, {}))

    def set(self, section: str, key: str, value) -> None:
        self.sections.setdefault(section, {})[key] = value

    def require(self, section: str, key: str):
        val = self.get(section, key)
        if val is None:
            raise ConfigError(f"[{section}] {key} is required")
        return val


def parse_config(text: str, base_dir: str | Path = ".") -> RunConfig:
    """Parse and validate configuration text."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    base = Path(base_dir)
    out: dict[str, dict] = {}
    for name in cp.sections():
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        schema = SCHEMA[name]
        sec = {}
        for key, raw in cp.items(name):
            if name == "priors" and key != "preset":
                if not _PRIOR_KEY.fullmatch(key):
                    raise ConfigError(f"unknown prior parameter {key!r}")
                try:
                    sec[key] = parse_prior(raw)
                except ValueError as exc:
                    raise ConfigError(f"[priors] {key}: {exc}") from None
                continue
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} in [{name}]")
            try:
                val = schema[key](raw.strip())
            except ValueError as exc:
                raise ConfigError(f"[{name}] {key}: {exc}") from None
            if isinstance(val, Path) and not val.is_absolute():
                val = base / val
            sec[key] = val
        out[name] = sec
    cfg = RunConfig(out, base)
    _check(cfg)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path.parent)


def _check(cfg: RunConfig) -> None:
    b = cfg.get("grid", "bounds")
    if b is not None and len(b) != 4:
        raise ConfigError("[grid] bounds needs 4 numbers")
    for sec, key in (("grid", "nx"), ("grid", "ny"), ("mcmc", "thin"), ("mcmc", "chains"), ("mcmc", "workers")):
        v = cfg.get(sec, key)
        if v is not None and v < 1:
            raise ConfigError(f"[{sec}] {key} must be >= 1")
    for key in ("iterations", "burn_in"):
        v = cfg.get("mcmc", key)
        if v is not None and v < 0:
            raise ConfigError(f"[mcmc] {key} must be >= 0")
    alpha = cfg.get("diagnose", "alpha")
    if alpha is not None and not 0 < alpha < 1:
        raise ConfigError("[diagnose] alpha must lie in (0, 1)")
    metric = cfg.get("grid", "metric")
    if metric is not None and metric not in ("euclidean", "great-circle"):
        raise ConfigError(f"[grid] metric must be euclidean or great-circle, got {metric!r}")
    kernel = cfg.get("basis", "kernel")
    if kernel is not None and kernel not in ("exponential", "spherical"):
        raise ConfigError(f"[basis] kernel must be exponential or spherical, got {kernel!r}")
    ap, counts = cfg.get("basis", "apertures"), cfg.get("basis", "counts")
    if ap is not None and counts is not None and len(ap) != len(counts):
        raise ConfigError("[basis] needs one aperture per resolution")
    if cfg.get("basis", "centers") is not None and counts is not None:
        raise ConfigError("[basis] give either counts or centers, not both")
    bau = cfg.get("mcmc", "store_bau")
    if bau is not None and np.any(np.asarray(bau) < 0):
        raise ConfigError("[mcmc] store_bau ids must be >= 0")
