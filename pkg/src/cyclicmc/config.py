"""Experiment configuration: YAML loading, defaults, validation, run ids.

A config file is a YAML mapping whose ``experiment`` key selects one of
``mixture25``, ``blr_ess``, ``bias_mse`` or ``w2_probe``. Validation is a
dry run that reports every violation rather than stopping at the first.
Run directories are keyed by a hash of the fully resolved config, so
rerunning an identical config lands in the same directory.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path

import yaml

OUTPUT_DIR_ENV = "CYCLICMC_OUTPUT_DIR"
EXPERIMENTS = ("mixture25", "blr_ess", "bias_mse", "w2_probe")


class ConfigError(ValueError):
    """Invalid configuration; carries the full list of violations."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


_DEFAULTS: dict[str, dict] = {
    "mixture25": {
        "seed": 0,
        "repetitions": 10,
        "chains": 1,
        "total_iters": 50000,
        "init_box": 6.0,
        "temperature": 1.0,
        "write_chains": "first_run",
        "csgld": {"alpha0": 0.09, "num_cycles": 30, "beta": 0.25},
        "sgld": {"decay_a": 0.05, "decay_b": 0.0, "decay_gamma": 0.55},
        "coverage": {"radius": 0.25, "min_count": 100},
    },
    "blr_ess": {
        "seed": 0,
        "repetitions": 5,
        "prior_variance": 100.0,
        "minibatch_size": 32,
        "burn_in": 5000,
        "kept": 5000,
        "num_cycles": 100,
        "beta": 0.01,
        "friction_eta": 0.5,
        "temperature": 1.0,
        "max_lag": None,
        "write_chains": "first_run",
        "dataset": {"path": None, "has_header": False, "standardize": True,
                    "synthetic_fallback": True,
                    "synth_n": 690, "synth_d": 14},
        "alpha0_n": {"sgld": 1.2, "sghmc": 0.5},
        "hmc": {"iters": 50000, "leapfrog_steps": 10, "stepsize": 0.1,
                "burn_in": 1000},
    },
    "bias_mse": {
        "seed": 0,
        "seeds": 20,
        "alpha0": 0.01,
        "alpha0_alt": 0.2,
        "k_values": [1000, 10000, 100000],
        "cycle_length": 8,
        "beta": 0.0,
        "test_fn": "theta_sq",
        "target": {"mean": [0.0], "variance": 1.0},
    },
    "w2_probe": {
        "seed": 0,
        "repetitions": 5,
        "total_iters": 50000,
        "samples_per_cycle": 200,
        "early_cycles": 3,
        "cloud_size": 512,
        "temperature": 1.0,
        "csgld": {"alpha0": 0.09, "num_cycles": 30, "beta": 0.25},
        "sgld": {"decay_a": 0.05, "decay_b": 0.0, "decay_gamma": 0.55},
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path) -> dict:
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError([f"{path}: config must be a YAML mapping"])
    return cfg


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` overrides, later entries winning."""
    cfg = copy.deepcopy(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError([f"override {item!r} is not of the form key=value"])
        key, _, raw = item.partition("=")
        value = yaml.safe_load(raw) if raw != "" else None
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError([f"override {key!r} descends into a scalar"])
        node[parts[-1]] = value
    return cfg


def resolve(cfg: dict) -> dict:
    """Merge experiment defaults under the user config."""
    exp = cfg.get("experiment")
    if exp not in _DEFAULTS:
        return copy.deepcopy(cfg)
    merged = _deep_merge(_DEFAULTS[exp], cfg)
    merged["experiment"] = exp
    return merged


def _get(cfg: dict, dotted: str):
    node = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return None
        node = node[part]
    return node


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _check_number(cfg, out, field, *, positive=False, nonneg=False,
                  integer=False, open_unit=False, lo=None, hi=None):
    value = _get(cfg, field)
    if value is None:
        out.append(f"{field}: missing required field")
        return
    if not _is_num(value):
        out.append(f"{field}: must be a number, got {value!r}")
        return
    if integer and int(value) != value:
        out.append(f"{field}: must be an integer, got {value!r}")
        return
    if positive and not value > 0:
        out.append(f"{field}: must be > 0, got {value!r}")
    if nonneg and value < 0:
        out.append(f"{field}: must be >= 0, got {value!r}")
    if open_unit and not 0 < value < 1:
        out.append(f"{field}: must be in (0, 1), got {value!r}")
    if lo is not None and value < lo:
        out.append(f"{field}: must be >= {lo}, got {value!r}")
    if hi is not None and value > hi:
        out.append(f"{field}: must be <= {hi}, got {value!r}")


def validate_config(cfg: dict) -> list[str]:
    """Dry-run validation; returns every violation found (empty when valid)."""
    out: list[str] = []
    exp = cfg.get("experiment")
    if exp is None:
        return ["experiment: missing required field"]
    if exp not in EXPERIMENTS:
        return [f"experiment: must be one of {list(EXPERIMENTS)}, got {exp!r}"]
    cfg = resolve(cfg)
    _check_number(cfg, out, "seed", nonneg=True, integer=True)

    if exp == "mixture25":
        _check_number(cfg, out, "repetitions", positive=True, integer=True)
        _check_number(cfg, out, "chains", positive=True, integer=True)
        _check_number(cfg, out, "total_iters", positive=True, integer=True)
        _check_number(cfg, out, "init_box", positive=True)
        _check_number(cfg, out, "csgld.alpha0", positive=True)
        _check_number(cfg, out, "csgld.num_cycles", positive=True, integer=True)
        _check_number(cfg, out, "csgld.beta", open_unit=True)
        _check_number(cfg, out, "sgld.decay_a", positive=True)
        _check_number(cfg, out, "sgld.decay_b", nonneg=True)
        _check_number(cfg, out, "sgld.decay_gamma", lo=0.501, hi=1.0)
        _check_number(cfg, out, "coverage.radius", positive=True)
        _check_number(cfg, out, "coverage.min_count", positive=True, integer=True)
        total, cycles = _get(cfg, "total_iters"), _get(cfg, "csgld.num_cycles")
        if _is_num(total) and _is_num(cycles) and total < cycles:
            out.append("total_iters: must be >= csgld.num_cycles")

    elif exp == "blr_ess":
        _check_number(cfg, out, "repetitions", positive=True, integer=True)
        _check_number(cfg, out, "prior_variance", positive=True)
        _check_number(cfg, out, "minibatch_size", positive=True, integer=True)
        _check_number(cfg, out, "burn_in", nonneg=True, integer=True)
        _check_number(cfg, out, "kept", positive=True, integer=True)
        _check_number(cfg, out, "num_cycles", positive=True, integer=True)
        _check_number(cfg, out, "beta", open_unit=True)
        _check_number(cfg, out, "friction_eta", positive=True, hi=1.0)
        _check_number(cfg, out, "alpha0_n.sgld", positive=True)
        _check_number(cfg, out, "alpha0_n.sghmc", positive=True)
        _check_number(cfg, out, "hmc.iters", positive=True, integer=True)
        _check_number(cfg, out, "hmc.leapfrog_steps", positive=True, integer=True)
        _check_number(cfg, out, "hmc.stepsize", positive=True)
        _check_number(cfg, out, "hmc.burn_in", nonneg=True, integer=True)
        path = _get(cfg, "dataset.path")
        fallback = _get(cfg, "dataset.synthetic_fallback")
        if path is None and not fallback:
            out.append("dataset.path: missing and dataset.synthetic_fallback "
                       "is disabled")
        if fallback:
            _check_number(cfg, out, "dataset.synth_n", lo=10, integer=True)
            _check_number(cfg, out, "dataset.synth_d", positive=True, integer=True)

    elif exp == "bias_mse":
        _check_number(cfg, out, "seeds", positive=True, integer=True)
        _check_number(cfg, out, "alpha0", positive=True)
        _check_number(cfg, out, "alpha0_alt", positive=True)
        _check_number(cfg, out, "cycle_length", positive=True, integer=True)
        _check_number(cfg, out, "beta", lo=0.0, hi=0.999)
        k_values = _get(cfg, "k_values")
        if not isinstance(k_values, list) or not k_values or \
                not all(_is_num(k) and k >= 1 for k in k_values):
            out.append("k_values: must be a non-empty list of positive integers")
        if _get(cfg, "test_fn") not in ("theta", "theta_sq"):
            out.append("test_fn: must be 'theta' or 'theta_sq'")
        _check_number(cfg, out, "target.variance", positive=True)
        mean = _get(cfg, "target.mean")
        if not isinstance(mean, list) or not mean or \
                not all(_is_num(v) for v in mean):
            out.append("target.mean: must be a non-empty list of numbers")

    elif exp == "w2_probe":
        _check_number(cfg, out, "repetitions", positive=True, integer=True)
        _check_number(cfg, out, "total_iters", positive=True, integer=True)
        _check_number(cfg, out, "samples_per_cycle", positive=True, integer=True)
        _check_number(cfg, out, "early_cycles", positive=True, integer=True)
        _check_number(cfg, out, "cloud_size", positive=True, integer=True)
        _check_number(cfg, out, "csgld.alpha0", positive=True)
        _check_number(cfg, out, "csgld.num_cycles", positive=True, integer=True)
        _check_number(cfg, out, "csgld.beta", open_unit=True)
        _check_number(cfg, out, "sgld.decay_a", positive=True)
        _check_number(cfg, out, "sgld.decay_gamma", lo=0.501, hi=1.0)
        early, cycles = _get(cfg, "early_cycles"), _get(cfg, "csgld.num_cycles")
        if _is_num(early) and _is_num(cycles) and early > cycles:
            out.append("early_cycles: must be <= csgld.num_cycles")
        spc, early2 = _get(cfg, "samples_per_cycle"), _get(cfg, "early_cycles")
        cloud = _get(cfg, "cloud_size")
        if all(_is_num(v) for v in (spc, early2, cloud)) and spc * early2 < cloud:
            out.append("samples_per_cycle: samples_per_cycle * early_cycles "
                       "must be >= cloud_size")
    return out


def config_hash(cfg: dict) -> str:
    """Stable 12-hex-digit id of a resolved config."""
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"),
                           default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def resolve_output_dir(cfg: dict, cli_value: str | None = None) -> Path:
    """Precedence: CLI flag, then config, then environment, then ./runs."""
    if cli_value:
        return Path(cli_value)
    if cfg.get("output_dir"):
        return Path(cfg["output_dir"])
    env = os.environ.get(OUTPUT_DIR_ENV)
    if env:
        return Path(env)
    return Path("runs")
