"""Run configuration: a JSON document of named blocks with dotted overrides.

Blocks and their keys are fixed; unknown keys are rejected. Values left at
``None`` in the ``trap`` block are taken from the selected preset.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Optional

from .correlations import InterferometerSpec, SourceSpec
from .dephasing import PRESETS, TrapModelParams
from .errors import DomainError, UsageError

DEFAULTS: dict = {
    "seed": 0,
    "preset": None,
    "trap": {"preset": "line-A", **{f.name: None for f in fields(TrapModelParams)}},
    "currents": {"values": None, "start": 0.0, "stop": 500.0, "step": 10.0},
    "source": {"tau_r": 800.0, "tau_c": 325.0, "g2_zero": 0.0},
    "interferometer": {"r1": 0.5, "t1": 0.5, "r2": 0.5, "t2": 0.5,
                       "delta_tau2": 10_000.0, "overlap_v": 1.0},
    "detector": {"fwhm": 428.0, "response_file": None},
    "grid": {"step": 5.0, "half_range": 25_000.0, "truncation_sigmas": 6.0},
    "map": {"fwhm": [50.0 * k for k in range(1, 21)],
            "tau_c": [50.0 * k for k in range(1, 21)],
            "workers": 1},
    "stream": {"pump_rate": 1.0 / 20_000.0, "n_photons": 1_000_000, "duration": None,
               "mode": "mzi-parallel", "bin_width": 100.0, "range": 25_000.0,
               "jitter": True, "workers": 1, "dump_events": False},
    "fit": {"kind": "coherence", "free": {}, "fixed": {}, "restarts": 8,
            "max_evaluations": 20_000},
    "output": {"dir": "out"},
}

# blocks whose contents are free-form name -> value maps
_OPEN_MAPS = {("fit", "free"), ("fit", "fixed")}

PRESET_BLOCKS = {
    "line-A": {"trap": {"preset": "line-A"}},
    "line-B": {"trap": {"preset": "line-B"}},
    "fig3-defaults": {
        "source": {"tau_r": 800.0, "tau_c": 325.0, "g2_zero": 0.0},
        "interferometer": {"r1": 0.5, "t1": 0.5, "r2": 0.5, "t2": 0.5,
                           "delta_tau2": 10_000.0, "overlap_v": 1.0},
        "detector": {"fwhm": 428.0, "response_file": None},
    },
}


def _merge(base: dict, update: dict, path: tuple = ()) -> None:
    for key, value in update.items():
        where = ".".join(path + (key,))
        if key not in base:
            raise UsageError(f"unknown configuration key {where!r}")
        if isinstance(base[key], dict) and path + (key,) not in _OPEN_MAPS:
            if not isinstance(value, dict):
                raise UsageError(f"configuration key {where!r} must be an object")
            _merge(base[key], value, path + (key,))
        else:
            base[key] = copy.deepcopy(value)


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    """Apply one ``dotted.key=value`` override; the value is parsed as JSON if possible."""
    if "=" not in assignment:
        raise UsageError(f"override {assignment!r} is not of the form key=value")
    key, _, raw = assignment.partition("=")
    parts = key.strip().split(".")
    node = cfg
    for i, part in enumerate(parts[:-1]):
        if not isinstance(node, dict) or part not in node:
            raise UsageError(f"unknown configuration key {'.'.join(parts[:i + 1])!r}")
        node = node[part]
        if tuple(parts[:i + 1]) in _OPEN_MAPS:
            node[parts[-1]] = _parse_value(raw)
            return
    if not isinstance(node, dict) or parts[-1] not in node:
        raise UsageError(f"unknown configuration key {key!r}")
    node[parts[-1]] = _parse_value(raw)


def load_config(path: Optional[str] = None, overrides=(), preset: Optional[str] = None,
                seed: Optional[int] = None, out: Optional[str] = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    user = {}
    if path:
        try:
            user = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: line {exc.lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(user, dict):
            raise UsageError("configuration must be a JSON object")
    chosen = preset or user.get("preset")
    if chosen is not None:
        if chosen not in PRESET_BLOCKS:
            raise UsageError(f"unknown preset {chosen!r}; choose from {sorted(PRESET_BLOCKS)}")
        _merge(cfg, PRESET_BLOCKS[chosen])
    _merge(cfg, user)
    for assignment in overrides:
        apply_override(cfg, assignment)
    if preset is not None:
        cfg["preset"] = preset
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["output"]["dir"] = out
    if not isinstance(cfg["seed"], int) or not 0 <= cfg["seed"] < 2 ** 64:
        raise UsageError("seed must be an unsigned 64-bit integer")
    return cfg


def _number(block: dict, key: str, where: str) -> float:
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise UsageError(f"{where}.{key} must be a number, got {value!r}")
    return float(value)


def _build(factory, block: dict, where: str, keys):
    kwargs = {k: _number(block, k, where) for k in keys}
    try:
        return factory(**kwargs)
    except DomainError as exc:
        raise UsageError(f"invalid {where} block: {exc}") from exc


def trap_params(cfg: dict) -> TrapModelParams:
    block = cfg["trap"]
    name = block["preset"]
    if name is None:
        base = TrapModelParams()
    elif name in PRESETS:
        base = PRESETS[name]
    else:
        raise UsageError(f"unknown trap preset {name!r}; choose from {sorted(PRESETS)}")
    changes = {k: _number(block, k, "trap") for k, v in block.items()
               if k != "preset" and v is not None}
    try:
        return base.with_values(**changes)
    except DomainError as exc:
        raise UsageError(f"invalid trap block: {exc}") from exc


def currents(cfg: dict) -> list:
    block = cfg["currents"]
    if block["values"] is not None:
        values = block["values"]
        if not isinstance(values, list):
            raise UsageError("currents.values must be a list")
        out = [float(_number({"v": v}, "v", "currents.values")) for v in values]
    else:
        start = _number(block, "start", "currents")
        stop = _number(block, "stop", "currents")
        step = _number(block, "step", "currents")
        if step <= 0:
            raise UsageError("currents.step must be > 0")
        n = int(round((stop - start) / step)) + 1 if stop >= start else 0
        out = [start + k * step for k in range(n) if start + k * step <= stop + 1e-9 * step]
    if not out:
        raise UsageError("current list is empty")
    if min(out) < 0:
        raise UsageError("currents must be >= 0")
    return out


def source_spec(cfg: dict) -> SourceSpec:
    return _build(SourceSpec, cfg["source"], "source", ("tau_r", "tau_c", "g2_zero"))


def interferometer_spec(cfg: dict) -> InterferometerSpec:
    return _build(InterferometerSpec, cfg["interferometer"], "interferometer",
                  ("r1", "t1", "r2", "t2", "delta_tau2", "overlap_v"))


@dataclass(frozen=True)
class GridSettings:
    step: float
    half_range: float
    truncation_sigmas: float


def grid_settings(cfg: dict) -> GridSettings:
    g = cfg["grid"]
    settings = GridSettings(_number(g, "step", "grid"), _number(g, "half_range", "grid"),
                            _number(g, "truncation_sigmas", "grid"))
    if settings.step <= 0 or settings.half_range <= settings.step:
        raise UsageError("grid.step must be > 0 and smaller than grid.half_range")
    if settings.truncation_sigmas < 4:
        raise UsageError("grid.truncation_sigmas must be >= 4")
    return settings


def positive_list(cfg: dict, block: str, key: str) -> list:
    values = cfg[block][key]
    if not isinstance(values, list) or not values:
        raise UsageError(f"{block}.{key} must be a non-empty list")
    out = [_number({"v": v}, "v", f"{block}.{key}") for v in values]
    if min(out) <= 0:
        raise UsageError(f"{block}.{key} values must be > 0")
    return out
