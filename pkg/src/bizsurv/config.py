"""Run configuration: defaults, JSON file, environment overrides and validation."""

from __future__ import annotations

import copy
import json
import os
from datetime import date
from pathlib import Path
from typing import Any, Mapping

from .learn.models import KINDS, GBDTParams, LRParams, MLPParams
from .synth import SynthConfig

ENV_PREFIX = "BIZSURV_"
TASKS = ("survival", "sentiment")
STAGES = ("synth", "ingest", "label", "features", "train", "evaluate", "ablate", "explain")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _hyper_defaults(cls) -> dict:
    return {k: getattr(cls(), k) for k in cls.__dataclass_fields__}


DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "task": "survival",
    "workdir": "work",
    "observation_path": None,
    "prediction_path": None,
    "observation_end": "2017-12-31",
    "prediction_end": "2019-12-31",
    "features": {
        "radius_m": 500.0,
        "vocab_size": 1000,
        "polarity_map": "default",
        "max_gap_days": None,
        "flow_scope": "all",
    },
    "split": {"test_fraction": 0.2},
    "smote": {"enabled": True, "k": 5, "amount": 1.0},
    "models": {
        "kinds": ["LR", "GBDT", "MLP"],
        "ablation_kinds": ["GBDT", "MLP"],
        "LR": _hyper_defaults(LRParams),
        "GBDT": _hyper_defaults(GBDTParams),
        "MLP": _hyper_defaults(MLPParams),
    },
    "explain": {
        "top_k": 10,
        "samples": 5000,
        "text_samples": 3000,
        "mode": "quartile",
        "kernel_width": None,
        "text_kernel_width": 25.0,
        "ridge_alpha": 1.0,
    },
    # Snapshot dates come from the top-level fields above.
    "synth": {k: v for k, v in SynthConfig().to_dict().items() if k not in ("observation_end", "prediction_end")},
}


def _merge(base: dict, override: Mapping, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in out:
            raise ConfigError(where, "unknown field")
        if isinstance(out[key], dict) and key != "synth":
            if not isinstance(value, Mapping):
                raise ConfigError(where, "expected an object")
            out[key] = _merge(out[key], value, where)
        elif key == "synth":
            if not isinstance(value, Mapping):
                raise ConfigError(where, "expected an object")
            merged = dict(out[key])
            for k, v in value.items():
                if k not in merged:
                    raise ConfigError(f"{where}.{k}", "unknown field")
                merged[k] = v
            out[key] = merged
        else:
            out[key] = copy.deepcopy(value)
    return out


def _parse_env_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def env_overrides(environ: Mapping[str, str] | None = None) -> dict:
    """``BIZSURV_SMOTE__K=7`` -> ``{"smote": {"k": 7}}``; values parsed as JSON when possible."""
    environ = os.environ if environ is None else environ
    out: dict = {}
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX):
            continue
        parts = [p.lower() for p in name[len(ENV_PREFIX):].split("__") if p]
        if not parts:
            continue
        # Model hyperparameter sections keep their upper-case names.
        if len(parts) >= 2 and parts[0] == "models" and parts[1].upper() in KINDS:
            parts[1] = parts[1].upper()
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = _parse_env_value(environ[name])
    return out


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(path, message)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate(cfg: Mapping) -> None:
    _require(_is_int(cfg["seed"]) and cfg["seed"] >= 0, "seed", "must be a nonnegative integer")
    _require(cfg["task"] in TASKS, "task", f"must be one of {list(TASKS)}")
    _require(isinstance(cfg["workdir"], str) and cfg["workdir"], "workdir", "must be a nonempty path")
    for key in ("observation_path", "prediction_path"):
        _require(cfg[key] is None or isinstance(cfg[key], str), key, "must be a path or null")
    dates = {}
    for key in ("observation_end", "prediction_end"):
        try:
            dates[key] = date.fromisoformat(str(cfg[key]))
        except ValueError:
            raise ConfigError(key, "must be an ISO date (YYYY-MM-DD)") from None
    _require(dates["observation_end"] < dates["prediction_end"], "prediction_end", "must be after observation_end")

    f = cfg["features"]
    _require(_is_num(f["radius_m"]) and f["radius_m"] > 0, "features.radius_m", "must be positive")
    _require(_is_int(f["vocab_size"]) and f["vocab_size"] >= 1, "features.vocab_size", "must be a positive integer")
    _require(f["polarity_map"] in ("default", "drop3"), "features.polarity_map", "must be 'default' or 'drop3'")
    _require(f["max_gap_days"] is None or (_is_num(f["max_gap_days"]) and f["max_gap_days"] > 0),
             "features.max_gap_days", "must be positive or null")
    _require(f["flow_scope"] in ("all", "neighborhood"), "features.flow_scope", "must be 'all' or 'neighborhood'")

    tf = cfg["split"]["test_fraction"]
    _require(_is_num(tf) and 0 < tf < 1, "split.test_fraction", "must lie strictly between 0 and 1")
    s = cfg["smote"]
    _require(isinstance(s["enabled"], bool), "smote.enabled", "must be true or false")
    _require(_is_int(s["k"]) and s["k"] >= 1, "smote.k", "must be a positive integer")
    _require(_is_num(s["amount"]) and 0 < s["amount"] <= 1, "smote.amount", "must lie in (0, 1]")

    m = cfg["models"]
    for key in ("kinds", "ablation_kinds"):
        _require(isinstance(m[key], list) and m[key] and all(k in KINDS for k in m[key]),
                 f"models.{key}", f"must be a nonempty list drawn from {list(KINDS)}")
    _require(set(m["ablation_kinds"]) <= set(m["kinds"]), "models.ablation_kinds", "must be a subset of models.kinds")
    for kind, cls in (("LR", LRParams), ("GBDT", GBDTParams), ("MLP", MLPParams)):
        for k, v in m[kind].items():
            _require(k in cls.__dataclass_fields__, f"models.{kind}.{k}", "unknown hyperparameter")
            where = f"models.{kind}.{k}"
            if k == "momentum":
                _require(_is_num(v) and 0 <= v < 1, where, "must lie in [0, 1)")
            elif k == "l2":
                _require(_is_num(v) and v >= 0, where, "must be nonnegative")
            else:
                _require(_is_num(v) and v > 0, where, "must be a positive number")
        for k in ("n_trees", "max_depth", "min_samples_leaf", "max_bins", "hidden", "epochs", "batch_size", "max_iter"):
            if k in m[kind]:
                _require(_is_int(m[kind][k]), f"models.{kind}.{k}", "must be an integer")

    e = cfg["explain"]
    for key in ("top_k", "samples", "text_samples"):
        _require(_is_int(e[key]) and e[key] >= 1, f"explain.{key}", "must be a positive integer")
    _require(e["samples"] >= 2 and e["text_samples"] >= 2, "explain.samples", "must be at least 2")
    _require(e["mode"] in ("quartile", "continuous"), "explain.mode", "must be 'quartile' or 'continuous'")
    _require(e["kernel_width"] is None or (_is_num(e["kernel_width"]) and e["kernel_width"] > 0),
             "explain.kernel_width", "must be positive or null")
    for key in ("text_kernel_width", "ridge_alpha"):
        _require(_is_num(e[key]) and e[key] > 0, f"explain.{key}", "must be positive")
    try:
        synth_config(cfg).validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError("synth", str(exc)) from None


def load_config(
    path: str | Path | None = None,
    overrides: Mapping | None = None,
    environ: Mapping[str, str] | None = None,
) -> dict:
    """Defaults, then the JSON file, then environment, then explicit overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from None
        if not isinstance(data, Mapping):
            raise ConfigError("<file>", "top level must be an object")
        cfg = _merge(cfg, data)
    cfg = _merge(cfg, env_overrides(environ))
    if overrides:
        cfg = _merge(cfg, overrides)
    validate(cfg)
    return cfg


def synth_config(cfg: Mapping) -> SynthConfig:
    return SynthConfig.from_dict({
        **cfg["synth"], "observation_end": cfg["observation_end"], "prediction_end": cfg["prediction_end"],
    })


def artifact_config(cfg: Mapping) -> dict:
    """Config echoed into artifacts; the workdir location is left out so runs compare byte for byte."""
    return {k: v for k, v in cfg.items() if k != "workdir"}
