"""Strict JSON experiment configs.

Layout::

    {
      "run": { ...RunConfig fields..., "prior": {...}, "reward": {...} },
      "sweep": {"alpha_star": [0.1, 0.5], ...},      # optional, cartesian product
      "seeds": [0, 1, 2],
      "output_dir": "out",                           # optional
      "metrics": ["mean_reward", "mmd"]              # optional
    }

Unknown keys anywhere are rejected with the offending path.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .engine import ALL_METRICS, RunConfig
from .priors import GaussianMixture
from .rewards import ClassLogitReward, QuadraticReward, TabulatedReward
from .rng import MAX_SEED


class ConfigError(ValueError):
    pass


_RUN_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_SWEEPABLE = set(_RUN_FIELDS) - {"prior", "reward", "metrics", "workers", "seed"}
_TOP_KEYS = {"run", "sweep", "seeds", "output_dir", "metrics"}


@dataclass(frozen=True)
class ExperimentConfig:
    base: dict
    sweep: dict[str, list]
    seeds: list[int]
    output_dir: str | None
    metrics: tuple[str, ...]

    def sweep_points(self) -> list[tuple[str, dict]]:
        """``(label, overrides)`` for each point of the cartesian sweep."""
        if not self.sweep:
            return [("base", {})]
        names = list(self.sweep)
        points = []
        for values in itertools.product(*(self.sweep[n] for n in names)):
            overrides = dict(zip(names, values))
            label = ";".join(f"{n}={_fmt(v)}" for n, v in overrides.items())
            points.append((label, overrides))
        return points

    def run_config(self, overrides: dict, seed: int, workers: int = 1) -> RunConfig:
        fields = dict(self.base)
        fields.update(overrides)
        fields["seed"] = seed
        fields["workers"] = workers
        fields["metrics"] = self.metrics
        try:
            return build_run_config(fields, path="run")
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"run: {exc}") from exc


def _fmt(v) -> str:
    return json.dumps(v, separators=(",", ":"))


def _require_keys(obj, allowed: set, required: set, path: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {unknown}")
    missing = sorted(required - set(obj))
    if missing:
        raise ConfigError(f"{path}: missing required key(s) {missing}")


def prior_from_dict(obj, path: str = "prior") -> GaussianMixture:
    _require_keys(obj, {"weights", "means", "variances"}, {"weights", "means", "variances"}, path)
    try:
        return GaussianMixture(obj["weights"], obj["means"], obj["variances"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def prior_to_dict(prior: GaussianMixture) -> dict:
    return {
        "weights": prior.weights.tolist(),
        "means": prior.means.tolist(),
        "variances": prior.variances.tolist(),
    }


def reward_from_dict(obj, path: str = "reward"):
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError(f"{path}: expected an object with a 'kind' key")
    kind = obj["kind"]
    try:
        if kind == "quadratic":
            _require_keys(obj, {"kind", "target", "scale"}, {"kind", "target"}, path)
            return QuadraticReward(obj["target"], float(obj.get("scale", 1.0)))
        if kind == "class_logit":
            _require_keys(obj, {"kind", "classes", "class_priors", "target_class"},
                          {"kind", "classes", "class_priors", "target_class"}, path)
            if not isinstance(obj["classes"], list):
                raise ConfigError(f"{path}.classes: expected a list")
            classes = [prior_from_dict(c, f"{path}.classes[{i}]") for i, c in enumerate(obj["classes"])]
            return ClassLogitReward(classes, obj["class_priors"], _int(obj["target_class"], f"{path}.target_class"))
        if kind == "tabulated":
            _require_keys(obj, {"kind", "grid", "values"}, {"kind", "grid", "values"}, path)
            return TabulatedReward(obj["grid"], obj["values"])
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    raise ConfigError(f"{path}.kind: unknown reward kind {kind!r}")


def reward_to_dict(reward) -> dict:
    if isinstance(reward, QuadraticReward):
        return {"kind": "quadratic", "target": reward.target.tolist(), "scale": reward.scale}
    if isinstance(reward, ClassLogitReward):
        return {
            "kind": "class_logit",
            "classes": [prior_to_dict(c) for c in reward.classes],
            "class_priors": reward.class_priors.tolist(),
            "target_class": reward.target_class,
        }
    if isinstance(reward, TabulatedReward):
        return {"kind": "tabulated", "grid": reward.grid.tolist(), "values": reward.values.tolist()}
    raise TypeError(f"cannot serialize reward {reward!r}")


def _int(v, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    return v


def _coerce(name: str, value, path: str):
    f = _RUN_FIELDS[name]
    default = f.default
    if name == "resample_steps":
        if value is None:
            return None
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list of integers or null")
        return tuple(_int(v, f"{path}[{i}]") for i, v in enumerate(value))
    if name == "metrics":
        return tuple(value)
    if name in ("beta_start", "beta_end"):
        if value is None:
            return None
        default = 0.0
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        return _int(value, path)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def build_run_config(fields: dict, path: str = "run") -> RunConfig:
    _require_keys(fields, set(_RUN_FIELDS), {"prior", "reward"}, path)
    kwargs: dict[str, Any] = {}
    for name, value in fields.items():
        sub = f"{path}.{name}"
        if name == "prior":
            kwargs[name] = value if isinstance(value, GaussianMixture) else prior_from_dict(value, sub)
        elif name == "reward":
            kwargs[name] = value if not isinstance(value, dict) else reward_from_dict(value, sub)
        else:
            kwargs[name] = _coerce(name, value, sub)
    seed = kwargs.get("seed", 0)
    if not 0 <= seed <= MAX_SEED:
        raise ConfigError(f"{path}.seed: must be an unsigned 64-bit integer")
    try:
        return RunConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_experiment(doc: dict) -> ExperimentConfig:
    _require_keys(doc, _TOP_KEYS, {"run"}, "config")
    base = doc["run"]
    _require_keys(base, set(_RUN_FIELDS) - {"workers", "metrics"}, {"prior", "reward"}, "run")
    sweep = doc.get("sweep", {}) or {}
    if not isinstance(sweep, dict):
        raise ConfigError("sweep: expected an object")
    for name, values in sweep.items():
        if name not in _SWEEPABLE:
            raise ConfigError(f"sweep.{name}: not a sweepable run field")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep.{name}: expected a non-empty list")
    seeds = doc.get("seeds", [base.get("seed", 0)])
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds: expected a non-empty list of integers")
    for i, s in enumerate(seeds):
        _int(s, f"seeds[{i}]")
        if not 0 <= s <= MAX_SEED:
            raise ConfigError(f"seeds[{i}]: must be an unsigned 64-bit integer")
    metrics = doc.get("metrics", list(ALL_METRICS))
    if not isinstance(metrics, list) or any(m not in ALL_METRICS for m in metrics):
        raise ConfigError(f"metrics: expected a subset of {list(ALL_METRICS)}")
    out_dir = doc.get("output_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("output_dir: expected a string")
    exp = ExperimentConfig(base=dict(base), sweep=dict(sweep), seeds=list(seeds),
                           output_dir=out_dir, metrics=tuple(metrics))
    # fail fast on every sweep point, not mid-run
    for label, overrides in exp.sweep_points():
        try:
            exp.run_config(overrides, seeds[0])
        except ConfigError as exc:
            raise ConfigError(f"sweep point {label}: {exc}") from exc
    return exp


def load_experiment(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_experiment(doc)


def dump_json(obj) -> str:
    """Canonical JSON used for every report file."""
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False, default=_np_default) + "\n"


def _np_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
