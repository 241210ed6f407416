"""Run configuration files: TOML tables for cost, training and the two measures."""

from __future__ import annotations

from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import numpy as np

from .measures import Empirical, Gaussian, ImagePalette, MeasureSpec, Mixture
from .training import TrainConfig

__all__ = ["ConfigError", "RunConfig", "load_run_config", "parse_run_config"]


class ConfigError(ValueError):
    """A run configuration is malformed; the message names the offending key."""


@dataclass
class RunConfig:
    train: TrainConfig
    source: MeasureSpec
    target: MeasureSpec


_TRAIN_FLOATS = {"lr", "cycle_weight", "stop_epsilon", "sample_noise_std"}
_TRAIN_INTS = {"dim", "width", "potential_hidden_layers", "field_hidden_layers",
               "interior_batch", "boundary_batch", "cycle_batch",
               "inner_potential_steps", "outer_iters", "min_iters", "seed",
               "workers", "checkpoint_every"}
_TRAIN_BOOLS = {"precondition", "deterministic"}
_TRAIN_KEYS = _TRAIN_FLOATS | _TRAIN_INTS | _TRAIN_BOOLS


def _as_float(value, key):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"key {key} must be a number")
    return float(value)


def _as_int(value, key):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"key {key} must be an integer")
    return int(value)


def _as_bool(value, key):
    if not isinstance(value, bool):
        raise ConfigError(f"key {key} must be a boolean")
    return value


def _as_vector(value, key):
    try:
        vec = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"key {key} must be a list of numbers") from None
    if vec.ndim != 1 or vec.size == 0:
        raise ConfigError(f"key {key} must be a nonempty list of numbers")
    return vec


def _as_matrix(value, key):
    try:
        mat = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"key {key} must be a list of equal-length rows") from None
    if mat.ndim != 2:
        raise ConfigError(f"key {key} must be a list of equal-length rows")
    return mat


def _parse_gaussian(table, prefix):
    unknown = set(table) - {"kind", "mean", "cov"}
    if unknown:
        raise ConfigError(f"unknown key {prefix}.{sorted(unknown)[0]}")
    for need in ("mean", "cov"):
        if need not in table:
            raise ConfigError(f"missing key {prefix}.{need}")
    try:
        return Gaussian(_as_vector(table["mean"], f"{prefix}.mean"),
                        _as_matrix(table["cov"], f"{prefix}.cov"))
    except ValueError as exc:
        raise ConfigError(f"{prefix}: {exc}") from None


def _parse_measure(table, prefix) -> MeasureSpec:
    if not isinstance(table, dict):
        raise ConfigError(f"{prefix} must be a table")
    kind = table.get("kind")
    if kind is None:
        raise ConfigError(f"missing key {prefix}.kind")
    if kind == "gaussian":
        return _parse_gaussian(table, prefix)
    if kind == "mixture":
        unknown = set(table) - {"kind", "weights", "components"}
        if unknown:
            raise ConfigError(f"unknown key {prefix}.{sorted(unknown)[0]}")
        if "weights" not in table or "components" not in table:
            raise ConfigError(f"{prefix} mixture needs weights and components")
        comps = table["components"]
        if not isinstance(comps, list) or not comps:
            raise ConfigError(f"key {prefix}.components must be a list of tables")
        gaussians = [_parse_gaussian(c, f"{prefix}.components[{i}]")
                     for i, c in enumerate(comps)]
        try:
            return Mixture(_as_vector(table["weights"], f"{prefix}.weights"), gaussians)
        except ValueError as exc:
            raise ConfigError(f"{prefix}: {exc}") from None
    if kind in ("csv", "ppm"):
        unknown = set(table) - {"kind", "path"}
        if unknown:
            raise ConfigError(f"unknown key {prefix}.{sorted(unknown)[0]}")
        path = table.get("path")
        if not isinstance(path, str) or not path:
            raise ConfigError(f"key {prefix}.path must be a nonempty string")
        return Empirical(path) if kind == "csv" else ImagePalette(path)
    raise ConfigError(f"key {prefix}.kind must be one of gaussian, mixture, csv, "
                      f"ppm; got {kind!r}")


def _spec_dim(spec: MeasureSpec) -> int | None:
    """Dimension of a measure without touching the filesystem, when possible."""
    if isinstance(spec, (Gaussian, Mixture)):
        return spec.dim
    if isinstance(spec, ImagePalette):
        return 3
    return None


def parse_run_config(text: str, origin: str = "config") -> RunConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{origin}: {exc}") from None

    unknown = set(doc) - {"cost", "train", "source", "target"}
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]}")
    for need in ("source", "target"):
        if need not in doc:
            raise ConfigError(f"missing table [{need}]")

    kwargs = {}
    cost = doc.get("cost", {})
    if not isinstance(cost, dict):
        raise ConfigError("cost must be a table")
    for key, value in cost.items():
        if key not in ("alpha", "beta"):
            raise ConfigError(f"unknown key cost.{key}")
        kwargs[key] = _as_float(value, f"cost.{key}")

    train = doc.get("train", {})
    if not isinstance(train, dict):
        raise ConfigError("train must be a table")
    for key, value in train.items():
        if key not in _TRAIN_KEYS:
            raise ConfigError(f"unknown key train.{key}")
        if key in _TRAIN_FLOATS:
            kwargs[key] = _as_float(value, f"train.{key}")
        elif key in _TRAIN_BOOLS:
            kwargs[key] = _as_bool(value, f"train.{key}")
        else:
            kwargs[key] = _as_int(value, f"train.{key}")

    source = _parse_measure(doc["source"], "source")
    target = _parse_measure(doc["target"], "target")

    dim_source = _spec_dim(source)
    dim_target = _spec_dim(target)
    if dim_source is not None and dim_target is not None and dim_source != dim_target:
        raise ConfigError(f"source dimension {dim_source} does not match "
                          f"target dimension {dim_target}")
    known = dim_source if dim_source is not None else dim_target
    if "dim" not in kwargs:
        if known is None:
            raise ConfigError("train.dim is required when no measure declares "
                              "a dimension")
        kwargs["dim"] = known
    elif known is not None and kwargs["dim"] != known:
        raise ConfigError(f"train.dim = {kwargs['dim']} does not match the "
                          f"measures' dimension {known}")

    try:
        train_config = TrainConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(train=train_config, source=source, target=target)


def load_run_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_run_config(text, origin=str(path))
