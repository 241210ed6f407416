"""Checkpoint files: canonical JSON with byte-identical round trips.

The writer sorts keys and prints every float with 17 significant digits, which
is enough for exact float64 recovery, so save -> load -> save reproduces the
file byte for byte. Networks are stored as a layer-shape list plus flat
row-major weight/bias arrays.
"""

from __future__ import annotations

import json

import numpy as np

from .cost import CostModel
from .geodesic import GeoState, Preconditioner
from .mlp import MlpParams, ShapeError
from .measures import atomic_write_bytes

__all__ = ["CheckpointError", "CHECKPOINT_VERSION", "canonical_json",
           "save_checkpoint", "load_checkpoint"]

CHECKPOINT_VERSION = "wgeo-1"

_NET_KEYS = ("field_ab", "field_ba", "potential_ab", "potential_ba")
_META_KEYS = ("iterations", "w_ab", "w_ba", "seed")


class CheckpointError(ValueError):
    """A checkpoint file is malformed or from an unrecognized version."""


def canonical_json(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return repr(int(obj))
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if not np.isfinite(value):
            raise CheckpointError("non-finite value cannot be serialized")
        return format(value, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return canonical_json(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(canonical_json(v) for v in obj) + "]"
    if isinstance(obj, dict):
        items = sorted(obj.items())
        return "{" + ",".join(json.dumps(str(k)) + ":" + canonical_json(v)
                              for k, v in items) + "}"
    raise CheckpointError(f"cannot serialize object of type {type(obj).__name__}")


def _encode_net(net: MlpParams) -> dict:
    return {
        "layers": [[int(w.shape[0]), int(w.shape[1])] for w in net.weights],
        "weights": np.concatenate([w.ravel() for w in net.weights]),
        "biases": np.concatenate([b.ravel() for b in net.biases]),
    }


def _decode_net(doc, name) -> MlpParams:
    if not isinstance(doc, dict) or set(doc) != {"layers", "weights", "biases"}:
        raise CheckpointError(f"network {name!r} must have layers/weights/biases")
    shapes = doc["layers"]
    try:
        flat_w = np.asarray(doc["weights"], dtype=float)
        flat_b = np.asarray(doc["biases"], dtype=float)
        shapes = [(int(o), int(i)) for o, i in shapes]
    except (TypeError, ValueError):
        raise CheckpointError(f"network {name!r} has malformed arrays") from None
    if flat_w.ndim != 1 or flat_b.ndim != 1:
        raise CheckpointError(f"network {name!r} arrays must be flat")
    need_w = sum(o * i for o, i in shapes)
    need_b = sum(o for o, _ in shapes)
    if flat_w.size != need_w or flat_b.size != need_b:
        raise CheckpointError(
            f"network {name!r}: array lengths {flat_w.size}/{flat_b.size} do not "
            f"match declared shapes ({need_w}/{need_b})")
    if not (np.isfinite(flat_w).all() and np.isfinite(flat_b).all()):
        raise CheckpointError(f"network {name!r} contains non-finite entries")
    weights, biases = [], []
    pos_w = pos_b = 0
    for out_dim, in_dim in shapes:
        weights.append(flat_w[pos_w:pos_w + out_dim * in_dim].reshape(out_dim, in_dim))
        biases.append(flat_b[pos_b:pos_b + out_dim])
        pos_w += out_dim * in_dim
        pos_b += out_dim
    try:
        return MlpParams(weights, biases)
    except ShapeError as exc:
        raise CheckpointError(f"network {name!r}: {exc}") from None


def save_checkpoint(path, state: GeoState, meta: dict) -> None:
    missing = [k for k in _META_KEYS if k not in meta]
    if missing:
        raise CheckpointError(f"metadata is missing keys {missing}")
    doc = {
        "version": CHECKPOINT_VERSION,
        "dim": int(state.dim),
        "cost": {"alpha": float(state.cost.alpha), "beta": float(state.cost.beta)},
        "preconditioner": {"sigma": float(state.precond.sigma),
                           "mu": state.precond.mu},
        "networks": {name: _encode_net(getattr(state, name)) for name in _NET_KEYS},
        "meta": dict(meta),
    }
    atomic_write_bytes(path, canonical_json(doc).encode("ascii"))


def load_checkpoint(path) -> tuple[GeoState, dict]:
    try:
        with open(path, "rb") as handle:
            doc = json.loads(handle.read().decode("ascii"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise CheckpointError(f"{path}: top level must be an object")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unrecognized version {doc.get('version')!r} "
            f"(expected {CHECKPOINT_VERSION!r})")
    required = {"version", "dim", "cost", "preconditioner", "networks", "meta"}
    if set(doc) != required:
        raise CheckpointError(f"{path}: expected exactly keys {sorted(required)}")
    try:
        dim = int(doc["dim"])
        cost = CostModel(float(doc["cost"]["alpha"]), float(doc["cost"]["beta"]))
        precond = Preconditioner(sigma=float(doc["preconditioner"]["sigma"]),
                                 mu=np.asarray(doc["preconditioner"]["mu"],
                                               dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    nets = {}
    for name in _NET_KEYS:
        if name not in doc["networks"]:
            raise CheckpointError(f"{path}: missing network {name!r}")
        nets[name] = _decode_net(doc["networks"][name], name)
    try:
        state = GeoState(precond=precond, cost=cost, dim=dim, **nets)
    except (ShapeError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    meta = doc["meta"]
    if not isinstance(meta, dict):
        raise CheckpointError(f"{path}: meta must be an object")
    return state, meta
