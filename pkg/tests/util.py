"""Shared test oracles: scalar-loop network evaluation and finite differences.

These stay deliberately independent of the library's vectorized code paths:
the loop oracle uses per-unit Python arithmetic, and the differintiation
oracles only ever call the function under test as a black box.
"""

import math

import numpy as np

from wgeo.mlp import MlpParams


def scalar_loop_forward(params: MlpParams, x):
    """Evaluate the layer recurrence one unit at a time (no matmuls)."""
    z = [float(v) for v in np.asarray(x, dtype=float)]
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        out = []
        for i in range(w.shape[0]):
            acc = float(b[i])
            for j in range(w.shape[1]):
                acc += float(w[i, j]) * z[j]
            out.append(acc)
        z = [math.tanh(a) for a in out] if k < last else out
    return np.array(z)


def param_entries(params: MlpParams):
    """Yield (kind, layer, index) addresses of every parameter entry."""
    for k, w in enumerate(params.weights):
        for idx in np.ndindex(w.shape):
            yield "weights", k, idx
    for k, b in enumerate(params.biases):
        for idx in np.ndindex(b.shape):
            yield "biases", k, idx


def perturb(params: MlpParams, kind, layer, idx, h) -> MlpParams:
    p = params.copy()
    getattr(p, kind)[layer][idx] += h
    return p


def fd_param_grad(fn, params: MlpParams, h=1e-4) -> MlpParams:
    """Central finite differences of scalar fn(params) over every entry."""
    grads = MlpParams([np.zeros_like(w) for w in params.weights],
                      [np.zeros_like(b) for b in params.biases])
    for kind, k, idx in param_entries(params):
        hi = fn(perturb(params, kind, k, idx, +h))
        lo = fn(perturb(params, kind, k, idx, -h))
        getattr(grads, kind)[k][idx] = (hi - lo) / (2.0 * h)
    return grads


def fd_input_grad(fn, x, h=1e-4):
    """Central finite differences of scalar fn(x) over every input entry."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += h
        hi = fn(xp)
        xp[idx] -= 2.0 * h
        lo = fn(xp)
        g[idx] = (hi - lo) / (2.0 * h)
    return g


def assert_close_rel(actual, expected, rtol, floor=1e-6):
    """Relative comparison, skipping reference entries below the floor."""
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    mask = np.abs(expected) > floor
    if not mask.any():
        assert np.allclose(actual, expected, atol=10 * floor)
        return
    rel = np.abs(actual[mask] - expected[mask]) / np.abs(expected[mask])
    assert rel.max() <= rtol, f"max relative error {rel.max():.3e} > {rtol:.1e}"


def assert_grads_close(actual: MlpParams, expected: MlpParams, rtol, floor=1e-6):
    for kind in ("weights", "biases"):
        for a, e in zip(getattr(actual, kind), getattr(expected, kind)):
            assert_close_rel(a, e, rtol, floor)
