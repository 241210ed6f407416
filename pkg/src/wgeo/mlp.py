"""Dense tanh networks with manual reverse-mode and mixed second-order differentiation.

All math is float64. Inputs may be a single vector ``(in_dim,)`` or a batch
``(n, in_dim)``; outputs follow the input's rank. Parameter gradients are
always accumulated (summed, optionally weighted) over the batch.

The one non-obvious operation here is :func:`mlp_grad_of_jvp`. For a scalar
network ``f`` it evaluates the directional derivative ``s = u . grad f`` in a
single tangent-augmented forward pass and then differentiates ``s`` itself,
with the tangent ``u`` held as a frozen coefficient. When the caller picks
``u`` as the gradient of an outer function of ``grad f``, the chain rule makes
the returned gradients of ``s`` exactly the gradients of that outer
expression, so no second network or nested tape is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MlpParams",
    "Tape",
    "ShapeError",
    "StaleTapeError",
    "init_mlp",
    "zeros_like_params",
    "params_add",
    "mlp_forward",
    "mlp_forward_tape",
    "mlp_reverse",
    "mlp_jvp",
    "mlp_jvp_tape",
    "mlp_grad_of_jvp",
]


class ShapeError(ValueError):
    """An input or parameter array has the wrong shape."""


class StaleTapeError(RuntimeError):
    """A tape was replayed against parameters it was not recorded with."""


@dataclass
class MlpParams:
    """Weights/biases of a fully connected net: tanh hidden layers, affine output.

    ``weights[k]`` has shape ``(out_k, in_k)`` and ``biases[k]`` shape
    ``(out_k,)``; adjacent layers must chain. A net with no hidden layers is a
    plain affine map.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("need one (weight, bias) pair per layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ShapeError(f"layer {k}: weight {w.shape} / bias {b.shape} mismatch")
            if k > 0 and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ShapeError(
                    f"layer {k} expects {w.shape[1]} inputs, "
                    f"layer {k - 1} produces {self.weights[k - 1].shape[0]}"
                )

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def n_hidden(self) -> int:
        return len(self.weights) - 1

    @property
    def hidden_width(self) -> int:
        return self.weights[0].shape[0] if self.n_hidden else 0

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def all_finite(self) -> bool:
        return all(np.isfinite(w).all() and np.isfinite(b).all()
                   for w, b in zip(self.weights, self.biases))


def init_mlp(in_dim: int, out_dim: int, n_hidden: int, width: int,
             rng: np.random.Generator) -> MlpParams:
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    sizes = [in_dim] + [width] * n_hidden + [out_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def zeros_like_params(params: MlpParams) -> MlpParams:
    return MlpParams([np.zeros_like(w) for w in params.weights],
                     [np.zeros_like(b) for b in params.biases])


def params_add(a: MlpParams, b: MlpParams) -> MlpParams:
    """Entrywise sum of two parameter (or gradient) containers."""
    if len(a.weights) != len(b.weights):
        raise ShapeError("parameter layer counts differ")
    return MlpParams([wa + wb for wa, wb in zip(a.weights, b.weights)],
                     [ba + bb for ba, bb in zip(a.biases, b.biases)])


@dataclass
class Tape:
    """Per-layer caches from a forward pass, consumed by the reverse passes.

    ``inputs[k]`` is the batch fed into layer k (``inputs[0]`` is the network
    input; for k > 0 it is a tanh output, which is all the reverse rules need
    since tanh' = 1 - z^2 and tanh'' = -2 z (1 - z^2)). The tangent caches
    ``input_dots``/``pre_dots`` are present only when recorded by a JVP run.
    """

    params_id: int
    inputs: list[np.ndarray]
    squeeze: bool
    input_dots: list[np.ndarray] = field(default_factory=list)
    pre_dots: list[np.ndarray] = field(default_factory=list)

    @property
    def has_tangents(self) -> bool:
        return bool(self.input_dots)


def _as_batch(x, dim: int, what: str):
    x = np.asarray(x, dtype=float)
    squeezed = x.ndim == 1
    if squeezed:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ShapeError(f"{what} must have {dim} columns, got shape {x.shape}")
    return x, squeezed


def _check_tape(params: MlpParams, tape: Tape):
    if tape is None:
        raise StaleTapeError("missing tape: run a taped forward pass first")
    if tape.params_id != id(params):
        raise StaleTapeError("stale tape: it was recorded with different parameters")


def mlp_forward_tape(params: MlpParams, x) -> tuple[np.ndarray, Tape]:
    z, squeeze = _as_batch(x, params.in_dim, "input")
    inputs = [z]
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        z = np.tanh(z @ w.T + b)
        inputs.append(z)
    y = z @ params.weights[-1].T + params.biases[-1]
    tape = Tape(params_id=id(params), inputs=inputs, squeeze=squeeze)
    return (y[0] if squeeze else y), tape


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    y, _ = mlp_forward_tape(params, x)
    return y


def mlp_reverse(params: MlpParams, tape: Tape, cotangent,
                with_param_grads: bool = True
                ) -> tuple[np.ndarray, MlpParams | None]:
    """Exact reverse-mode gradients of <cotangent, output>.

    Returns per-row input gradients and batch-summed parameter gradients
    (``None`` when ``with_param_grads`` is off, which skips the accumulation).
    """
    _check_tape(params, tape)
    cot, _ = _as_batch(cotangent, params.out_dim, "cotangent")
    if cot.shape[0] != tape.inputs[0].shape[0]:
        raise ShapeError("cotangent batch size does not match the taped forward pass")
    grad_w = [None] * len(params.weights)
    grad_b = [None] * len(params.biases)
    g = cot
    for k in range(len(params.weights) - 1, -1, -1):
        if with_param_grads:
            grad_w[k] = g.T @ tape.inputs[k]
            grad_b[k] = g.sum(axis=0)
        g = g @ params.weights[k]
        if k > 0:
            g = g * (1.0 - tape.inputs[k] ** 2)
    input_grad = g[0] if tape.squeeze else g
    return input_grad, (MlpParams(grad_w, grad_b) if with_param_grads else None)


def mlp_jvp_tape(params: MlpParams, x, tangent) -> tuple[np.ndarray, np.ndarray, Tape]:
    z, squeeze = _as_batch(x, params.in_dim, "input")
    zd, tsq = _as_batch(tangent, params.in_dim, "tangent")
    if zd.shape[0] == 1 and z.shape[0] > 1:
        zd = np.broadcast_to(zd, z.shape)
    if zd.shape != z.shape:
        raise ShapeError("tangent shape does not match input shape")
    inputs, input_dots, pre_dots = [z], [zd], []
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        a = z @ w.T + b
        ad = zd @ w.T
        z = np.tanh(a)
        zd = (1.0 - z ** 2) * ad
        inputs.append(z)
        input_dots.append(zd)
        pre_dots.append(ad)
    y = z @ params.weights[-1].T + params.biases[-1]
    yd = zd @ params.weights[-1].T
    tape = Tape(params_id=id(params), inputs=inputs, squeeze=squeeze,
                input_dots=input_dots, pre_dots=pre_dots)
    if squeeze:
        y, yd = y[0], yd[0]
    return y, yd, tape


def mlp_jvp(params: MlpParams, x, tangent) -> tuple[np.ndarray, np.ndarray]:
    y, yd, _ = mlp_jvp_tape(params, x, tangent)
    return y, yd


def mlp_grad_of_jvp(params: MlpParams, x, tangent, weights=None,
                    with_param_grads: bool = True
                    ) -> tuple[np.ndarray, np.ndarray, MlpParams | None]:
    """Directional derivative of a scalar net and the gradients of that scalar.

    For ``s_k = u_k . grad f(x_k)`` (the JVP output) this runs reverse mode
    over the tangent-augmented forward pass, treating the tangent as a frozen
    coefficient, and returns ``(s, ds/dx, ds/dparams)``.

    With a batch, ``weights`` (default all ones) scales each sample's
    contribution: row k of ``ds/dx`` is ``weights[k] * d s_k/dx_k`` and the
    parameter gradients are ``sum_k weights[k] * d s_k/dparams``. Pass
    ``with_param_grads=False`` to skip the parameter accumulation when only
    input gradients are needed.
    """
    if params.out_dim != 1:
        raise ShapeError("mlp_grad_of_jvp requires a scalar-output network")
    _, yd, tape = mlp_jvp_tape(params, x, tangent)
    n = tape.inputs[0].shape[0]
    if weights is None:
        w_vec = np.ones(n)
    else:
        w_vec = np.asarray(weights, dtype=float).reshape(-1)
        if w_vec.shape[0] != n:
            raise ShapeError("weights length does not match batch size")

    grad_w = [None] * len(params.weights) if with_param_grads else None
    grad_b = [None] * len(params.biases) if with_param_grads else None
    # Adjoint state: hy = ds/dz_k, hyd = ds/dzdot_k. Seed at the scalar output:
    # s depends on the output tangent only, so hy = 0 and hyd carries the weights.
    hy = np.zeros((n, 1))
    hyd = w_vec[:, None].copy()
    last = len(params.weights) - 1
    for k in range(last, -1, -1):
        if k == last:
            ha, had = hy, hyd  # affine output layer: tanh' = 1, tanh'' = 0
        else:
            z = tape.inputs[k + 1]
            t1 = 1.0 - z ** 2
            ha = hy * t1 + hyd * (-2.0 * z * t1) * tape.pre_dots[k]
            had = hyd * t1
        if with_param_grads:
            grad_w[k] = ha.T @ tape.inputs[k] + had.T @ tape.input_dots[k]
            grad_b[k] = ha.sum(axis=0)
        hy = ha @ params.weights[k]
        hyd = had @ params.weights[k]
    # hyd would flow into the tangent, which is frozen; only hy reaches x.
    if tape.squeeze:
        input_grad = hy[0]
        s = float(np.asarray(yd).reshape(-1)[0])
    else:
        input_grad = hy
        s = yd[:, 0]
    param_grads = MlpParams(grad_w, grad_b) if with_param_grads else None
    return s, input_grad, param_grads
