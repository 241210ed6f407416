"""Discrete saddle-point losses and their exact parameter gradients.

One direction of training couples a vector field net ``field`` (source to
target) with a space-time potential net ``potential``. With interior samples
(z_k, t_k) pushed to x_k = z_k + t_k field(z_k) and boundary samples w from
the two marginals, the potential objective is

    value = -(1/N) sum_k [ dPhi/dt + H(grad_x Phi) ](x_k, t_k)
            + (1/M) sum_k [ Phi(target_k, 1) - Phi(source_k, 0) ]

maximized over the potential and minimized over the field.

Gradient route: for r = dPhi/dt + H(grad_x Phi), the chain rule gives
grad_params r = grad_params (u . grad_{(x,t)} Phi) with the direction
u = (grad H(grad_x Phi), 1) held fixed at its current value, and likewise for
grad_x r. Both are therefore exact single :func:`wgeo.mlp.mlp_grad_of_jvp`
evaluations per batch, no nested tapes. The field only enters through x_k, so
its cotangent per sample is -(t_k / N) grad_x r, backpropagated through the
field net.

Per-sample contributions are independent; with ``workers > 1`` batches are
split into fixed slices evaluated on a thread pool and reduced in slice
order, so results are reproducible for a given worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cost import CostModel, grad_l_inverse, hamiltonian, lagrangian
from .mlp import (
    MlpParams,
    mlp_forward,
    mlp_forward_tape,
    mlp_grad_of_jvp,
    mlp_reverse,
    params_add,
    zeros_like_params,
)
from .optim import TrainingError

__all__ = [
    "InteriorBatch",
    "BoundaryBatch",
    "LossReport",
    "potential_objective",
    "field_grad_from_potential",
    "cycle_penalty",
    "transport_cost_estimate",
    "hj_residuals",
]


@dataclass
class InteriorBatch:
    """Source samples paired with uniform times; pushed points are derived."""

    points: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        if self.points.ndim != 2 or self.points.shape[0] < 1:
            raise ValueError("interior batch must be a nonempty (n, d) array")
        if self.times.shape[0] != self.points.shape[0]:
            raise ValueError("one time per interior sample required")
        if self.times.min() < 0.0 or self.times.max() > 1.0:
            raise ValueError("interior times must lie in [0, 1]")


@dataclass
class BoundaryBatch:
    """Fresh marginal samples: rows of `source` at t=0, rows of `target` at t=1."""

    source: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        self.source = np.asarray(self.source, dtype=float)
        self.target = np.asarray(self.target, dtype=float)
        if self.source.ndim != 2 or self.source.shape[0] < 1:
            raise ValueError("boundary batch must be a nonempty (m, d) array")
        if self.source.shape != self.target.shape:
            raise ValueError("boundary batches must have equal shapes")


@dataclass
class LossReport:
    """Per-iteration scalars; names match the history CSV columns."""

    l_ab: float
    l_ba: float
    k_reg: float
    w_ab: float
    w_ba: float
    hjb_residual_mean: float


def _chunk_slices(n: int, workers: int):
    if workers <= 1 or n < 2:
        return [slice(0, n)]
    bounds = np.linspace(0, n, min(workers, n) + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _map_slices(fn, slices, workers: int):
    if len(slices) == 1:
        return [fn(slices[0])]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, slices))  # order preserved: deterministic reduction


def _check_nets(potential: MlpParams, field: MlpParams):
    if field.in_dim != field.out_dim:
        raise ValueError("field net must map d -> d")
    if potential.out_dim != 1 or potential.in_dim != field.in_dim + 1:
        raise ValueError("potential net must map (d + 1) -> 1 for this field")


def _pushed_points(field: MlpParams, interior: InteriorBatch, pushed):
    if pushed is None:
        return interior.points + interior.times[:, None] * mlp_forward(field, interior.points)
    pushed = np.asarray(pushed, dtype=float)
    if pushed.shape != interior.points.shape:
        raise ValueError("precomputed pushed points have the wrong shape")
    return pushed


def potential_objective(potential: MlpParams, field: MlpParams,
                        interior: InteriorBatch, boundary: BoundaryBatch,
                        cost: CostModel, pushed=None, workers: int = 1
                        ) -> tuple[float, MlpParams]:
    """Objective value and its exact gradient in the potential's parameters.

    The field is frozen: ``pushed`` may carry precomputed x_k = z_k + t_k F(z_k)
    to avoid re-evaluating the field across repeated calls on one batch.
    """
    _check_nets(potential, field)
    d = field.in_dim
    xs = _pushed_points(field, interior, pushed)
    n = xs.shape[0]
    inputs = np.hstack([xs, interior.times[:, None]])

    def interior_chunk(sl):
        chunk = inputs[sl]
        _, tape = mlp_forward_tape(potential, chunk)
        grad_in, _ = mlp_reverse(potential, tape, np.ones((chunk.shape[0], 1)),
                                 with_param_grads=False)
        space_grad = grad_in[:, :d]
        resid = grad_in[:, d] + hamiltonian(cost, space_grad)
        direction = np.hstack([grad_l_inverse(cost, space_grad),
                               np.ones((chunk.shape[0], 1))])
        _, _, gp = mlp_grad_of_jvp(potential, chunk, direction,
                                   weights=np.full(chunk.shape[0], -1.0 / n))
        return float(resid.sum()), gp

    parts = _map_slices(interior_chunk, _chunk_slices(n, workers), workers)
    resid_total = sum(p[0] for p in parts)
    grads = parts[0][1]
    for _, gp in parts[1:]:
        grads = params_add(grads, gp)

    m = boundary.source.shape[0]
    at_one = np.hstack([boundary.target, np.ones((m, 1))])
    at_zero = np.hstack([boundary.source, np.zeros((m, 1))])
    val_one, tape_one = mlp_forward_tape(potential, at_one)
    val_zero, tape_zero = mlp_forward_tape(potential, at_zero)
    _, g_one = mlp_reverse(potential, tape_one, np.full((m, 1), 1.0 / m))
    _, g_zero = mlp_reverse(potential, tape_zero, np.full((m, 1), -1.0 / m))
    grads = params_add(params_add(grads, g_one), g_zero)

    value = -resid_total / n + float(val_one.mean() - val_zero.mean())
    if not np.isfinite(value):
        raise TrainingError("potential objective became non-finite")
    return value, grads


def field_grad_from_potential(potential: MlpParams, field: MlpParams,
                              interior: InteriorBatch, cost: CostModel,
                              pushed=None, workers: int = 1) -> MlpParams:
    """Gradient of the potential objective in the field's parameters.

    Only the interior term depends on the field; sample k contributes the
    cotangent -(t_k / N) grad_x [dPhi/dt + H(grad Phi)] at its pushed point.
    """
    _check_nets(potential, field)
    d = field.in_dim
    xs = _pushed_points(field, interior, pushed)
    n = xs.shape[0]
    inputs = np.hstack([xs, interior.times[:, None]])

    def chunk_grad(sl):
        chunk = inputs[sl]
        _, tape = mlp_forward_tape(potential, chunk)
        grad_in, _ = mlp_reverse(potential, tape, np.ones((chunk.shape[0], 1)),
                                 with_param_grads=False)
        space_grad = grad_in[:, :d]
        direction = np.hstack([grad_l_inverse(cost, space_grad),
                               np.ones((chunk.shape[0], 1))])
        _, ds_din, _ = mlp_grad_of_jvp(potential, chunk, direction,
                                       weights=-interior.times[sl] / n,
                                       with_param_grads=False)
        cot = ds_din[:, :d]
        _, tape_field = mlp_forward_tape(field, interior.points[sl])
        _, gf = mlp_reverse(field, tape_field, cot)
        return gf

    parts = _map_slices(chunk_grad, _chunk_slices(n, workers), workers)
    grads = parts[0]
    for gf in parts[1:]:
        grads = params_add(grads, gf)
    if not grads.all_finite():
        raise TrainingError("field gradient became non-finite")
    return grads


def cycle_penalty(field_ab: MlpParams, field_ba: MlpParams, samples_a,
                  samples_b, weight: float
                  ) -> tuple[float, MlpParams, MlpParams]:
    """Bidirectional consistency penalty and its gradients for both fields.

    Penalizes |G(x + F(x)) + F(x)|^2 over source samples and the mirrored
    expression over target samples, each averaged and scaled by ``weight``.
    """
    samples_a = np.asarray(samples_a, dtype=float)
    samples_b = np.asarray(samples_b, dtype=float)
    if samples_a.ndim != 2 or samples_a.shape[0] < 1 or samples_a.shape != samples_b.shape:
        raise ValueError("cycle batches must be nonempty arrays of equal shape")
    if weight == 0.0:
        return 0.0, zeros_like_params(field_ab), zeros_like_params(field_ba)
    k = samples_a.shape[0]
    scale = 2.0 * weight / k

    def one_side(outer, inner, points):
        # residual r = outer(points + inner(points)) + inner(points)
        inner_val, inner_tape = mlp_forward_tape(inner, points)
        moved = points + inner_val
        outer_val, outer_tape = mlp_forward_tape(outer, moved)
        resid = outer_val + inner_val
        value = weight / k * float(np.sum(resid * resid))
        back_in, grad_outer = mlp_reverse(outer, outer_tape, scale * resid)
        _, grad_inner = mlp_reverse(inner, inner_tape, scale * resid + back_in)
        return value, grad_outer, grad_inner

    v1, grad_ba_1, grad_ab_1 = one_side(field_ba, field_ab, samples_a)
    v2, grad_ab_2, grad_ba_2 = one_side(field_ab, field_ba, samples_b)
    value = v1 + v2
    if not np.isfinite(value):
        raise TrainingError("cycle penalty became non-finite")
    return value, params_add(grad_ab_1, grad_ab_2), params_add(grad_ba_1, grad_ba_2)


def transport_cost_estimate(field: MlpParams, samples, cost: CostModel) -> float:
    """Monte-Carlo transport cost: mean of L(field(x)) over the samples."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 1:
        raise ValueError("need a nonempty (n, d) sample array")
    return float(np.mean(lagrangian(cost, mlp_forward(field, samples))))


def hj_residuals(potential: MlpParams, points, times, cost: CostModel) -> np.ndarray:
    """Raw Hamilton-Jacobi residuals dPhi/dt + H(grad_x Phi) at (points, times)."""
    points = np.asarray(points, dtype=float)
    d = points.shape[1]
    inputs = np.hstack([points, np.asarray(times, dtype=float).reshape(-1, 1)])
    _, tape = mlp_forward_tape(potential, inputs)
    grad_in, _ = mlp_reverse(potential, tape, np.ones((points.shape[0], 1)),
                             with_param_grads=False)
    return grad_in[:, d] + hamiltonian(cost, grad_in[:, :d])
