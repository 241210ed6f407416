"""Trained model state and geodesic sampling.

A trained state holds two vector-field nets (forward: source to target,
backward: target to source), their two dual potential nets, the affine
preconditioner the fields were trained under, and the cost. Interpolating
measures are produced by pushing source samples along straight lines
x + t * field(x); the affine preconditioner P(x) = sigma x + mu is undone at
evaluation time by composition, which is exact for the quadratic cost
(alpha = 2) and exposed, but without that guarantee, for other costs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import CostModel
from .mlp import MlpParams, ShapeError, mlp_forward

__all__ = [
    "Preconditioner",
    "GeodesicSnapshot",
    "GeoState",
    "velocity",
    "push_samples",
    "compose_preconditioner",
    "compose_preconditioner_inverse",
    "potential_eval",
]


@dataclass
class Preconditioner:
    """Affine map P(x) = sigma * x + mu with sigma > 0."""

    sigma: float
    mu: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float).reshape(-1)
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @classmethod
    def identity(cls, dim: int) -> "Preconditioner":
        return cls(sigma=1.0, mu=np.zeros(dim))

    @property
    def is_identity(self) -> bool:
        return self.sigma == 1.0 and not self.mu.any()

    def apply(self, x):
        return self.sigma * np.asarray(x, dtype=float) + self.mu

    def invert(self, y):
        return (np.asarray(y, dtype=float) - self.mu) / self.sigma


@dataclass
class GeodesicSnapshot:
    """Source samples pushed to interpolation time t."""

    t: float
    points: np.ndarray


def velocity(net: MlpParams, x) -> np.ndarray:
    """Evaluate a d -> d vector-field network."""
    if net.in_dim != net.out_dim:
        raise ShapeError(f"vector field must map d -> d, net is "
                         f"{net.in_dim} -> {net.out_dim}")
    return mlp_forward(net, x)


def _field_callable(field):
    if isinstance(field, MlpParams):
        return lambda x: velocity(field, x)
    if callable(field):
        return field
    raise TypeError("field must be MlpParams or a callable")


def push_samples(field, cloud, t: float) -> GeodesicSnapshot:
    """Push each row x to x + t * field(x); count and order are preserved."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    cloud = np.asarray(cloud, dtype=float)
    if cloud.ndim != 2 or cloud.shape[0] < 1:
        raise ValueError(f"point cloud must be (n, d), got shape {cloud.shape}")
    moved = cloud + t * _field_callable(field)(cloud)
    return GeodesicSnapshot(t=float(t), points=moved)


def compose_preconditioner(field_net: MlpParams, precond: Preconditioner):
    """Fold the preconditioner into a source-side field.

    The returned callable is F*(x) = F(sigma x + mu) + (sigma - 1) x + mu, so
    that Id + F* equals (Id + F) composed with P. Exactness as a transport
    field is guaranteed for the quadratic cost.
    """
    if precond.is_identity:
        return lambda x: velocity(field_net, x)

    def composed(x):
        x = np.asarray(x, dtype=float)
        px = precond.apply(x)
        return velocity(field_net, px) + (px - x)

    return composed


def compose_preconditioner_inverse(field_net: MlpParams, precond: Preconditioner):
    """Fold the inverse preconditioner into a target-side field.

    The backward net was trained to push the target onto the preconditioned
    source, so the map back to the original source is P^-1 (y + G(y)), giving
    the field G*(y) = P^-1(y + G(y)) - y.
    """
    if precond.is_identity:
        return lambda y: velocity(field_net, y)

    def composed(y):
        y = np.asarray(y, dtype=float)
        return precond.invert(y + velocity(field_net, y)) - y

    return composed


def potential_eval(net: MlpParams, x, t) -> np.ndarray:
    """Evaluate a space-time potential net on (x, t); t is one extra input column."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    tcol = np.broadcast_to(np.asarray(t, dtype=float).reshape(-1, 1), (x.shape[0], 1))
    out = mlp_forward(net, np.hstack([x, tcol]))
    value = out[:, 0]
    return float(value[0]) if single else value


@dataclass
class GeoState:
    """Everything a trained run produces: nets, preconditioner, cost, dimension."""

    field_ab: MlpParams
    field_ba: MlpParams
    potential_ab: MlpParams
    potential_ba: MlpParams
    precond: Preconditioner
    cost: CostModel
    dim: int

    def __post_init__(self):
        d = self.dim
        for name, net, in_dim, out_dim in [
                ("field_ab", self.field_ab, d, d),
                ("field_ba", self.field_ba, d, d),
                ("potential_ab", self.potential_ab, d + 1, 1),
                ("potential_ba", self.potential_ba, d + 1, 1)]:
            if net.in_dim != in_dim or net.out_dim != out_dim:
                raise ShapeError(f"{name} must map {in_dim} -> {out_dim}, "
                                 f"got {net.in_dim} -> {net.out_dim}")
        if self.precond.mu.shape[0] != d:
            raise ShapeError("preconditioner dimension does not match the state")

    def forward_field(self):
        """Source-to-target field over the original (unpreconditioned) source."""
        return compose_preconditioner(self.field_ab, self.precond)

    def backward_field(self):
        """Target-to-source field landing on the original source."""
        return compose_preconditioner_inverse(self.field_ba, self.precond)

    def field_for(self, direction: str):
        if direction == "ab":
            return self.forward_field()
        if direction == "ba":
            return self.backward_field()
        raise ValueError(f"direction must be 'ab' or 'ba', got {direction!r}")
