"""Power-law velocity costs and their convex conjugates.

The family is L(v) = beta * |v|^alpha / alpha with alpha > 1, beta > 0, which
covers both the 1/p-normalized powers (beta = 1) and un-normalized |v|^p
(beta = alpha). Its Legendre conjugate has the closed form
H(m) = beta^(1-q) * |m|^q / q with q = alpha/(alpha-1), and the gradient
inverse of L equals the gradient of H. Other strictly convex radial costs can
be added by implementing the same three functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["CostModel", "lagrangian", "grad_l", "hamiltonian", "grad_l_inverse"]


@dataclass(frozen=True)
class CostModel:
    alpha: float
    beta: float = 1.0

    def __post_init__(self):
        if not self.alpha > 1.0:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")
        if not self.beta > 0.0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    @property
    def q(self) -> float:
        """Conjugate exponent alpha/(alpha-1)."""
        return self.alpha / (self.alpha - 1.0)


def _norms(v):
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        return v, float(np.linalg.norm(v))
    return v, np.linalg.norm(v, axis=-1)


def lagrangian(cost: CostModel, v):
    """beta * |v|^alpha / alpha, elementwise over rows of a batch."""
    _, r = _norms(v)
    return cost.beta * r ** cost.alpha / cost.alpha


def grad_l(cost: CostModel, v):
    """beta * |v|^(alpha-2) * v, with the alpha < 2 singularity removed at v = 0."""
    v, r = _norms(v)
    r = np.asarray(r)
    safe = np.where(r > 0.0, r, 1.0)
    scale = np.where(r > 0.0, cost.beta * safe ** (cost.alpha - 2.0), 0.0)
    return scale[..., None] * v if v.ndim > 1 else float(scale) * v


def hamiltonian(cost: CostModel, m):
    """Legendre conjugate beta^(1-q) * |m|^q / q; H(0) = 0."""
    q = cost.q
    _, r = _norms(m)
    return cost.beta ** (1.0 - q) * r ** q / q


def grad_l_inverse(cost: CostModel, m):
    """Inverse of grad L, equal to grad H: beta^(1-q) * |m|^(q-2) * m.

    Returns exactly 0 at m = 0 (the analytic limit for q > 1).
    """
    q = cost.q
    m, r = _norms(m)
    r = np.asarray(r)
    safe = np.where(r > 0.0, r, 1.0)
    scale = np.where(r > 0.0, cost.beta ** (1.0 - q) * safe ** (q - 2.0), 0.0)
    return scale[..., None] * m if m.ndim > 1 else float(scale) * m
