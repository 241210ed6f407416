"""Exact small-scale transport references.

Closed-form Gaussian transport (Bures), exact assignment between equal-size
point clouds, and straight-line displacement interpolation. These are the
ground truths that trained models are validated against, so they share no
code with the training stack: the eigensolver is a self-contained Jacobi
sweep and the assignment solver is an O(n^3) augmenting-path method with
potentials.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import CostModel, lagrangian

__all__ = [
    "GaussianOtSolution",
    "Assignment",
    "jacobi_eigh",
    "gaussian_w2",
    "exact_discrete_ot",
    "displacement_interpolate",
]

_MAX_CLOUD = 4096  # n x n cost matrix memory guard
_MAX_DIM = 16


@dataclass
class GaussianOtSolution:
    """Closed-form transport between two Gaussians: T(x) = A x + b."""

    squared_w2: float
    map_matrix: np.ndarray
    map_offset: np.ndarray

    @property
    def dynamic_cost(self) -> float:
        """Transport cost under L(v) = |v|^2 / 2, i.e. half the squared distance."""
        return self.squared_w2 / 2.0

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ self.map_matrix.T + self.map_offset


@dataclass
class Assignment:
    """Optimal permutation between equal-size clouds and its mean cost."""

    permutation: np.ndarray
    total_cost: float


def _check_symmetric(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    if a.shape[0] > _MAX_DIM:
        raise ValueError(f"{name} exceeds the supported dimension {_MAX_DIM}")
    scale = max(1.0, float(np.abs(a).max()))
    if np.abs(a - a.T).max() > 1e-10 * scale:
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


def jacobi_eigh(a, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigendecomposition of a small symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm drops below ``tol`` times the
    matrix norm (or ``max_sweeps``). Returns eigenvalues ascending and the
    matching orthonormal eigenvector columns.
    """
    a = _check_symmetric(a, "matrix").copy()
    n = a.shape[0]
    v = np.eye(n)
    norm = np.linalg.norm(a) or 1.0
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(a * a) - np.sum(np.diag(a) ** 2))
        if off <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) if theta != 0 else 1.0
                t = t / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
    eigvals = np.diag(a).copy()
    order = np.argsort(eigvals)
    return eigvals[order], v[:, order]


def _sym_sqrt_and_inv(a, name):
    """(a^1/2, a^-1/2) for symmetric positive definite a."""
    eigvals, vecs = jacobi_eigh(a)
    if eigvals.min() <= 0.0:
        raise ValueError(f"{name} is not positive definite (min eigenvalue "
                         f"{eigvals.min():.3e})")
    root = vecs @ np.diag(np.sqrt(eigvals)) @ vecs.T
    inv_root = vecs @ np.diag(1.0 / np.sqrt(eigvals)) @ vecs.T
    return root, inv_root


def _psd_sqrt(a, name):
    eigvals, vecs = jacobi_eigh(a)
    if eigvals.min() < -1e-9 * max(1.0, abs(eigvals.max())):
        raise ValueError(f"{name} is not positive semidefinite")
    return vecs @ np.diag(np.sqrt(np.clip(eigvals, 0.0, None))) @ vecs.T


def gaussian_w2(mean_a, cov_a, mean_b, cov_b) -> GaussianOtSolution:
    """Closed-form quadratic transport between N(mean_a, cov_a) and N(mean_b, cov_b).

    squared_w2 = |ma - mb|^2 + tr(Ca + Cb - 2 (Ca^1/2 Cb Ca^1/2)^1/2), and the
    transport map is T(x) = A x + b with
    A = Ca^-1/2 (Ca^1/2 Cb Ca^1/2)^1/2 Ca^-1/2 and b = mb - A ma.
    """
    mean_a = np.asarray(mean_a, dtype=float).reshape(-1)
    mean_b = np.asarray(mean_b, dtype=float).reshape(-1)
    cov_a = _check_symmetric(cov_a, "cov_a")
    cov_b = _check_symmetric(cov_b, "cov_b")
    d = mean_a.shape[0]
    if mean_b.shape[0] != d or cov_a.shape[0] != d or cov_b.shape[0] != d:
        raise ValueError("mean/covariance dimensions disagree")

    root_a, inv_root_a = _sym_sqrt_and_inv(cov_a, "cov_a")
    # validate PD of cov_b as well (the formula itself only needs PSD)
    _sym_sqrt_and_inv(cov_b, "cov_b")
    mid = _psd_sqrt(0.5 * ((root_a @ cov_b @ root_a)
                           + (root_a @ cov_b @ root_a).T), "cross term")
    sq = float(np.sum((mean_a - mean_b) ** 2)
               + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(mid))
    a_map = inv_root_a @ mid @ inv_root_a
    a_map = 0.5 * (a_map + a_map.T)
    b_vec = mean_b - a_map @ mean_a
    return GaussianOtSolution(squared_w2=max(sq, 0.0), map_matrix=a_map,
                              map_offset=b_vec)


def pairwise_cost(cloud_a, cloud_b, cost: CostModel) -> np.ndarray:
    """Matrix of L(y_j - x_i) for all pairs."""
    a = np.asarray(cloud_a, dtype=float)
    b = np.asarray(cloud_b, dtype=float)
    sq = (np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :]
          - 2.0 * a @ b.T)
    dist = np.sqrt(np.clip(sq, 0.0, None))
    return cost.beta * dist ** cost.alpha / cost.alpha


def _solve_assignment(costs: np.ndarray) -> np.ndarray:
    """Minimum-cost perfect matching on a square matrix.

    Augmenting-path algorithm with row/column potentials (O(n^3)); columns are
    scanned with vectorized updates so n in the hundreds stays fast.
    """
    n = costs.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)  # match[j] = row assigned to column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            free = ~used[1:]
            cur = costs[i0 - 1, :] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            if better.any():
                minv[1:][better] = cur[better]
                way[1:][better] = j0
            reachable = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(reachable)) + 1
            delta = reachable[j1 - 1]
            u[match[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    perm = np.zeros(n, dtype=np.int64)
    for j in range(1, n + 1):
        perm[match[j] - 1] = j - 1
    return perm


def exact_discrete_ot(cloud_a, cloud_b, cost: CostModel) -> Assignment:
    """Globally optimal pairing of two equal-size clouds under L(y - x)."""
    a = np.asarray(cloud_a, dtype=float)
    b = np.asarray(cloud_b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape != b.shape:
        raise ValueError(f"clouds must share a (n, d) shape, got {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n > _MAX_CLOUD:
        raise ValueError(f"cloud size {n} exceeds the {_MAX_CLOUD} point guard")
    costs = pairwise_cost(a, b, cost)
    perm = _solve_assignment(costs)
    total = float(costs[np.arange(n), perm].mean())
    return Assignment(permutation=perm, total_cost=total)


def displacement_interpolate(cloud_a, cloud_b, assignment: Assignment, t: float
                             ) -> np.ndarray:
    """Straight-line interpolation (1 - t) x_i + t y_perm(i)."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    a = np.asarray(cloud_a, dtype=float)
    b = np.asarray(cloud_b, dtype=float)
    matched = b[assignment.permutation]
    return (1.0 - t) * a + t * matched
