"""Alternating bidirectional saddle-point training.

Each outer iteration draws fresh interior/boundary batches for both transport
directions, runs a fixed number of ascent steps on the two potentials (the
interior batch and its pushed points are reused across those steps since the
fields are frozen), then takes one descent step on both fields driven by the
potential objectives plus the cycle penalty. The run stops once the two
Monte-Carlo transport costs agree to within the stopping threshold, after a
minimum iteration count that guards against the near-zero estimates right
after initialization.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .cost import CostModel
from .geodesic import GeoState, Preconditioner
from .losses import (
    BoundaryBatch,
    InteriorBatch,
    LossReport,
    cycle_penalty,
    field_grad_from_potential,
    hj_residuals,
    potential_objective,
    transport_cost_estimate,
)
from .mlp import init_mlp, mlp_forward, params_add
from .optim import TrainingError, adam_step, init_adam

__all__ = [
    "TrainConfig",
    "TrainHistory",
    "TrainAborted",
    "fit_preconditioner",
    "should_stop",
    "train",
]

log = logging.getLogger("wgeo.training")

HISTORY_COLUMNS = ("iteration", "l_ab", "l_ba", "k_reg", "w_ab", "w_ba",
                   "hjb_residual_mean")


@dataclass
class TrainConfig:
    """All hyperparameters of one run; defaults follow the experiment setup."""

    dim: int
    alpha: float = 2.0
    beta: float = 1.0
    width: int = 48
    potential_hidden_layers: int = 6
    field_hidden_layers: int = 5
    lr: float = 1e-4
    interior_batch: int = 2000
    boundary_batch: int | None = None  # defaults to interior_batch
    cycle_batch: int | None = None     # defaults to interior_batch
    inner_potential_steps: int = 5
    outer_iters: int = 10_000
    cycle_weight: float = 1.0
    stop_epsilon: float | None = None  # None: 0.01 * max(w_ab, w_ba, 1e-6) at check time
    min_iters: int = 500
    seed: int = 0
    precondition: bool = False
    deterministic: bool = True
    sample_noise_std: float = 0.0
    workers: int = 1
    checkpoint_every: int = 1000

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be at least 1")
        for name in ("width", "potential_hidden_layers", "field_hidden_layers",
                     "interior_batch", "inner_potential_steps", "outer_iters",
                     "min_iters", "workers", "checkpoint_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not self.lr > 0.0:
            raise ValueError("lr must be positive")
        if self.stop_epsilon is not None and not self.stop_epsilon > 0.0:
            raise ValueError("stop_epsilon must be positive")
        if self.cycle_weight < 0.0:
            raise ValueError("cycle_weight must be nonnegative")
        if self.sample_noise_std < 0.0:
            raise ValueError("sample_noise_std must be nonnegative")

    @property
    def boundary_size(self) -> int:
        return self.boundary_batch if self.boundary_batch else self.interior_batch

    @property
    def cycle_size(self) -> int:
        return self.cycle_batch if self.cycle_batch else self.interior_batch

    @property
    def cost(self) -> CostModel:
        return CostModel(self.alpha, self.beta)


@dataclass
class TrainHistory:
    """One LossReport per completed outer iteration plus wall-clock seconds."""

    reports: list[LossReport] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def gap_trace(self) -> np.ndarray:
        return np.array([abs(r.w_ab - r.w_ba) for r in self.reports])

    def to_csv(self) -> str:
        lines = [",".join(HISTORY_COLUMNS)]
        for it, r in zip(self.iterations, self.reports):
            lines.append(",".join([str(it)] + [
                format(v, ".17g") for v in
                (r.l_ab, r.l_ba, r.k_reg, r.w_ab, r.w_ba, r.hjb_residual_mean)]))
        return "\n".join(lines) + "\n"


class TrainAborted(TrainingError):
    """Training hit a non-finite value; carries the last good state."""

    def __init__(self, message, state: GeoState | None, history: TrainHistory):
        super().__init__(message)
        self.state = state
        self.history = history


def fit_preconditioner(samples_a, samples_b) -> Preconditioner:
    """Affine map matching first moments and total variance of the two clouds.

    sigma = sqrt(trace cov_b / trace cov_a), mu = mean_b - sigma * mean_a, so
    the rescaled source roughly overlaps the target's support. A degenerate
    (zero-variance) source falls back to sigma = 1.
    """
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("need at least two samples per side to fit a preconditioner")
    var_a = float(a.var(axis=0, ddof=1).sum())
    var_b = float(b.var(axis=0, ddof=1).sum())
    sigma = 1.0 if var_a <= 1e-24 else float(np.sqrt(var_b / var_a))
    mu = b.mean(axis=0) - sigma * a.mean(axis=0)
    return Preconditioner(sigma=sigma, mu=mu)


def should_stop(w_ab: float, w_ba: float, epsilon: float, iteration: int,
                min_iters: int) -> bool:
    """True when the bidirectional cost estimates agree and enough iterations ran."""
    return iteration >= min_iters and abs(w_ab - w_ba) < epsilon


def _wrap_sampler(draw, dim: int, noise_std: float, name: str):
    def wrapped(n, rng):
        cloud = np.asarray(draw(n, rng), dtype=float)
        if cloud.shape != (n, dim):
            raise ValueError(f"{name} returned shape {cloud.shape}, "
                             f"expected ({n}, {dim})")
        if noise_std > 0.0:
            cloud = cloud + rng.normal(0.0, noise_std, size=cloud.shape)
        return cloud

    return wrapped


def train(config: TrainConfig, sampler_a, sampler_b, checkpoint_dir=None,
          history_path=None) -> tuple[GeoState, TrainHistory]:
    """Run the full bidirectional scheme; returns the trained state and history.

    ``sampler_a``/``sampler_b`` are ``(n, rng) -> (n, d)`` callables for the
    source and target measures. When ``checkpoint_dir`` is given, periodic and
    final checkpoints are written there (and an ``abort`` checkpoint if a
    non-finite value stops the run); ``history_path`` receives the loss CSV.
    """
    from .checkpoint import save_checkpoint  # deferred: avoids an import cycle

    cost = config.cost
    d = config.dim
    rng = np.random.default_rng(config.seed)
    started = time.perf_counter()

    draw_a = _wrap_sampler(sampler_a, d, config.sample_noise_std, "source sampler")
    draw_b = _wrap_sampler(sampler_b, d, config.sample_noise_std, "target sampler")

    precond = Preconditioner.identity(d)
    if config.precondition:
        fit_n = max(config.interior_batch, 1000)
        precond = fit_preconditioner(draw_a(fit_n, rng), draw_b(fit_n, rng))
        log.info("fitted preconditioner sigma=%.4g mu=%s", precond.sigma, precond.mu)
        raw_a = draw_a
        draw_a = lambda n, gen: precond.apply(raw_a(n, gen))  # noqa: E731

    field_ab = init_mlp(d, d, config.field_hidden_layers, config.width, rng)
    field_ba = init_mlp(d, d, config.field_hidden_layers, config.width, rng)
    potential_ab = init_mlp(d + 1, 1, config.potential_hidden_layers, config.width, rng)
    potential_ba = init_mlp(d + 1, 1, config.potential_hidden_layers, config.width, rng)
    opt = {name: init_adam(net) for name, net in [
        ("field_ab", field_ab), ("field_ba", field_ba),
        ("potential_ab", potential_ab), ("potential_ba", potential_ba)]}

    history = TrainHistory()
    iterations_run = 0
    w_ab = w_ba = float("nan")

    def current_state():
        return GeoState(field_ab=field_ab, field_ba=field_ba,
                        potential_ab=potential_ab, potential_ba=potential_ba,
                        precond=precond, cost=cost, dim=d)

    def write_history():
        if history_path is not None:
            from .measures import atomic_write_bytes
            atomic_write_bytes(history_path, history.to_csv().encode("ascii"))

    def snapshot(tag, state=None):
        write_history()
        if checkpoint_dir is None:
            return
        os.makedirs(checkpoint_dir, exist_ok=True)
        meta = {"iterations": iterations_run, "w_ab": _finite_or(w_ab),
                "w_ba": _finite_or(w_ba), "seed": config.seed}
        save_checkpoint(os.path.join(checkpoint_dir, f"checkpoint_{tag}.json"),
                        state if state is not None else current_state(), meta)

    last_good = None
    try:
        for iteration in range(1, config.outer_iters + 1):
            za = draw_a(config.interior_batch, rng)
            ta = rng.uniform(0.0, 1.0, config.interior_batch)
            zb = draw_b(config.interior_batch, rng)
            tb = rng.uniform(0.0, 1.0, config.interior_batch)
            wa = draw_a(config.boundary_size, rng)
            wb = draw_b(config.boundary_size, rng)

            interior_ab = InteriorBatch(za, ta)
            interior_ba = InteriorBatch(zb, tb)
            boundary_ab = BoundaryBatch(source=wa, target=wb)
            boundary_ba = BoundaryBatch(source=wb, target=wa)
            pushed_ab = za + ta[:, None] * mlp_forward(field_ab, za)
            pushed_ba = zb + tb[:, None] * mlp_forward(field_ba, zb)

            l_ab = l_ba = float("nan")
            for _ in range(config.inner_potential_steps):
                l_ab, g_ab = potential_objective(
                    potential_ab, field_ab, interior_ab, boundary_ab, cost,
                    pushed=pushed_ab, workers=config.workers)
                potential_ab, opt["potential_ab"] = adam_step(
                    potential_ab, opt["potential_ab"], g_ab, config.lr, "ascend")
                l_ba, g_ba = potential_objective(
                    potential_ba, field_ba, interior_ba, boundary_ba, cost,
                    pushed=pushed_ba, workers=config.workers)
                potential_ba, opt["potential_ba"] = adam_step(
                    potential_ba, opt["potential_ba"], g_ba, config.lr, "ascend")

            xa = draw_a(config.cycle_size, rng)
            xb = draw_b(config.cycle_size, rng)
            grad_f = field_grad_from_potential(potential_ab, field_ab, interior_ab,
                                               cost, pushed=pushed_ab,
                                               workers=config.workers)
            grad_g = field_grad_from_potential(potential_ba, field_ba, interior_ba,
                                               cost, pushed=pushed_ba,
                                               workers=config.workers)
            k_reg, grad_f_cyc, grad_g_cyc = cycle_penalty(
                field_ab, field_ba, xa, xb, config.cycle_weight)
            field_ab, opt["field_ab"] = adam_step(
                field_ab, opt["field_ab"], params_add(grad_f, grad_f_cyc),
                config.lr, "descend")
            field_ba, opt["field_ba"] = adam_step(
                field_ba, opt["field_ba"], params_add(grad_g, grad_g_cyc),
                config.lr, "descend")

            w_ab = transport_cost_estimate(field_ab, wa, cost)
            w_ba = transport_cost_estimate(field_ba, wb, cost)
            resid_ab = hj_residuals(potential_ab, pushed_ab, ta, cost)
            resid_ba = hj_residuals(potential_ba, pushed_ba, tb, cost)
            hj_mean = float(0.5 * (np.abs(resid_ab).mean() + np.abs(resid_ba).mean()))

            if not all(np.isfinite(v) for v in (l_ab, l_ba, k_reg, w_ab, w_ba)):
                raise TrainingError(f"non-finite loss at iteration {iteration}")

            iterations_run = iteration
            history.reports.append(LossReport(l_ab=l_ab, l_ba=l_ba, k_reg=k_reg,
                                              w_ab=w_ab, w_ba=w_ba,
                                              hjb_residual_mean=hj_mean))
            history.iterations.append(iteration)
            last_good = current_state()

            if iteration % 500 == 0 or iteration == 1:
                log.info("iter %d: l_ab=%.4g l_ba=%.4g k=%.4g w_ab=%.4g w_ba=%.4g "
                         "hj=%.4g", iteration, l_ab, l_ba, k_reg, w_ab, w_ba, hj_mean)
            if iteration % config.checkpoint_every == 0:
                snapshot(f"iter{iteration}")

            eps = config.stop_epsilon
            if eps is None:
                eps = 0.01 * max(w_ab, w_ba, 1e-6)
            if should_stop(w_ab, w_ba, eps, iteration, config.min_iters):
                log.info("stopping at iteration %d: |w_ab - w_ba| = %.4g < %.4g",
                         iteration, abs(w_ab - w_ba), eps)
                break
    except TrainingError as exc:
        history.wall_clock = time.perf_counter() - started
        if last_good is not None:
            snapshot("abort", state=last_good)
        else:
            write_history()
        raise TrainAborted(str(exc), last_good, history) from exc

    history.wall_clock = time.perf_counter() - started
    snapshot("final")
    return current_state(), history


def _finite_or(value, fallback=0.0):
    return float(value) if np.isfinite(value) else fallback
