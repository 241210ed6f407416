import numpy as np
import pytest

from wgeo.cost import CostModel
from wgeo.losses import (
    BoundaryBatch,
    InteriorBatch,
    cycle_penalty,
    field_grad_from_potential,
    hj_residuals,
    potential_objective,
    transport_cost_estimate,
)
from wgeo.mlp import MlpParams, init_mlp, zeros_like_params

from util import assert_grads_close, fd_param_grad

COST2 = CostModel(2.0, 1.0)


def zero_potential(d):
    return MlpParams([np.zeros((1, d + 1))], [np.zeros(1)])


def linear_potential(space_coeffs, time_coeff, offset=0.0):
    w = np.array([list(space_coeffs) + [time_coeff]])
    return MlpParams([w], [np.array([float(offset)])])


def constant_field(d, value):
    return MlpParams([np.zeros((d, d))], [np.asarray(value, dtype=float)])


def small_setup(seed, d=2, n=6, m=5):
    rng = np.random.default_rng(seed)
    potential = init_mlp(d + 1, 1, n_hidden=2, width=5, rng=rng)
    field = init_mlp(d, d, n_hidden=1, width=5, rng=rng)
    interior = InteriorBatch(rng.standard_normal((n, d)), rng.uniform(0, 1, n))
    boundary = BoundaryBatch(rng.standard_normal((m, d)), rng.standard_normal((m, d)))
    return potential, field, interior, boundary


class TestPotentialObjective:
    def test_zero_potential_gives_zero(self):
        _, field, interior, boundary = small_setup(0)
        value, grads = potential_objective(zero_potential(2), field, interior,
                                           boundary, COST2)
        assert value == 0.0

    def test_pure_time_potential_cancels(self):
        # potential c*t: interior term -c, boundary term +c
        _, field, interior, boundary = small_setup(1)
        c = 1.7
        value, _ = potential_objective(linear_potential([0.0, 0.0], c), field,
                                       interior, boundary, COST2)
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_hand_evaluated_linear_case(self):
        # potential x1, boundary target (2,0) / source (1,0):
        # value = -(0 + 1/2) + (2 - 1) = 0.5 regardless of the interior sample
        potential = linear_potential([1.0, 0.0], 0.0)
        field = constant_field(2, [0.3, -0.4])
        interior = InteriorBatch(np.array([[0.7, 0.1]]), np.array([0.42]))
        boundary = BoundaryBatch(np.array([[1.0, 0.0]]), np.array([[2.0, 0.0]]))
        value, _ = potential_objective(potential, field, interior, boundary, COST2)
        assert value == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize("alpha,beta", [(2.0, 1.0), (1.5, 1.5)])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_potential_grads_match_finite_differences(self, seed, alpha, beta):
        cost = CostModel(alpha, beta)
        potential, field, interior, boundary = small_setup(10 + seed)
        _, grads = potential_objective(potential, field, interior, boundary, cost)

        def value_of(p):
            return potential_objective(p, field, interior, boundary, cost)[0]

        assert_grads_close(grads, fd_param_grad(value_of, potential), rtol=1e-4)

    def test_precomputed_push_matches(self):
        potential, field, interior, boundary = small_setup(3)
        from wgeo.mlp import mlp_forward
        pushed = interior.points + interior.times[:, None] * mlp_forward(field, interior.points)
        v1, g1 = potential_objective(potential, field, interior, boundary, COST2)
        v2, g2 = potential_objective(potential, field, interior, boundary, COST2,
                                     pushed=pushed)
        assert v1 == v2
        for a, b in zip(g1.weights, g2.weights):
            assert np.array_equal(a, b)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            InteriorBatch(np.zeros((0, 2)), np.zeros(0))
        with pytest.raises(ValueError):
            BoundaryBatch(np.zeros((0, 2)), np.zeros((0, 2)))

    def test_time_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            InteriorBatch(np.zeros((2, 2)), np.array([0.5, 1.5]))

    def test_worker_counts_agree(self):
        potential, field, interior, boundary = small_setup(4, n=13)
        v1, g1 = potential_objective(potential, field, interior, boundary, COST2,
                                     workers=1)
        v3a, g3a = potential_objective(potential, field, interior, boundary, COST2,
                                       workers=3)
        v3b, g3b = potential_objective(potential, field, interior, boundary, COST2,
                                       workers=3)
        assert v3a == v3b  # bit-identical for a fixed worker count
        for a, b in zip(g3a.weights, g3b.weights):
            assert np.array_equal(a, b)
        assert v1 == pytest.approx(v3a, rel=1e-12)
        for a, b in zip(g1.weights, g3a.weights):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-14)


class TestFieldGrad:
    def test_zero_potential_gives_zero_grad(self):
        _, field, interior, _ = small_setup(5)
        grads = field_grad_from_potential(zero_potential(2), field, interior, COST2)
        for w in grads.weights + grads.biases:
            assert np.all(w == 0.0)

    def test_zero_times_give_zero_grad(self):
        potential, field, interior, _ = small_setup(6)
        frozen = InteriorBatch(interior.points, np.zeros(interior.points.shape[0]))
        grads = field_grad_from_potential(potential, field, frozen, COST2)
        for w in grads.weights + grads.biases:
            np.testing.assert_allclose(w, 0.0, atol=1e-15)

    @pytest.mark.parametrize("alpha,beta", [(2.0, 1.0), (1.5, 1.5)])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_finite_differences(self, seed, alpha, beta):
        cost = CostModel(alpha, beta)
        potential, field, interior, boundary = small_setup(20 + seed)
        grads = field_grad_from_potential(potential, field, interior, cost)

        def value_of(f):
            return potential_objective(potential, f, interior, boundary, cost)[0]

        assert_grads_close(grads, fd_param_grad(value_of, field), rtol=1e-4)

    def test_worker_counts_agree(self):
        potential, field, interior, _ = small_setup(7, n=11)
        g1 = field_grad_from_potential(potential, field, interior, COST2, workers=1)
        g2 = field_grad_from_potential(potential, field, interior, COST2, workers=2)
        for a, b in zip(g1.weights, g2.weights):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-14)


class TestCyclePenalty:
    def test_exact_inverse_constant_fields(self):
        m = np.array([1.2, -0.7])
        rng = np.random.default_rng(8)
        value, gf, gg = cycle_penalty(constant_field(2, m), constant_field(2, -m),
                                      rng.standard_normal((9, 2)),
                                      rng.standard_normal((9, 2)), weight=1.0)
        assert value == pytest.approx(0.0, abs=1e-24)

    def test_zero_weight_short_circuits(self):
        rng = np.random.default_rng(9)
        f = init_mlp(2, 2, 1, 4, rng)
        g = init_mlp(2, 2, 1, 4, rng)
        value, gf, gg = cycle_penalty(f, g, rng.standard_normal((3, 2)),
                                      rng.standard_normal((3, 2)), weight=0.0)
        assert value == 0.0
        for w in gf.weights + gg.weights:
            assert np.all(w == 0.0)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(30 + seed)
        f = init_mlp(2, 2, 1, 4, rng)
        g = init_mlp(2, 2, 1, 4, rng)
        xa = rng.standard_normal((5, 2))
        xb = rng.standard_normal((5, 2))
        lam = 0.8
        _, gf, gg = cycle_penalty(f, g, xa, xb, lam)
        assert_grads_close(gf, fd_param_grad(
            lambda p: cycle_penalty(p, g, xa, xb, lam)[0], f), rtol=1e-4)
        assert_grads_close(gg, fd_param_grad(
            lambda p: cycle_penalty(f, p, xa, xb, lam)[0], g), rtol=1e-4)

    def test_swap_symmetry(self):
        rng = np.random.default_rng(11)
        f = init_mlp(2, 2, 1, 4, rng)
        g = init_mlp(2, 2, 1, 4, rng)
        xa = rng.standard_normal((6, 2))
        xb = rng.standard_normal((6, 2))
        v_fg, _, _ = cycle_penalty(f, g, xa, xb, 1.3)
        v_gf, _, _ = cycle_penalty(g, f, xb, xa, 1.3)
        assert v_fg == pytest.approx(v_gf, rel=1e-12)

    def test_mismatched_batches_rejected(self):
        f = constant_field(2, [0, 0])
        with pytest.raises(ValueError):
            cycle_penalty(f, f, np.zeros((3, 2)), np.zeros((4, 2)), 1.0)


class TestTransportCostEstimate:
    def test_constant_quadratic(self):
        rng = np.random.default_rng(12)
        m = np.array([1.0, 2.0])
        est = transport_cost_estimate(constant_field(2, m),
                                      rng.standard_normal((50, 2)), COST2)
        assert est == pytest.approx(2.5)  # |m|^2 / 2

    def test_zero_field(self):
        assert transport_cost_estimate(constant_field(2, [0, 0]),
                                       np.zeros((4, 2)), COST2) == 0.0

    def test_unit_three_halves(self):
        est = transport_cost_estimate(constant_field(2, [1.0, 0.0]),
                                      np.ones((8, 2)), CostModel(1.5, 1.5))
        assert est == pytest.approx(1.0)


class TestPlantedOptimum:
    """Monte-Carlo stationarity witness: the known optimal pair for a Gaussian
    translation makes the objective hit the true cost and both gradients vanish."""

    M_VEC = np.array([3.0, 0.0])
    N = 10_000

    def planted(self):
        # field F(x) = m; potential m.x - t |m|^2 / 2
        field = constant_field(2, self.M_VEC)
        potential = linear_potential(self.M_VEC, -0.5 * float(self.M_VEC @ self.M_VEC))
        return potential, field

    def batches(self, seed):
        rng = np.random.default_rng(seed)
        za = rng.standard_normal((self.N, 2))
        ts = rng.uniform(0, 1, self.N)
        wa = rng.standard_normal((self.N, 2))
        wb = rng.standard_normal((self.N, 2)) + self.M_VEC
        return InteriorBatch(za, ts), BoundaryBatch(wa, wb), rng

    def test_objective_hits_true_cost(self):
        potential, field = self.planted()
        interior, boundary, _ = self.batches(100)
        value, _ = potential_objective(potential, field, interior, boundary, COST2)
        # residual is exactly zero; the noise comes from the boundary means
        se = np.sqrt(2.0 * float(self.M_VEC @ self.M_VEC) / self.N)
        assert abs(value - 4.5) <= 3.0 * se

    def test_potential_gradient_vanishes(self):
        potential, field = self.planted()
        interior, boundary, _ = self.batches(101)
        _, grads = potential_objective(potential, field, interior, boundary, COST2)
        # per-entry standard errors: boundary samples are unit Gaussians
        se_entry = 1.0 / np.sqrt(self.N)
        flat = np.concatenate([grads.weights[0].ravel(), grads.biases[0]])
        budget = 3.0 * se_entry * np.sqrt(flat.size + 1.0)
        assert np.linalg.norm(flat) <= budget

    def test_field_gradient_vanishes_exactly(self):
        # for a linear potential the residual has zero spatial gradient
        potential, field = self.planted()
        interior, _, _ = self.batches(102)
        grads = field_grad_from_potential(potential, field, interior, COST2)
        for w in grads.weights + grads.biases:
            np.testing.assert_allclose(w, 0.0, atol=1e-12)


def test_hj_residuals_zero_for_planted_potential():
    m = np.array([2.0, -1.0])
    potential = linear_potential(m, -0.5 * float(m @ m))
    rng = np.random.default_rng(13)
    resid = hj_residuals(potential, rng.standard_normal((40, 2)),
                         rng.uniform(0, 1, 40), COST2)
    np.testing.assert_allclose(resid, 0.0, atol=1e-12)
