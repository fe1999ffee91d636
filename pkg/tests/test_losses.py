import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imbalance_lab.losses import (LossSpec, PerturbationContext, PerturbationParams,
                                  distance_delta, isda_delta, la_delta, loss_gradients_wrt_omega,
                                  metalad_delta, nisda_delta, perturbed_ce, perturbed_ce_batch)
from imbalance_lab.numerics import ClassStats
from imbalance_lab.trainer import Model, batch_loss_grad


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / scale


def random_context(rng, C=4, d=3, equal_priors=False):
    pri = np.full(C, 1 / C) if equal_priors else rng.dirichlet(np.ones(C) * 2)
    stats = []
    for c in range(C):
        A = rng.standard_normal((d, d))
        stats.append(ClassStats(rng.standard_normal(d) * 2, A @ A.T + 0.1 * np.eye(d), pri[c]))
    return PerturbationContext.from_stats(stats, rng.standard_normal((C, d)))


def mean_metalad_loss(logits, labels, ctx, omega):
    loss, _, _ = perturbed_ce_batch(logits, labels, metalad_delta(ctx, omega))
    return loss.mean()


class TestPerturbedCe:
    def test_zero_delta_is_ce(self):
        z = np.array([1.0, -0.5, 2.0])
        loss, _ = perturbed_ce(z, 1, np.zeros(3))
        p = np.exp(z) / np.exp(z).sum()
        assert abs(loss + math.log(p[1])) < 1e-14

    def test_hand_example(self):
        loss, _ = perturbed_ce([0.0, 0.0], 0, [0.0, math.log(3)])
        assert abs(loss - math.log(4)) < 1e-12
        assert abs(loss - 1.386294) < 1e-6

    @settings(max_examples=100)
    @given(st.integers(0, 100_000), st.floats(-50, 50))
    def test_shift_invariance(self, seed, c):
        rng = np.random.default_rng(seed)
        z, dl = rng.standard_normal(5) * 3, rng.standard_normal(5)
        a, _ = perturbed_ce(z, 2, dl)
        b, _ = perturbed_ce(z + c, 2, dl)
        assert abs(a - b) <= 1e-12

    def test_stable_for_huge_logits(self):
        loss, g = perturbed_ce([1000.0, -1000.0], 0, [0.0, 0.0])
        assert loss == 0.0 and np.all(np.isfinite(g))

    @settings(max_examples=100)
    @given(st.integers(0, 100_000))
    def test_logit_gradient_vs_finite_difference(self, seed):
        rng = np.random.default_rng(seed)
        C = int(rng.integers(2, 6))
        z, dl, y = rng.standard_normal(C) * 2, rng.standard_normal(C), int(rng.integers(C))
        _, g = perturbed_ce(z, y, dl)
        h = 1e-5
        fd = np.array([(perturbed_ce(z + h * e, y, dl)[0] - perturbed_ce(z - h * e, y, dl)[0])
                       / (2 * h) for e in np.eye(C)])
        assert rel_err(g, fd) < 1e-5

    @settings(max_examples=50)
    @given(st.integers(0, 100_000))
    def test_margin_monotone(self, seed):
        rng = np.random.default_rng(seed)
        z, dl = rng.standard_normal(4), rng.standard_normal(4)
        y, c = 1, int(rng.choice([0, 2, 3]))
        bumped = dl.copy()
        bumped[c] += 0.1
        assert perturbed_ce(z, y, bumped)[0] > perturbed_ce(z, y, dl)[0]

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        Z, y = rng.standard_normal((7, 3)), rng.integers(0, 3, 7)
        D = rng.standard_normal((3, 3))
        loss, grad, prob = perturbed_ce_batch(Z, y, D)
        for i in range(7):
            l1, g1 = perturbed_ce(Z[i], y[i], D[y[i]])
            assert abs(loss[i] - l1) < 1e-13 and np.allclose(grad[i], g1, atol=1e-14)
        assert np.allclose(prob.sum(axis=1), 1)


class TestLogitAdjustment:
    def test_uniform_priors_equivalent_to_ce(self):
        z = np.array([0.3, -1.0, 2.0])
        D = la_delta(np.full(3, 1 / 3), 1.0)
        for y in range(3):
            assert abs(perturbed_ce(z, y, D[y])[0] - perturbed_ce(z, y, np.zeros(3))[0]) < 1e-12

    def test_tail_target_gets_larger_margin(self):
        D = la_delta([0.9, 0.1], 1.0)
        # competitor minus target: the head competitor is boosted relative to the tail target
        assert D[1, 0] - D[1, 1] == pytest.approx(math.log(9))
        assert D[0, 1] - D[0, 0] == pytest.approx(math.log(0.1 / 0.9))
        assert perturbed_ce([0.0, 0.0], 1, D[1])[0] > perturbed_ce([0.0, 0.0], 0, D[0])[0]

    def test_lambda_zero(self):
        assert np.all(la_delta([0.7, 0.2, 0.1], 0.0) == 0)

    def test_zero_prior_rejected(self):
        with pytest.raises(ValueError):
            la_delta([1.0, 0.0], 1.0)


class TestIsda:
    def _ctx(self, cov0, W):
        stats = [ClassStats(np.zeros(2), cov0, 0.5), ClassStats(np.ones(2), np.eye(2), 0.5)]
        return PerturbationContext.from_stats(stats, W)

    def test_identity_covariance(self):
        rng = np.random.default_rng(0)
        W = rng.standard_normal((3, 2))
        stats = [ClassStats(rng.standard_normal(2), np.eye(2), 1 / 3) for _ in range(3)]
        ctx = PerturbationContext.from_stats(stats, W)
        dW = W[:, None] - W[None]
        sq = (dW ** 2).sum(-1)
        assert np.allclose(isda_delta(ctx, 0.7), 0.7 * sq)
        off = ~np.eye(3, dtype=bool)
        assert np.allclose(nisda_delta(ctx, 0.7)[off], 0.7)
        assert np.all(np.diag(isda_delta(ctx, 0.7)) == 0)

    def test_hand_fixture(self):
        ctx = self._ctx(np.diag([4.0, 1.0]), np.array([[1.0, 0.0], [0.0, 0.0]]))
        assert isda_delta(ctx, 0.5)[0, 1] == 2.0
        assert nisda_delta(ctx, 0.5)[0, 1] == 2.0

    def test_weight_scaling(self):
        rng = np.random.default_rng(1)
        ctx = random_context(rng)
        scaled = PerturbationContext.from_stats(ctx.stats, 3 * ctx.weights)
        assert np.allclose(isda_delta(scaled, 1.0), 9 * isda_delta(ctx, 1.0), rtol=1e-12)
        assert np.allclose(nisda_delta(scaled, 1.0), nisda_delta(ctx, 1.0), rtol=1e-12)

    def test_coincident_rows_give_zero_nisda(self):
        ctx = self._ctx(np.eye(2), np.ones((2, 2)))
        assert np.all(nisda_delta(ctx, 1.0) == 0)


class TestMetalad:
    def test_distance_reduction(self):
        rng = np.random.default_rng(2)
        C, d = 3, 3
        W = rng.standard_normal((C, d))
        stats = [ClassStats(rng.standard_normal(d) * 3, 2.0 * np.eye(d), 1 / C) for _ in range(C)]
        ctx = PerturbationContext.from_stats(stats, W)
        om = PerturbationParams.global_lambda(0.4, 0.0, 1.3)
        assert np.allclose(metalad_delta(ctx, om), distance_delta(ctx, 1.3))
        # a non-zero variance weight only adds a constant off-diagonal offset
        om2 = PerturbationParams.global_lambda(0.4, 0.8, 1.3)
        off = ~np.eye(C, dtype=bool)
        diff = (metalad_delta(ctx, om2) - distance_delta(ctx, 1.3))[off]
        assert np.allclose(diff, 0.8 * 2.0)

    def test_variance_reduction_to_isda(self):
        # equal priors and equal ||w_y - w_c|| across pairs (equilateral rows)
        W = np.array([[1.0, 0.0], [-0.5, np.sqrt(3) / 2], [-0.5, -np.sqrt(3) / 2]])
        rng = np.random.default_rng(3)
        stats = []
        for c in range(3):
            A = rng.standard_normal((2, 2))
            stats.append(ClassStats(rng.standard_normal(2), A @ A.T + np.eye(2), 1 / 3))
        ctx = PerturbationContext.from_stats(stats, W)
        norm2 = 3.0
        lam = 0.6
        meta = metalad_delta(ctx, PerturbationParams.global_lambda(0.0, lam, 0.0))
        assert np.allclose(meta, isda_delta(ctx, lam / norm2), rtol=1e-12)

    @settings(max_examples=30)
    @given(st.integers(0, 10_000), st.floats(0.1, 3.0))
    def test_proportion_term_is_la_with_negated_weight(self, seed, lam):
        rng = np.random.default_rng(seed)
        ctx = random_context(rng)
        Z, y = rng.standard_normal((20, 4)), rng.integers(0, 4, 20)
        meta = perturbed_ce_batch(Z, y, metalad_delta(
            ctx, PerturbationParams.global_lambda(-lam, 0.0, 0.0)))[0]
        la = perturbed_ce_batch(Z, y, la_delta(ctx.priors, lam))[0]
        assert np.allclose(meta, la, atol=1e-12)

    def test_target_entries_zero(self):
        ctx = random_context(np.random.default_rng(4))
        D = metalad_delta(ctx, PerturbationParams.pairwise(4, (0.3, -0.2, 1.1)))
        assert np.all(np.diag(D) == 0)

    def test_coincident_centres_clamped(self):
        stats = [ClassStats(np.zeros(2), np.eye(2), 0.5), ClassStats(np.zeros(2), np.eye(2), 0.5)]
        ctx = PerturbationContext.from_stats(stats, np.eye(2))
        assert np.all(np.isfinite(ctx.multipliers()))
        assert np.all(np.abs(ctx.multipliers()[..., 2]) <= 20)

    def test_param_shapes(self):
        assert PerturbationParams.pairwise(5).n_free() == 3 * 5 * 4
        with pytest.raises(ValueError):
            PerturbationParams(np.zeros(4))
        with pytest.raises(ValueError):
            PerturbationParams.global_lambda(np.nan)


class TestOmegaGradient:
    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 100_000), st.booleans())
    def test_vs_finite_difference(self, seed, per_pair):
        rng = np.random.default_rng(seed)
        C = int(rng.integers(2, 5))
        ctx = random_context(rng, C=C)
        om = (PerturbationParams(rng.standard_normal((C, C, 3)) * 0.5, per_pair=True) if per_pair
              else PerturbationParams(rng.standard_normal(3) * 0.5))
        Z, y = rng.standard_normal((12, C)), rng.integers(0, C, 12)
        g = loss_gradients_wrt_omega(Z, y, ctx, om)
        h = 1e-5
        fd = np.zeros_like(om.values)
        mask = om.free_mask()
        for idx in zip(*np.nonzero(mask)):
            e = np.zeros_like(om.values)
            e[idx] = h
            fd[idx] = (mean_metalad_loss(Z, y, ctx, om.with_values(om.values + e))
                       - mean_metalad_loss(Z, y, ctx, om.with_values(om.values - e))) / (2 * h)
        assert rel_err(g, fd) < 1e-5

    def test_uniform_priors_kill_proportion_gradient(self):
        rng = np.random.default_rng(5)
        ctx = random_context(rng, equal_priors=True)
        Z, y = rng.standard_normal((10, 4)), rng.integers(0, 4, 10)
        g = loss_gradients_wrt_omega(Z, y, ctx, PerturbationParams.pairwise(4))
        assert np.all(g[..., 0] == 0)

    def test_target_entries_get_no_gradient(self):
        rng = np.random.default_rng(6)
        ctx = random_context(rng)
        Z, y = rng.standard_normal((10, 4)), rng.integers(0, 4, 10)
        g = loss_gradients_wrt_omega(Z, y, ctx, PerturbationParams.pairwise(4))
        assert np.all(g[np.arange(4), np.arange(4)] == 0)


class TestParameterGradient:
    @pytest.mark.parametrize("hidden,act", [(None, "relu"), (6, "tanh"), (5, "linear")])
    @pytest.mark.parametrize("kind", ["ce", "la", "isda", "nisda", "distance", "metalad"])
    def test_vs_finite_difference(self, hidden, act, kind):
        rng = np.random.default_rng(zlib.crc32(f"{kind}-{act}".encode()))
        C, d = 3, 4
        model = Model.init(d, C, hidden, act, seed=1)
        X, y = rng.standard_normal((15, d)), np.arange(15) % C
        ctx = random_context(rng, C=C, d=model.feature_dim)
        spec = LossSpec(kind, lam=0.3, omega=PerturbationParams.pairwise(C, (0.2, 0.1, 0.3)))
        delta = spec.delta(ctx, ctx.priors, C)
        _, g, _, _ = batch_loss_grad(model, X, y, delta)
        h = 1e-5
        fd = np.zeros(model.size)
        for i in range(model.size):
            e = np.zeros(model.size)
            e[i] = h
            fd[i] = (batch_loss_grad(model, X, y, delta, params=model.params + e)[0]
                     - batch_loss_grad(model, X, y, delta, params=model.params - e)[0]) / (2 * h)
        assert rel_err(g, fd) < 1e-5

    def test_single_sample_closed_form(self):
        model = Model.init(3, 2, seed=0)
        x, y = np.array([[0.5, -1.0, 2.0]]), np.array([1])
        _, g, _, prob = batch_loss_grad(model, x, y, np.zeros((2, 2)))
        r = prob[0] - np.eye(2)[1]
        assert np.allclose(g, np.concatenate([np.outer(r, x[0]).ravel(), r]))

    def test_zero_gradient_at_balanced_uniform_case(self):
        model = Model(2, 2)
        X = np.array([[1.0, 0.0], [1.0, 0.0]])
        _, g, _, _ = batch_loss_grad(model, X, np.array([0, 1]), np.zeros((2, 2)))
        assert np.allclose(g, 0)
