import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imbalance_lab.numerics import (ClassStats, estimate_class_stats, log_std_normal_cdf,
                                    rng_stream, sample_mvn, shrink, std_normal_cdf, substreams)


class TestStdNormalCdf:
    def test_zero(self):
        assert std_normal_cdf(0.0) == 0.5

    def test_lower_2_5_percent_point(self):
        assert abs(std_normal_cdf(-1.959964) - 0.025) < 1e-6

    def test_against_high_precision_reference(self):
        mpmath.mp.dps = 40
        xs = np.linspace(-8, 8, 801)
        ref = np.array([float(mpmath.ncdf(mpmath.mpf(float(x)))) for x in xs])
        assert np.max(np.abs(std_normal_cdf(xs) - ref)) <= 1e-10

    def test_monotone_on_fine_grid(self):
        vals = std_normal_cdf(np.linspace(-8, 8, 10_000))
        assert np.all(np.diff(vals) >= 0)

    @given(st.floats(-30, 30))
    def test_symmetry(self, x):
        assert abs(std_normal_cdf(x) + std_normal_cdf(-x) - 1.0) <= 1e-15

    def test_scalar_in_scalar_out(self):
        assert isinstance(std_normal_cdf(1.0), float)
        assert std_normal_cdf(np.zeros(3)).shape == (3,)

    def test_log_cdf_deep_tail(self):
        # Phi(-40) underflows nowhere near double range in log space
        assert np.isfinite(log_std_normal_cdf(-40.0))
        assert log_std_normal_cdf(-40.0) < -800


class TestRng:
    def test_same_seed_same_stream(self):
        a = rng_stream(7, "taskgen").standard_normal(100)
        b = rng_stream(7, "taskgen").standard_normal(100)
        assert np.array_equal(a, b)

    def test_purposes_do_not_alias(self):
        a = rng_stream(7, "taskgen").standard_normal(100)
        b = rng_stream(7, "trainer").standard_normal(100)
        c = rng_stream(8, "taskgen").standard_normal(100)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_substreams_are_distinct(self):
        s = substreams(rng_stream(0, "mc"), 3)
        draws = [g.random(5) for g in s]
        assert not np.array_equal(draws[0], draws[1])


class TestSampleMvn:
    def test_standard_mean(self):
        n = 1_000_000
        X = sample_mvn(np.zeros(3), np.eye(3), n, rng_stream(0, "t"))
        assert np.all(np.abs(X.mean(axis=0)) < 4 / np.sqrt(n))

    def test_scaled_variance(self):
        X = sample_mvn([4.0, 4.0], 16 * np.eye(2), 1_000_000, rng_stream(1, "t"))
        assert np.all(np.abs(X.var(axis=0, ddof=1) - 16) < 0.3)

    def test_empty(self):
        X = sample_mvn(np.zeros(4), np.eye(4), 0, rng_stream(0, "t"))
        assert X.shape == (0, 4)

    def test_mean_z_scores(self):
        n = 100_000
        cov = np.array([[2.0, 0.5], [0.5, 1.0]])
        X = sample_mvn([1.0, -2.0], cov, n, rng_stream(3, "t"))
        z = (X.mean(axis=0) - [1.0, -2.0]) / np.sqrt(np.diag(cov) / n)
        assert np.all(np.abs(z) < 5)

    def test_singular_psd_accepted(self):
        cov = np.array([[1.0, 1.0], [1.0, 1.0]])
        X = sample_mvn(np.zeros(2), cov, 1000, rng_stream(0, "t"))
        assert np.allclose(X[:, 0], X[:, 1])

    def test_rejects_non_psd(self):
        with pytest.raises(ValueError):
            sample_mvn(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]), 5, rng_stream(0, "t"))

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            sample_mvn(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]), 5, rng_stream(0, "t"))

    def test_deterministic(self):
        a = sample_mvn(np.zeros(2), np.eye(2), 50, rng_stream(5, "t"))
        b = sample_mvn(np.zeros(2), np.eye(2), 50, rng_stream(5, "t"))
        assert a.tobytes() == b.tobytes()


class TestClassStats:
    def test_balanced_proportions(self):
        X = np.arange(20.0).reshape(10, 2)
        y = np.array([0, 1] * 5)
        stats = estimate_class_stats(X, y)
        assert [s.prior for s in stats] == [0.5, 0.5]

    def test_variance_recovery(self):
        rng = rng_stream(0, "t")
        X0 = sample_mvn(np.ones(2), 4 * np.eye(2), 100_000, rng)
        X1 = sample_mvn(-np.ones(2), np.eye(2), 100_000, rng)
        X = np.vstack([X0, X1])
        y = np.repeat([0, 1], 100_000)
        s = estimate_class_stats(X, y)
        assert np.allclose(np.diag(s[0].cov), 4, rtol=0.05)
        assert np.allclose(np.diag(s[1].cov), 1, rtol=0.05)

    def test_singleton_class_gets_ridge_only(self):
        X = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 7.0]])
        y = np.array([0, 0, 1])
        s = estimate_class_stats(X, y)
        assert np.array_equal(s[1].cov, shrink(np.zeros((2, 2))))
        assert np.all(np.diag(s[1].cov) > 0)

    def test_shrinkage_scale(self):
        cov = np.diag([2.0, 4.0])
        assert np.allclose(shrink(cov) - cov, 3e-6 * np.eye(2))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 5), st.integers(0, 10_000))
    def test_priors_sum_and_symmetry(self, C, seed):
        rng = np.random.default_rng(seed)
        y = np.concatenate([np.arange(C), rng.integers(0, C, 40)])
        X = rng.standard_normal((y.size, 3))
        stats = estimate_class_stats(X, y, C)
        assert abs(sum(s.prior for s in stats) - 1) <= 1e-12
        for s in stats:
            assert np.max(np.abs(s.cov - s.cov.T)) <= 1e-9

    def test_diagonal_mode(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((50, 3))
        s = estimate_class_stats(X, np.zeros(50, dtype=int), 1, diagonal=True)
        assert np.count_nonzero(s[0].cov - np.diag(np.diag(s[0].cov))) == 0

    @pytest.mark.parametrize("X,y,C", [
        (np.zeros((0, 2)), np.zeros(0, dtype=int), 2),
        (np.zeros((3, 2)), np.array([0, 1, 2]), 2),
        (np.zeros((3, 2)), np.array([0, 0, 0]), 2),
    ])
    def test_rejects_bad_input(self, X, y, C):
        with pytest.raises(ValueError):
            estimate_class_stats(X, y, C)

    def test_dataclass_fields(self):
        s = ClassStats(np.zeros(2), np.eye(2), 0.5)
        assert s.prior == 0.5
