from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from expfam_zsl.expfam import (
    BERNOULLI,
    BernoulliProduct,
    FamilySpec,
    GaussianDiag,
    estimate,
    from_unconstrained,
    log_density,
    n_unconstrained,
    to_unconstrained,
)

GAUSS = FamilySpec()
BERN = FamilySpec(BERNOULLI)
LOG_2PI = math.log(2 * math.pi)


class TestEstimate:
    def test_two_samples(self):
        d = estimate(GAUSS, [[1.0], [3.0]])
        assert d.mean[0] == 2.0
        assert d.var[0] == pytest.approx(1.0, rel=1e-15)

    def test_single_sample_hits_floor(self):
        d = estimate(GAUSS, [[5.0]])
        assert d.mean[0] == 5.0
        assert d.var[0] == pytest.approx(1e-6, rel=1e-12)

    def test_bernoulli_smoothing(self):
        d = estimate(BERN, [[1.0], [1.0], [0.0]])
        assert d.logits[0] == pytest.approx(math.log(1.5), rel=1e-14)
        assert d.prob[0] == pytest.approx(0.6, rel=1e-14)

    def test_weighted_matches_direct_moments(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(40, 3))
        w = rng.random(40)
        d = estimate(GAUSS, X, w)
        mu = (w[:, None] * X).sum(0) / w.sum()
        var = (w[:, None] * (X - mu) ** 2).sum(0) / w.sum()
        np.testing.assert_allclose(d.mean, mu, rtol=1e-13)
        np.testing.assert_allclose(d.var, var, rtol=1e-12)

    def test_integer_weights_equal_repetition(self):
        X = np.array([[0.0, 1.0], [2.0, -1.0], [5.0, 3.0]])
        a = estimate(GAUSS, X, [1, 2, 3])
        b = estimate(GAUSS, np.repeat(X, [1, 2, 3], axis=0))
        np.testing.assert_allclose(a.mean, b.mean, rtol=1e-14)
        np.testing.assert_allclose(a.var, b.var, rtol=1e-13)

    @pytest.mark.parametrize(
        "samples, weights, match",
        [
            (np.zeros((0, 2)), None, "sample"),
            ([[1.0], [2.0]], [0.0, 0.0], "weight"),
            ([[1.0], [2.0]], [1.0, -1.0], "weight"),
        ],
    )
    def test_errors(self, samples, weights, match):
        with pytest.raises(ValueError, match=match):
            estimate(GAUSS, samples, weights)

    def test_bernoulli_rejects_non_binary(self):
        with pytest.raises(ValueError, match="binary"):
            estimate(BERN, [[0.0], [0.5]])

    def test_mle_perturbation(self):
        # Moving the mean or variance by +-1e-3 never raises the weighted log-likelihood.
        rng = np.random.default_rng(11)
        for _ in range(20):
            D = int(rng.integers(1, 4))
            X = rng.normal(size=(int(rng.integers(2, 30)), D)) * rng.uniform(0.1, 3)
            w = rng.random(X.shape[0])
            d = estimate(GAUSS, X, w)
            base = float(w @ log_density(d, X))
            for k in range(D):
                for delta in (-1e-3, 1e-3):
                    m = d.mean.copy()
                    m[k] += delta
                    assert w @ log_density(GaussianDiag(m, d.log_var), X) <= base + 1e-12
                    v = d.var.copy()
                    v[k] += delta
                    if v[k] > 0:
                        assert w @ log_density(GaussianDiag(d.mean, np.log(v)), X) <= base + 1e-12


class TestLogDensity:
    def test_standard_normal_at_zero(self):
        d = GaussianDiag([0.0], [0.0])
        assert log_density(d, [0.0]) == pytest.approx(-0.5 * LOG_2PI, rel=1e-15)
        assert log_density(d, [0.0]) == pytest.approx(-0.91894, abs=1e-5)

    def test_bernoulli_zero_logits(self):
        d = BernoulliProduct([0.0, 0.0, 0.0])
        assert log_density(d, [1, 0, 1]) == pytest.approx(3 * -math.log(2), rel=1e-15)
        assert log_density(d, [1, 0, 1]) == pytest.approx(-2.07944, abs=1e-5)

    def test_two_dim_gaussian_mpmath(self):
        import mpmath

        mpmath.mp.dps = 40
        expect = -mpmath.mpf(1) - mpmath.mpf(1) / 2 * mpmath.log(4) - mpmath.log(2 * mpmath.pi)
        d = GaussianDiag([0.0, 0.0], np.log([1.0, 4.0]))
        assert log_density(d, [1.0, 2.0]) == pytest.approx(float(expect), rel=1e-15)

    def test_bernoulli_extreme_logits_are_stable(self):
        d = BernoulliProduct([800.0, -800.0])
        assert log_density(d, [1, 0]) == pytest.approx(0.0, abs=1e-300)
        assert log_density(d, [0, 1]) == pytest.approx(-1600.0, rel=1e-15)

    def test_batch_matches_rows(self):
        rng = np.random.default_rng(0)
        d = GaussianDiag(rng.normal(size=4), rng.normal(size=4))
        X = rng.normal(size=(6, 4))
        batch = log_density(d, X)
        assert batch.shape == (6,)
        for i in range(6):
            assert batch[i] == log_density(d, X[i])

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            log_density(GaussianDiag([0.0], [0.0]), [1.0, 2.0])

    @pytest.mark.parametrize("D", [1, 2])
    def test_integrates_to_one(self, D):
        rng = np.random.default_rng(D)
        d = GaussianDiag(rng.normal(size=D), rng.normal(scale=0.5, size=D))
        sd = np.sqrt(d.var)
        lo, hi = d.mean - 8 * sd, d.mean + 8 * sd
        n = 400_000
        pts = rng.uniform(lo, hi, size=(n, D))
        integral = np.exp(log_density(d, pts)).mean() * np.prod(hi - lo)
        assert integral == pytest.approx(1.0, abs=0.02)


class TestUnconstrained:
    def test_gaussian_e(self):
        v = to_unconstrained(GaussianDiag([1.0], [1.0]))
        np.testing.assert_array_equal(v, [1.0, 1.0])
        assert GaussianDiag([1.0], [1.0]).var[0] == pytest.approx(math.e, rel=1e-15)

    def test_zero_log_var_is_unit_variance(self):
        d = from_unconstrained(GAUSS, np.array([3.0, 0.0]))
        assert d.var[0] == 1.0

    def test_lengths(self):
        assert n_unconstrained(GAUSS, 5) == 10
        assert n_unconstrained(BERN, 5) == 5
        with pytest.raises(ValueError):
            from_unconstrained(GAUSS, np.zeros(3))

    def test_huge_log_var_is_clipped_positive(self):
        d = from_unconstrained(GAUSS, np.array([0.0, 0.0, -5000.0, 5000.0]))
        assert np.all(d.var > 0) and np.all(np.isfinite(d.var))

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.integers(1, 8).map(lambda k: 2 * k), elements=st.floats(-50, 50)))
    def test_gaussian_round_trip(self, v):
        assert np.array_equal(to_unconstrained(from_unconstrained(GAUSS, v)), v)
        assert np.all(from_unconstrained(GAUSS, v).var > 0)

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-1e6, 1e6)))
    def test_bernoulli_round_trip(self, v):
        assert np.array_equal(to_unconstrained(from_unconstrained(BERN, v)), v)


class TestTypes:
    def test_immutable_arrays(self):
        d = GaussianDiag([0.0], [0.0])
        with pytest.raises(ValueError):
            d.mean[0] = 1.0

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            GaussianDiag([np.nan], [0.0])
        with pytest.raises(ValueError):
            BernoulliProduct([np.inf])

    def test_family_validation(self):
        with pytest.raises(ValueError):
            FamilySpec(var_floor=0.0)
        with pytest.raises(ValueError):
            FamilySpec(BERNOULLI, smoothing=-1.0)
        with pytest.raises(ValueError):
            FamilySpec("poisson")
