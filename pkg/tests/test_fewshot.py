from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expfam_zsl.dataset import FeatureTable
from expfam_zsl.expfam import BERNOULLI, BernoulliProduct, FamilySpec, GaussianDiag
from expfam_zsl.fewshot import (
    FewShotStats,
    accumulate,
    apply_fewshot,
    fewshot_update,
    fewshot_update_bernoulli,
    stats_from_samples,
)
from expfam_zsl.model import GfzslConfig, fit
from expfam_zsl.synthgen import SynthConfig, generate


def unit_prior(D=1, mean=0.0):
    return GaussianDiag(np.full(D, mean), np.zeros(D))


def stream(xs, D=1):
    s = FewShotStats.empty(D)
    for x in xs:
        s = accumulate(s, np.atleast_1d(x))
    return s


class TestUpdate:
    def test_single_sample_hand_case(self):
        post = fewshot_update(unit_prior(), stream([2.0]))
        assert post.mean[0] == 1.0
        assert post.var[0] == pytest.approx(0.8, rel=1e-15)

    def test_no_samples_returns_prior(self):
        prior = GaussianDiag([0.3, -1.0], [0.1, 0.2])
        assert fewshot_update(prior, FewShotStats.empty(2)) is prior

    def test_identical_samples_hit_floor(self):
        prior = unit_prior(mean=1.0)
        post = fewshot_update(prior, stream([1.0] * 4))
        assert post.mean[0] == 1.0
        expect = 1.0 / (1.0 + 4.0 / 1e-6)
        assert post.var[0] == pytest.approx(expect, rel=1e-12)
        assert post.var[0] == pytest.approx(1e-6 / 4, rel=1e-5)

    def test_precision_additivity(self):
        rng = np.random.default_rng(0)
        prior = GaussianDiag(rng.normal(size=3), rng.normal(size=3))
        X = rng.normal(size=(6, 3)) * 2
        post = fewshot_update(prior, stats_from_samples(X))
        spread = ((X - prior.mean) ** 2).mean(0)
        np.testing.assert_allclose(1 / post.var, 1 / prior.var + 6 / spread, rtol=1e-12)
        np.testing.assert_allclose(post.mean, (prior.mean + X.sum(0)) / 7, rtol=1e-14)

    def test_large_n_limit(self):
        rng = np.random.default_rng(1)
        X = rng.normal(3.0, 2.0, size=(10_000, 2))
        post = fewshot_update(unit_prior(2), stats_from_samples(X))
        np.testing.assert_allclose(post.mean, X.mean(0), rtol=0.01)
        assert np.all(post.var < 1e-2)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            fewshot_update(unit_prior(2), stream([1.0]))
        with pytest.raises(ValueError):
            accumulate(FewShotStats.empty(2), [1.0])

    def test_bernoulli(self):
        prior = BernoulliProduct([0.0, 0.0])
        post = fewshot_update_bernoulli(prior, stats_from_samples([[1.0, 0.0], [1.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(post.prob, [(0.5 + 3) / 4, (0.5 + 1) / 4], rtol=1e-14)


class TestStats:
    def test_accumulate_twice(self):
        s = stream([2.0, 4.0])
        assert s.n == 2 and s.sum[0] == 6.0 and s.sumsq[0] == 20.0

    def test_order_invariance(self):
        assert stream([1.0, 5.0, -2.0]) == stream([-2.0, 1.0, 5.0])

    def test_streaming_matches_batch(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(10, 3))
        prior = GaussianDiag(rng.normal(size=3), rng.normal(size=3))
        a = fewshot_update(prior, stream(X, 3))
        b = fewshot_update(prior, stats_from_samples(X))
        np.testing.assert_allclose(a.mean, b.mean, rtol=1e-12)
        np.testing.assert_allclose(a.var, b.var, rtol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=12), st.randoms(use_true_random=False))
    def test_permutation_property(self, xs, rnd):
        ys = list(xs)
        rnd.shuffle(ys)
        prior = unit_prior(mean=0.5)
        a = fewshot_update(prior, stream(xs))
        b = fewshot_update(prior, stream(ys))
        np.testing.assert_allclose(a.mean, b.mean, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(a.var, b.var, rtol=1e-12)

    def test_invalid(self):
        with pytest.raises(ValueError):
            FewShotStats(-1, np.zeros(1), np.zeros(1))


class TestApply:
    def _model(self, binary=False):
        feats, attrs, split, _ = generate(SynthConfig(seed=0, binary=binary))
        fam = FamilySpec(BERNOULLI) if binary else FamilySpec()
        return fit(split, feats, attrs, GfzslConfig(0.1, 0.1, fam)), feats, split

    def test_chunks_equal_whole(self):
        m, feats, split = self._model()
        pool = feats.subset(split.unseen_labeled[::9])
        whole = apply_fewshot(m, pool)
        half = pool.n_examples // 2
        parts = apply_fewshot(apply_fewshot(m, pool.subset(np.arange(half))),
                              pool.subset(np.arange(half, pool.n_examples)))
        for c in split.unseen_ids:
            np.testing.assert_allclose(parts.distributions[c].mean, whole.distributions[c].mean, rtol=1e-12)
            np.testing.assert_allclose(parts.distributions[c].var, whole.distributions[c].var, rtol=1e-12)

    def test_single_example_hand_formula(self):
        m, feats, split = self._model()
        c = split.unseen_ids[0]
        i = split.unseen_labeled[feats.labels[split.unseen_labeled] == c][0]
        x = feats.rows[i]
        prior = m.distributions[c]
        out = apply_fewshot(m, feats.subset([i]))
        np.testing.assert_allclose(out.distributions[c].mean, (prior.mean + x) / 2, rtol=1e-15)
        spread = np.maximum((x - prior.mean) ** 2, 1e-6)
        np.testing.assert_allclose(out.distributions[c].var, 1 / (1 / prior.var + 1 / spread), rtol=1e-12)
        other = split.unseen_ids[1]
        assert out.distributions[other] is m.distributions[other]

    def test_empty_is_identity(self):
        m, _, _ = self._model()
        assert apply_fewshot(m, FeatureTable(np.zeros((0, m.dim)), np.zeros(0, dtype=int))) is m

    def test_seen_label_rejected(self):
        m, feats, split = self._model()
        with pytest.raises(ValueError, match="row 0"):
            apply_fewshot(m, feats.subset(split.train[:1]))

    def test_bernoulli_model(self):
        m, feats, split = self._model(binary=True)
        out = apply_fewshot(m, feats.subset(split.unseen_labeled[:5]))
        c = int(feats.labels[split.unseen_labeled[0]])
        assert not np.array_equal(out.distributions[c].logits, m.distributions[c].logits)
