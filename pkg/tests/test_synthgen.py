from __future__ import annotations

import numpy as np
import pytest

from expfam_zsl.dataset import load_attributes, load_features
from expfam_zsl.model import GfzslConfig, fit
from expfam_zsl.synthgen import (
    SynthConfig,
    generate,
    mean_separation,
    reference_sigma,
    write_dataset,
)


class TestGenerate:
    def test_shapes(self):
        cfg = SynthConfig(S=5, U=2, K=3, D=4, n_per_class=7)
        feats, attrs, split, truth = generate(cfg)
        assert feats.rows.shape == (49, 4) and attrs.vectors.shape == (7, 3)
        assert split.seen_ids == tuple(range(5)) and split.unseen_ids == (5, 6)
        assert truth.means.shape == (7, 4)
        np.testing.assert_array_equal(attrs.vectors[:, -1], 1.0)

    def test_same_seed_identical(self):
        a = generate(SynthConfig(seed=3))
        b = generate(SynthConfig(seed=3))
        assert a[0].rows.tobytes() == b[0].rows.tobytes()
        assert a[1].vectors.tobytes() == b[1].vectors.tobytes()
        c = generate(SynthConfig(seed=4))
        assert a[0].rows.tobytes() != c[0].rows.tobytes()

    @pytest.mark.parametrize("kw", [{"U": 0}, {"S": 0}, {"D": 0}, {"gating": "cubic"}, {"noise": 0.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SynthConfig(**kw)

    def test_inductive_recovery(self):
        cfg = SynthConfig(S=8, U=2, K=4, D=16, noise=0.1, logvar_scale=0.0, seed=0)
        feats, attrs, split, truth = generate(cfg)
        m = fit(split, feats, attrs, GfzslConfig(1e-6, 1e-6))
        for c in split.unseen_ids:
            assert np.sqrt(np.mean((m.distributions[c].mean - truth.mean(c)) ** 2)) < 0.1

    def test_sample_means_converge(self):
        # Standardized errors of the sample means at N=10^4 over many seeds:
        # unit spread and at most a chance share outside 3 standard errors.
        z = []
        for seed in range(20):
            feats, _, _, truth = generate(SynthConfig(S=2, U=1, K=3, D=5, n_per_class=10_000, seed=seed))
            for c in range(3):
                X = feats.rows[feats.labels == c]
                se = np.exp(0.5 * truth.log_var(c)) / np.sqrt(X.shape[0])
                z.append((X.mean(0) - truth.mean(c)) / se)
        z = np.concatenate(z)
        assert 0.85 < z.std() < 1.15
        assert np.mean(np.abs(z) < 3) >= 0.99

    def test_offset_only_moves_unseen(self):
        base = SynthConfig(S=3, U=2, K=3, D=4, n_per_class=5, seed=2)
        a = generate(base)[0]
        b = generate(SynthConfig(**{**base.__dict__, "offset": 2.5}))[0]
        seen = a.labels < 3
        assert np.array_equal(a.rows[seen], b.rows[seen])
        np.testing.assert_allclose(b.rows[~seen] - a.rows[~seen], 2.5, rtol=1e-12)

    def test_binary(self):
        feats, _, _, truth = generate(SynthConfig(binary=True, seed=5))
        assert set(np.unique(feats.rows)) <= {0.0, 1.0}
        assert truth.log_vars is None

    def test_quadratic_gating_is_nonlinear(self):
        _, attrs, _, truth = generate(SynthConfig(gating="quadratic", S=30, U=5, K=3, seed=6))
        A = attrs.vectors
        W, *_ = np.linalg.lstsq(A, truth.means, rcond=None)
        assert np.abs(A @ W - truth.means).max() > 0.1


class TestSeparation:
    def test_reference_sigma(self):
        _, _, _, truth = generate(SynthConfig(noise=2.0, logvar_scale=0.0))
        assert reference_sigma(truth, [0, 1]) == pytest.approx(2.0, rel=1e-12)

    def test_mean_separation(self):
        _, _, _, truth = generate(SynthConfig(noise=1.0, logvar_scale=0.0, seed=7))
        d = np.linalg.norm(truth.mean(0) - truth.mean(1))
        assert mean_separation(truth, [0, 1]) == pytest.approx(d, rel=1e-12)


class TestWrite:
    def test_files_load_back(self, tmp_path):
        feats, attrs, split, _ = generate(SynthConfig(n_per_class=5))
        paths = write_dataset(tmp_path, feats, attrs, split)
        assert np.array_equal(load_features(paths["features"]).rows, feats.rows)
        assert np.array_equal(load_attributes(paths["attributes"]).vectors, attrs.vectors)
        assert paths["seen"].read_text() == ",".join(map(str, split.seen_ids)) + "\n"
