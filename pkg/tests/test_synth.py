"""Synthetic data generator: determinism, ground-truth structure, and
the latent-score statistics it promises."""

import numpy as np
import pytest
from scipy import ndimage

from nodescan.preprocess import PreprocessConfig, preprocess_node
from nodescan.synth import (
    SynthConfig,
    _embed,
    _latent,
    _shapes,
    gen_node,
    gen_nonnodal,
    gen_training,
)
from nodescan.types import METASTATIC, NONNODAL, NORMAL, InputError


class TestConfigValidation:
    def test_bad_grid(self):
        with pytest.raises(InputError, match="grid"):
            SynthConfig(R=0)
        with pytest.raises(InputError, match="grid"):
            SynthConfig(n_wavelengths=5)

    def test_bad_radius(self):
        with pytest.raises(InputError, match="nodal_radius"):
            SynthConfig(nodal_radius=1.5)

    def test_bad_blob_range(self):
        with pytest.raises(InputError, match="blob"):
            SynthConfig(blob_min_px=10, blob_max_px=9)

    def test_class_params(self):
        cfg = SynthConfig()
        for cls in (NORMAL, METASTATIC, NONNODAL):
            mean, cov = cfg.class_params(cls)
            assert mean.shape == (2,)
            assert cov.shape == (2, 2)
            np.testing.assert_allclose(cov, cov.T)


class TestDeterminism:
    def test_training_repeatable(self, small_cfg):
        a = gen_training(small_cfg)
        b = gen_training(small_cfg)
        np.testing.assert_array_equal(a.spectra.rows, b.spectra.rows)
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_array_equal(a.site_ids, b.site_ids)

    def test_node_repeatable(self, small_cfg):
        a, fa = gen_node(small_cfg, METASTATIC, index=4)
        b, fb = gen_node(small_cfg, METASTATIC, index=4)
        np.testing.assert_array_equal(a.spectra.rows, b.spectra.rows)
        np.testing.assert_array_equal(fa, fb)

    def test_nonnodal_repeatable(self, small_cfg):
        a = gen_nonnodal(small_cfg, n=30)
        b = gen_nonnodal(small_cfg, n=30)
        np.testing.assert_array_equal(a.rows, b.rows)

    def test_index_changes_node(self, small_cfg):
        a, _ = gen_node(small_cfg, NORMAL, index=0)
        b, _ = gen_node(small_cfg, NORMAL, index=1)
        assert not np.array_equal(a.spectra.rows, b.spectra.rows)

    def test_seed_changes_training(self, small_cfg):
        other = SynthConfig(seed=small_cfg.seed + 1,
                            sites_per_class=small_cfg.sites_per_class,
                            spectra_per_site=small_cfg.spectra_per_site)
        a = gen_training(small_cfg)
        b = gen_training(other)
        assert not np.array_equal(a.spectra.rows, b.spectra.rows)


class TestTrainingStructure:
    def test_counts_and_labels(self, small_training, small_cfg):
        per = small_cfg.sites_per_class * small_cfg.spectra_per_site
        assert small_training.n == 2 * per
        assert int((small_training.labels == NORMAL).sum()) == per
        assert int((small_training.labels == METASTATIC).sum()) == per

    def test_sites_group_rows(self, small_training, small_cfg):
        ids, counts = np.unique(small_training.site_ids, return_counts=True)
        assert len(ids) == 2 * small_cfg.sites_per_class
        np.testing.assert_array_equal(counts, small_cfg.spectra_per_site)
        # a site never mixes labels
        for sid in ids:
            assert len(set(small_training.labels[small_training.site_ids == sid])) == 1

    def test_wavelength_axis(self, small_training, small_cfg):
        pts = small_training.spectra.grid.points
        assert pts.size == small_cfg.n_wavelengths
        np.testing.assert_allclose(
            pts, np.linspace(small_cfg.wl_lo, small_cfg.wl_hi, pts.size))


class TestNodeTruth:
    def test_normal_node_has_no_metastatic_pixels(self, small_cfg):
        node, field = gen_node(small_cfg, NORMAL, index=0)
        assert node.truth == NORMAL
        assert set(np.unique(field)) <= {1, 3}
        assert node.spectra.n == small_cfg.R * small_cfg.C

    def test_corners_are_background(self, small_cfg):
        _, field = gen_node(small_cfg, NORMAL, index=0)
        C = small_cfg.C
        for i in (0, C - 1, field.size - C, field.size - 1):
            assert field[i] == 3

    def test_requested_blob_is_exact_rectangle(self, small_cfg):
        _, field = gen_node(small_cfg, METASTATIC, index=1, blobs=[(4, 4)])
        f2 = (field == 2).reshape(small_cfg.R, small_cfg.C)
        assert f2.sum() == 16
        rows = np.flatnonzero(f2.any(axis=1))
        cols = np.flatnonzero(f2.any(axis=0))
        assert rows.size == 4 and cols.size == 4
        assert f2[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1].all()

    def test_blobs_sit_inside_nodal_disc(self, small_cfg):
        _, plain = gen_node(small_cfg, NORMAL, index=1)
        _, field = gen_node(small_cfg, METASTATIC, index=1, blobs=[(3, 5)])
        assert np.all(plain[field == 2] == 1)

    def test_separate_blobs_never_touch(self, small_cfg):
        _, field = gen_node(small_cfg, METASTATIC, index=2,
                            blobs=[(3, 3), (1, 1), (1, 1), (1, 1)])
        f2 = (field == 2).reshape(small_cfg.R, small_cfg.C)
        labelled, n_comp = ndimage.label(f2, structure=np.ones((3, 3)))
        assert n_comp == 4
        sizes = sorted(np.bincount(labelled.ravel())[1:])
        assert sizes == [1, 1, 1, 9]

    def test_default_blob_size_in_range(self, small_cfg):
        for idx in range(5):
            _, field = gen_node(small_cfg, METASTATIC, index=idx)
            n2 = int((field == 2).sum())
            assert small_cfg.blob_min_px <= n2 <= small_cfg.blob_max_px

    def test_oversized_blob_rejected(self, small_cfg):
        with pytest.raises(InputError, match="does not fit"):
            gen_node(small_cfg, METASTATIC, index=0,
                     blobs=[(small_cfg.R, small_cfg.C)])

    def test_unknown_truth(self, small_cfg):
        with pytest.raises(InputError, match="unknown truth"):
            gen_node(small_cfg, "benign")


class TestLatentStatistics:
    def test_zero_separation_gives_chance_accuracy(self):
        """With identical class means a held-out-site nearest-centroid
        read of the spectra cannot beat guessing."""
        cfg = SynthConfig(seed=5, sites_per_class=15, spectra_per_site=4,
                          mean_metastatic=(0.0, 0.0),
                          cov_metastatic=((1.0, 0.2), (0.2, 1.0)))
        tr = gen_training(cfg)
        X, labels, sites = tr.spectra.rows, tr.labels, tr.site_ids
        hits = total = 0
        for sid in np.unique(sites):
            held = sites == sid
            mu_n = X[~held & (labels == NORMAL)].mean(axis=0)
            mu_m = X[~held & (labels == METASTATIC)].mean(axis=0)
            for row, lab in zip(X[held], labels[held]):
                pred = (NORMAL if np.linalg.norm(row - mu_n)
                        <= np.linalg.norm(row - mu_m) else METASTATIC)
                hits += pred == lab
                total += 1
        assert abs(hits / total - 0.5) < 0.1

    def test_latent_covariance_large_df(self):
        """At high degrees of freedom the draws are effectively normal:
        the sample covariance reproduces the configured one."""
        rng = np.random.default_rng(42)
        cov = np.array([[1.2, -0.2], [-0.2, 1.1]])
        draws = _latent(rng, np.zeros(2), cov, nu=200.0, size=10_000)
        emp = np.cov(draws, rowvar=False)
        rel = np.linalg.norm(emp - cov) / np.linalg.norm(cov)
        assert rel < 0.05

    def test_latent_covariance_heavy_tail_inflation(self):
        """At nu = 8 the scale mixture inflates second moments by
        nu / (nu - 2); the raw configured covariance is off by a third."""
        rng = np.random.default_rng(42)
        cov = np.array([[1.0, 0.2], [0.2, 1.0]])
        draws = _latent(rng, np.zeros(2), cov, nu=8.0, size=40_000)
        emp = np.cov(draws, rowvar=False)
        inflated = cov * 8.0 / 6.0
        rel_inf = np.linalg.norm(emp - inflated) / np.linalg.norm(inflated)
        rel_raw = np.linalg.norm(emp - cov) / np.linalg.norm(cov)
        assert rel_inf < 0.05
        assert rel_raw > 0.2

    def test_latent_mean_preserved(self):
        rng = np.random.default_rng(7)
        mean = np.array([6.0, -1.0])
        draws = _latent(rng, mean, np.eye(2), nu=8.0, size=20_000)
        np.testing.assert_allclose(draws.mean(axis=0), mean, atol=0.05)


class TestEmbedding:
    def test_shapes_orthonormal(self, small_cfg):
        base, Q = _shapes(small_cfg)
        assert base.shape == (small_cfg.n_wavelengths,)
        np.testing.assert_allclose(Q.T @ Q, np.eye(2), atol=1e-12)

    def test_noiseless_embedding_invertible(self, small_cfg):
        from dataclasses import replace

        cfg = replace(small_cfg, noise_sd=0.0)
        base, Q = _shapes(cfg)
        rng = np.random.default_rng(0)
        lat = rng.normal(size=(12, 2))
        spectra = _embed(cfg, rng, lat)
        recovered = ((spectra - base) @ Q) / cfg.latent_scale
        np.testing.assert_allclose(recovered, lat, atol=1e-10)

    def test_nodes_survive_preprocessing(self, small_cfg):
        node, _ = gen_node(small_cfg, METASTATIC, index=9)
        red = preprocess_node(node, PreprocessConfig())
        assert red.spectra.n == small_cfg.R * small_cfg.C
        assert np.all(np.isfinite(red.spectra.rows))
        assert red.truth == METASTATIC
