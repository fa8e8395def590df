"""Model fitting, per-node prior reprojection, and the prior-weight
precedence rules."""

import numpy as np
import pytest

from nodescan.dimred import ClassMoments, fit_node_basis
from nodescan.model import Model, fit_model
from nodescan.preprocess import preprocess_node
from nodescan.priors import DEFAULT_K_DIAG
from nodescan.synth import gen_node
from nodescan.types import (
    METASTATIC,
    NONNODAL,
    NORMAL,
    InputError,
    ManualTrainingSet,
    SpectralMatrix,
    WavelengthGrid,
)


def _tiny_training(n_per=4, p=3, seed=0):
    rng = np.random.default_rng(seed)
    grid = WavelengthGrid(np.array([500.0, 600.0, 700.0])[:p])
    rows = np.vstack([
        [1.0, 0.0, 0.5] + 0.05 * rng.normal(size=p) for _ in range(n_per)
    ] + [
        [2.0, 1.0, 0.0] + 0.05 * rng.normal(size=p) for _ in range(n_per)
    ])
    labels = [NORMAL] * n_per + [METASTATIC] * n_per
    sites = [f"s{i}" for i in range(2 * n_per)]
    return ManualTrainingSet(SpectralMatrix(grid, rows), np.array(labels),
                             np.array(sites))


class TestFitModel:
    def test_shapes_and_fields(self, small_model, small_training_pre):
        p = len(small_training_pre.spectra.grid)
        assert small_model.train_mean.shape == (p,)
        assert small_model.q_ext.shape == (p,)
        assert small_model.k == 1 + small_model.k_int == 2
        assert set(small_model.class_moments) == {NORMAL, METASTATIC, NONNODAL}

    def test_deterministic(self, small_training_pre, small_model):
        again = fit_model(
            small_training_pre, k_ext=small_model.k_ext, k_int=1,
            nonnodal_kspace=ClassMoments(np.zeros(2), np.eye(2)),
        )
        np.testing.assert_array_equal(again.q_ext, small_model.q_ext)
        np.testing.assert_array_equal(again.train_mean, small_model.train_mean)

    def test_node_priors_are_exact_linear_reprojections(self, small_model, small_cfg):
        node, _ = gen_node(small_cfg, METASTATIC, index=5)
        red = preprocess_node(node, small_model.preprocess)
        basis = fit_node_basis(
            red, small_model.train_mean, small_model.q_ext,
            small_model.k_int, k_ext=small_model.k_ext,
        )
        pm, nn = small_model.node_priors(basis)
        A = np.vstack([basis.q_ext[None, :], basis.Q_int.T])
        for name, mean, cov in [
            (NORMAL, pm.m_n, pm.V_n),
            (METASTATIC, pm.m_c, pm.V_c),
            (NONNODAL, nn.mean, nn.cov),
        ]:
            cm = small_model.class_moments[name]
            np.testing.assert_allclose(
                mean, A @ (cm.mean - small_model.train_mean), atol=1e-10)
            np.testing.assert_allclose(cov, A @ cm.cov @ A.T, atol=1e-10)

    def test_fixed_nonnodal_block_used_verbatim(self, small_training_pre,
                                                small_cfg, small_model):
        block = ClassMoments(np.array([0.0, 5.0]), 4.0 * np.eye(2))
        model = fit_model(small_training_pre, k_ext=10, k_int=1,
                          nonnodal_kspace=block,
                          preprocess=small_model.preprocess)
        assert NONNODAL not in model.class_moments
        node, _ = gen_node(small_cfg, NORMAL, index=6)
        red = preprocess_node(node, model.preprocess)
        basis = fit_node_basis(red, model.train_mean, model.q_ext, 1, k_ext=10)
        _, nn = model.node_priors(basis)
        np.testing.assert_array_equal(nn.mean, block.mean)
        np.testing.assert_array_equal(nn.cov, block.cov)

    def test_fixed_block_dimension_mismatch(self, small_training_pre):
        # caught while instantiating the reference prior blocks
        block = ClassMoments(np.zeros(3), np.eye(3))
        with pytest.raises(InputError, match="priors.nonnodal"):
            fit_model(small_training_pre, k_ext=10, k_int=1,
                      nonnodal_kspace=block)

    def test_no_nonnodal_source_rejected(self):
        with pytest.raises(InputError, match="non-nodal prior unavailable"):
            fit_model(_tiny_training(), k_ext=3, k_int=1)

    def test_grid_mismatch_rejected(self, small_training):
        other = SpectralMatrix(
            WavelengthGrid([1.0, 2.0, 3.0]), np.zeros((4, 3)))
        with pytest.raises(InputError, match="different wavelength grid"):
            fit_model(small_training, k_ext=10, k_int=1, nonnodal=other)

    def test_small_class_rejected(self):
        # k_int = 1 needs k + 1 = 3 spectra per class for a covariance
        tr = _tiny_training(n_per=2)
        with pytest.raises(InputError, match="need at least"):
            fit_model(tr, k_ext=3, k_int=1,
                      nonnodal_kspace=ClassMoments(np.zeros(2), np.eye(2)))


class TestKDiagList:
    def test_builtin_defaults(self, small_model):
        out = small_model.k_diag_list()
        for got, cls in zip(out, (NORMAL, METASTATIC, NONNODAL)):
            np.testing.assert_array_equal(got, DEFAULT_K_DIAG[cls])

    def test_stored_values_beat_defaults(self, small_model):
        small_model.k_diags = {METASTATIC: [9.0, 9.0]}
        try:
            out = small_model.k_diag_list()
            np.testing.assert_array_equal(out[1], [9.0, 9.0])
            np.testing.assert_array_equal(out[0], DEFAULT_K_DIAG[NORMAL])
        finally:
            small_model.k_diags = {}

    def test_override_beats_stored(self, small_model):
        small_model.k_diags = {METASTATIC: [9.0, 9.0]}
        try:
            out = small_model.k_diag_list({METASTATIC: [7.0, 7.0]})
            np.testing.assert_array_equal(out[1], [7.0, 7.0])
        finally:
            small_model.k_diags = {}

    def test_no_default_outside_two_dims(self, small_model):
        model = Model(
            grid=small_model.grid,
            train_mean=small_model.train_mean,
            q_ext=small_model.q_ext,
            k_ext=small_model.k_ext,
            k_int=2,
            class_moments=small_model.class_moments,
            k_diags={},
            preprocess=small_model.preprocess,
        )
        assert model.k == 3
        assert model.k_diag_list() is None

    def test_explicit_weights_allow_three_dims(self, small_training_pre):
        kd = {c: [2.0, 2.0, 2.0] for c in (NORMAL, METASTATIC, NONNODAL)}
        model = fit_model(small_training_pre, k_ext=10, k_int=2,
                          nonnodal_kspace=ClassMoments(np.zeros(3), np.eye(3)),
                          k_diags=kd)
        out = model.k_diag_list()
        for got in out:
            np.testing.assert_array_equal(got, [2.0, 2.0, 2.0])


class TestModelValidation:
    def test_missing_class_moments(self, small_model):
        moments = {NORMAL: small_model.class_moments[NORMAL]}
        with pytest.raises(InputError, match="missing"):
            Model(
                grid=small_model.grid,
                train_mean=small_model.train_mean,
                q_ext=small_model.q_ext,
                k_ext=small_model.k_ext,
                k_int=1,
                class_moments=moments,
                k_diags={},
                preprocess=small_model.preprocess,
            )

    def test_vector_length_mismatch(self, small_model):
        with pytest.raises(InputError, match="wavelength count"):
            Model(
                grid=small_model.grid,
                train_mean=small_model.train_mean[:-1],
                q_ext=small_model.q_ext[:-1],
                k_ext=small_model.k_ext,
                k_int=1,
                class_moments=small_model.class_moments,
                k_diags={},
                preprocess=small_model.preprocess,
            )


class TestReferenceBlocks:
    def test_blocks_complete_and_consistent(self, small_model):
        blocks = small_model.reference_priors
        assert set(blocks) == {NORMAL, METASTATIC, NONNODAL}
        k = small_model.k
        for name, blk in blocks.items():
            assert set(blk) == {"mu", "K_diag", "nu", "lambda_inv"}
            assert len(blk["mu"]) == k
            assert blk["nu"] == k + 2
            L = np.asarray(blk["lambda_inv"])
            np.testing.assert_allclose(L, L.T, atol=1e-12)
            assert np.linalg.eigvalsh(L).min() > 0
