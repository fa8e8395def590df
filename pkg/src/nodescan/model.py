"""Trained model: the discriminant axis plus everything needed to rebuild
per-node priors.

Prior class moments are kept in full wavelength space.  Each scanned node
gets its own internal axes, so the reduced-space moments differ per node;
because the reduction is linear they can be reprojected exactly from the
full-space mean and covariance (see dimred.project_class_moments).  The
serialised prior blocks additionally record a reference instantiation on
an internal basis fitted to the training data itself, mainly for
inspection; classification always reprojects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dimred import (
    ClassMoments,
    PriorMoments,
    ReductionBasis,
    fit_external,
    fit_node_basis,
    project_class_moments,
    project_orthogonal,
    pca,
)
from .preprocess import PreprocessConfig
from .priors import DEFAULT_K_DIAG, build_group_priors
from .types import (
    METASTATIC,
    NONNODAL,
    NORMAL,
    InputError,
    ManualTrainingSet,
    SpectralMatrix,
    WavelengthGrid,
)


@dataclass(eq=False)
class Model:
    grid: WavelengthGrid            # post-preprocess wavelength axis
    train_mean: np.ndarray          # (p,)
    q_ext: np.ndarray               # (p,)
    k_ext: int
    k_int: int
    class_moments: dict             # class name -> full-space ClassMoments
    k_diags: dict                   # class name -> per-dimension prior weights
    preprocess: PreprocessConfig
    nonnodal_kspace: Optional[ClassMoments] = None  # fixed reduced-space fallback
    reference_priors: dict = field(default_factory=dict)  # serialised blocks

    def __post_init__(self):
        self.train_mean = np.asarray(self.train_mean, dtype=float)
        self.q_ext = np.asarray(self.q_ext, dtype=float)
        p = len(self.grid)
        if self.train_mean.shape != (p,) or self.q_ext.shape != (p,):
            raise InputError("model vectors do not match the wavelength count")
        for cls in (NORMAL, METASTATIC):
            if cls not in self.class_moments:
                raise InputError(f"model missing {cls} class moments")
        if NONNODAL not in self.class_moments and self.nonnodal_kspace is None:
            raise InputError(
                "non-nodal prior unavailable: supply labelled non-nodal spectra "
                "or the priors.nonnodal config block"
            )

    @property
    def k(self) -> int:
        return 1 + self.k_int

    def node_priors(self, basis: ReductionBasis):
        """Reduced-space prior moments for one node's basis.

        Returns (PriorMoments, nonnodal ClassMoments).  Normal and
        metastatic moments are exact linear reprojections; the non-nodal
        ones likewise unless only a fixed reduced-space block was
        configured, which is then used verbatim.
        """
        mn = project_class_moments(basis, self.class_moments[NORMAL])
        mc = project_class_moments(basis, self.class_moments[METASTATIC])
        pm = PriorMoments(m_n=mn.mean, V_n=mn.cov, m_c=mc.mean, V_c=mc.cov)
        if NONNODAL in self.class_moments:
            nn = project_class_moments(basis, self.class_moments[NONNODAL])
        else:
            nn = self.nonnodal_kspace
            if nn.mean.size != basis.k:
                raise InputError(
                    f"priors.nonnodal block has dimension {nn.mean.size}, "
                    f"expected k = {basis.k}"
                )
        return pm, nn

    def k_diag_list(self, overrides: dict | None = None) -> list | None:
        """Per-component prior weights: override > stored > built-in default."""
        overrides = overrides or {}
        out = []
        for cls in (NORMAL, METASTATIC, NONNODAL):
            v = overrides.get(cls)
            if v is None:
                v = self.k_diags.get(cls)
            if v is None:
                if self.k != 2:
                    return None  # let build_group_priors report the problem
                v = DEFAULT_K_DIAG[cls]
            out.append(np.asarray(v, dtype=float))
        return out


def _full_moments(rows: np.ndarray, k_min: int) -> ClassMoments:
    if rows.shape[0] < k_min:
        raise InputError(f"need at least {k_min} spectra per class, got {rows.shape[0]}")
    return ClassMoments(rows.mean(axis=0), np.cov(rows, rowvar=False, ddof=1))


def fit_model(
    train: ManualTrainingSet,
    k_ext: int,
    k_int: int,
    nonnodal: Optional[SpectralMatrix] = None,
    nonnodal_kspace: Optional[ClassMoments] = None,
    k_diags: dict | None = None,
    preprocess: Optional[PreprocessConfig] = None,
) -> Model:
    """Fit the external axis and collect prior moments from preprocessed data.

    train (and nonnodal, when given) must already be preprocessed; the
    wavelength grid of the model is simply theirs.
    """
    if nonnodal is not None and nonnodal.grid != train.spectra.grid:
        raise InputError("non-nodal spectra are on a different wavelength grid")
    train_mean, q_ext, _ = fit_external(train, k_ext)
    k = 1 + k_int
    X = train.spectra.rows
    moments = {
        NORMAL: _full_moments(X[train.labels == NORMAL], k + 1),
        METASTATIC: _full_moments(X[train.labels == METASTATIC], k + 1),
    }
    if nonnodal is not None:
        moments[NONNODAL] = _full_moments(nonnodal.rows, k + 1)
    elif nonnodal_kspace is None:
        raise InputError(
            "non-nodal prior unavailable: supply labelled non-nodal spectra "
            "or the priors.nonnodal config block"
        )
    k_diags = dict(k_diags or {})
    model = Model(
        grid=train.spectra.grid,
        train_mean=train_mean,
        q_ext=q_ext,
        k_ext=k_ext,
        k_int=k_int,
        class_moments=moments,
        k_diags=k_diags,
        preprocess=preprocess or PreprocessConfig(),
        nonnodal_kspace=nonnodal_kspace,
    )
    model.reference_priors = _reference_blocks(model, train)
    return model


def _reference_blocks(model: Model, train: ManualTrainingSet) -> dict:
    """Instantiate the serialisable prior blocks on a reference basis.

    The reference internal axes come from the training data's own
    orthogonal complement; per-node classification recomputes mu and
    lambda_inv on each node's basis instead.
    """
    Xc = train.spectra.rows - model.train_mean
    resid = project_orthogonal(Xc, model.q_ext)
    Q_ref, _ = pca(resid, model.k_int)
    basis = ReductionBasis(
        model.train_mean, model.q_ext, Q_ref, k_ext=model.k_ext, k_int=model.k_int
    )
    pm, nn = model.node_priors(basis)
    gp = build_group_priors(pm, nn, model.k_diag_list())
    blocks = {}
    for name, prior in zip((NORMAL, METASTATIC, NONNODAL), gp):
        blocks[name] = {
            "mu": prior.mu_p.tolist(),
            "K_diag": prior.K_diag.tolist(),
            "nu": float(prior.nu_p),
            "lambda_inv": prior.Lambda_inv.tolist(),
        }
    return blocks
