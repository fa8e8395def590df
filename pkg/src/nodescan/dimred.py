"""Discriminant dimension reduction.

The external axis is fitted once from the manual training set: PCA scores
feed a two-class linear discriminant, whose weight vector is mapped back
to wavelength space as a single loading q_ext.  Scores along q_ext are
scaled to unit pooled within-class variance and oriented so the
metastatic class mean exceeds the normal one.

Each scanned node then contributes its own internal axes: principal
directions of the node's spectra after projecting out q_ext, so they are
orthogonal to the external axis by construction.  All centring uses the
training mean; node data are never re-centred.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import (
    METASTATIC,
    NORMAL,
    InputError,
    ManualTrainingSet,
    NodeScan,
    NumericalError,
)

# Relative singular-value cutoff used for rank decisions.
_RANK_TOL = 1e-10


@dataclass(eq=False)
class ReductionBasis:
    """Everything needed to map raw spectra into the reduced space."""

    train_mean: np.ndarray  # (p,)
    q_ext: np.ndarray       # (p,) discriminant loading, scaled and oriented
    Q_int: np.ndarray       # (p, k_int) node-specific orthogonal loadings
    k_ext: int              # number of PCs behind q_ext (bookkeeping)
    k_int: int

    def __post_init__(self):
        self.train_mean = np.asarray(self.train_mean, dtype=float)
        self.q_ext = np.asarray(self.q_ext, dtype=float)
        self.Q_int = np.asarray(self.Q_int, dtype=float)
        p = self.train_mean.size
        if self.q_ext.shape != (p,):
            raise InputError("q_ext length does not match the wavelength count")
        if self.Q_int.shape != (p, self.k_int):
            raise InputError("Q_int shape does not match (p, k_int)")
        overlap = np.abs(self.Q_int.T @ self.q_ext)
        if overlap.size and overlap.max() >= 1e-10:
            raise NumericalError(
                f"internal loadings not orthogonal to q_ext (|dot| = {overlap.max():.3e})"
            )

    @property
    def k(self) -> int:
        """Total reduced dimension: 1 external + k_int internal."""
        return 1 + self.k_int


@dataclass(eq=False)
class ReducedData:
    """Scores in the reduced space; column 0 is the external variable."""

    scores: np.ndarray  # (n, 1 + k_int)
    k_int: int

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        if self.scores.ndim != 2 or self.scores.shape[1] != 1 + self.k_int:
            raise InputError("scores must have 1 + k_int columns")

    @property
    def k(self) -> int:
        return 1 + self.k_int


@dataclass(eq=False)
class ClassMoments:
    """Mean vector and covariance matrix of one class."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        d = self.mean.size
        if self.cov.shape != (d, d):
            raise InputError("covariance shape does not match mean length")


@dataclass(eq=False)
class PriorMoments:
    """Reduced-space normal / metastatic class moments used for priors."""

    m_n: np.ndarray
    V_n: np.ndarray
    m_c: np.ndarray
    V_c: np.ndarray


def pca(X: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-k principal loadings of an already-centred matrix.

    Returns (loadings, variances): loadings is (p, k) with unit columns
    ordered by decreasing explained variance; each column is signed so its
    largest-magnitude element is positive.  variances are the usual
    singular-value based estimates s_j^2 / (n - 1).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InputError("pca expects a 2-D matrix")
    n, p = X.shape
    if not 1 <= k <= min(n - 1, p):
        raise InputError(f"k = {k} outside [1, min(n - 1, p) = {min(n - 1, p)}]")
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    rank = int(np.sum(s > s[0] * _RANK_TOL)) if s.size and s[0] > 0 else 0
    if k > rank:
        raise NumericalError(f"k = {k} exceeds rank {rank} of the data")
    loadings = vt[:k].T.copy()
    for j in range(k):
        i = int(np.argmax(np.abs(loadings[:, j])))
        if loadings[i, j] < 0:
            loadings[:, j] = -loadings[:, j]
    variances = s[:k] ** 2 / (n - 1)
    return loadings, variances


def _pooled_scatter(S: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Within-class scatter (divisor n - 2) plus the two class means."""
    mask_c = labels == METASTATIC
    mask_n = labels == NORMAL
    n_c, n_n = int(mask_c.sum()), int(mask_n.sum())
    if n_c < 2 or n_n < 2:
        raise InputError("need at least 2 spectra per class for within-class scatter")
    mean_c = S[mask_c].mean(axis=0)
    mean_n = S[mask_n].mean(axis=0)
    dc = S[mask_c] - mean_c
    dn = S[mask_n] - mean_n
    sw = (dc.T @ dc + dn.T @ dn) / (S.shape[0] - 2)
    return np.atleast_2d(sw), mean_n, mean_c


def _lda_direction(S: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Fisher weight vector S_W^-1 (mean_c - mean_n) with a ridge fallback."""
    sw, mean_n, mean_c = _pooled_scatter(S, labels)
    k = sw.shape[0]
    eigvals = np.linalg.eigvalsh(sw)
    if eigvals[0] <= eigvals[-1] * 1e-12:
        ridge = 1e-8 * np.trace(sw) / k
        if ridge <= 0:
            raise NumericalError("within-class scatter is singular (no variance)")
        sw = sw + ridge * np.eye(k)
    return np.linalg.solve(sw, mean_c - mean_n)


def fit_external(train: ManualTrainingSet, k_ext: int):
    """Fit the external discriminant axis from the manual training set.

    Returns (train_mean, q_ext, t_train) where t_train = (X - mean) q_ext
    has unit pooled within-class variance and metastatic mean above the
    normal mean.
    """
    X = train.spectra.rows
    labels = train.labels
    train_mean = X.mean(axis=0)
    Xc = X - train_mean
    loadings, _ = pca(Xc, k_ext)
    S = Xc @ loadings
    w = _lda_direction(S, labels)
    q_ext = loadings @ w
    t = Xc @ q_ext
    sw, _, _ = _pooled_scatter(t[:, None], labels)
    v = float(sw[0, 0])
    if not v > 0:
        raise NumericalError("degenerate canonical score: zero within-class variance")
    q_ext = q_ext / np.sqrt(v)
    if t[labels == METASTATIC].mean() < t[labels == NORMAL].mean():
        q_ext = -q_ext
    t_train = Xc @ q_ext  # recomputed through the final loading on purpose:
    # reduce() must reproduce these scores exactly via the same product.
    return train_mean, q_ext, t_train


def choose_k_ext(train: ManualTrainingSet, candidates) -> int:
    """Pick k_ext by leave-one-site-out cross-validation.

    Held-out spectra are classified by the nearer class mean on the
    canonical score; per-site accuracies are averaged over sites and the
    best candidate wins, smallest k breaking ties.
    """
    candidates = sorted(set(int(k) for k in candidates))
    if not candidates:
        raise InputError("no k_ext candidates supplied")
    if candidates[0] < 1:
        raise InputError("k_ext candidates must be positive")
    labels = train.labels
    sites = np.unique(train.site_ids.astype(str))
    for cls in (NORMAL, METASTATIC):
        cls_sites = np.unique(train.site_ids[labels == cls].astype(str))
        if cls_sites.size < 2:
            raise InputError(f"need at least 2 sites per class ({cls} has {cls_sites.size})")
    X = train.spectra.rows
    k_max = candidates[-1]
    acc = {k: [] for k in candidates}
    for site in sites:
        held = train.site_ids.astype(str) == site
        X_tr, y_tr = X[~held], labels[~held]
        X_te, y_te = X[held], labels[held]
        mean = X_tr.mean(axis=0)
        Xc = X_tr - mean
        loadings, _ = pca(Xc, k_max)
        S = Xc @ loadings
        S_te = (X_te - mean) @ loadings
        for k in candidates:
            w = _lda_direction(S[:, :k], y_tr)
            t_tr = S[:, :k] @ w
            t_te = S_te[:, :k] @ w
            mu_n = t_tr[y_tr == NORMAL].mean()
            mu_c = t_tr[y_tr == METASTATIC].mean()
            pred = np.where(
                np.abs(t_te - mu_c) < np.abs(t_te - mu_n), METASTATIC, NORMAL
            )
            acc[k].append(float(np.mean(pred == y_te)))
    mean_acc = {k: float(np.mean(v)) for k, v in acc.items()}
    best = max(mean_acc.values())
    for k in candidates:  # ascending, so ties resolve to the smallest k
        if mean_acc[k] == best:
            return k
    raise AssertionError("unreachable")


def project_orthogonal(X: np.ndarray, q_ext: np.ndarray) -> np.ndarray:
    """Remove the q_ext component from every row: X (I - q q^T / q^T q)."""
    X = np.asarray(X, dtype=float)
    q = np.asarray(q_ext, dtype=float)
    qq = float(q @ q)
    if not qq > 0:
        raise InputError("q_ext must be nonzero")
    return X - np.outer((X @ q) / qq, q)


def fit_node_basis(
    node: NodeScan,
    train_mean: np.ndarray,
    q_ext: np.ndarray,
    k_int: int,
    k_ext: int = 0,
) -> ReductionBasis:
    """Fit the node's internal axes on its orthogonal-complement spectra.

    The node matrix is centred by the training mean, the external
    direction is projected out, and the top k_int principal loadings of
    the residual matrix become Q_int (no re-centring).
    """
    Xc = node.spectra.rows - np.asarray(train_mean, dtype=float)
    resid = project_orthogonal(Xc, q_ext)
    Q_int, _ = pca(resid, k_int)
    return ReductionBasis(train_mean, q_ext, Q_int, k_ext=k_ext, k_int=k_int)


def reduce(X: np.ndarray, basis: ReductionBasis) -> ReducedData:
    """Map raw spectra into the reduced space defined by a basis.

    Column 0 is the canonical discriminant score; the remaining columns
    are projections of the q_ext-orthogonalised rows onto Q_int.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != basis.train_mean.size:
        raise InputError("spectra do not match the basis wavelength count")
    Xc = X - basis.train_mean
    ext = Xc @ basis.q_ext
    resid = project_orthogonal(Xc, basis.q_ext)
    internal = resid @ basis.Q_int
    return ReducedData(np.column_stack([ext, internal]), basis.k_int)


def prior_moments(reduced: ReducedData, labels: np.ndarray) -> PriorMoments:
    """Per-class mean and sample covariance of reduced training scores."""
    labels = np.asarray(labels, dtype=object)
    S = reduced.scores
    if labels.shape != (S.shape[0],):
        raise InputError("labels must align with the score rows")
    k = S.shape[1]
    out = {}
    for cls in (NORMAL, METASTATIC):
        rows = S[labels == cls]
        if rows.shape[0] < k + 1:
            raise InputError(
                f"class {cls} has {rows.shape[0]} rows; need >= k + 1 = {k + 1}"
            )
        out[cls] = (rows.mean(axis=0), np.cov(rows, rowvar=False, ddof=1))
    return PriorMoments(
        m_n=out[NORMAL][0], V_n=np.atleast_2d(out[NORMAL][1]),
        m_c=out[METASTATIC][0], V_c=np.atleast_2d(out[METASTATIC][1]),
    )


def project_class_moments(basis: ReductionBasis, moments: ClassMoments) -> ClassMoments:
    """Exact reduced-space image of full-space class moments.

    Because the reduction is linear (scores = B^T (x - mean) with
    B = [q_ext, Q_int]), the reduced mean and covariance are B^T (m - mean)
    and B^T V B; no access to the original spectra is needed.
    """
    B = np.column_stack([basis.q_ext, basis.Q_int])
    mean = B.T @ (moments.mean - basis.train_mean)
    cov = B.T @ moments.cov @ B
    return ClassMoments(mean, 0.5 * (cov + cov.T))
