"""Component priors: position-dependent mixing weights over the scan grid
and the conjugate parameter priors for the three mixture components.

The background score omega grows with a pixel's scaled distance d from the
grid centre, on the idea that tissue near the rim of a scan is more likely
to be non-nodal.  The remaining weight is split evenly between the normal
and metastatic components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dimred import ClassMoments, PriorMoments
from .types import InputError

#: omega is capped here so no pixel is forced into the background class.
OMEGA_CAP = 0.97
#: below this scaled distance the background score stays linear in d.
OMEGA_KNEE = 0.56

# Default per-dimension prior weights for k = 2 (external, internal).
DEFAULT_K_DIAG = {
    "normal": (5.0, 2.0),
    "metastatic": (3.0, 1.25),
    "nonnodal": (3.85, 10.0),
}


@dataclass(eq=False)
class GroupPrior:
    """Conjugate prior for one component: mean, per-dimension weights,
    inverse-Wishart degrees of freedom and inverse scale."""

    mu_p: np.ndarray       # (k,) prior mean
    K_diag: np.ndarray     # (k,) diagonal of the prior weight matrix
    nu_p: float            # inverse-Wishart degrees of freedom
    Lambda_inv: np.ndarray  # (k, k) inverse of the scale matrix

    def __post_init__(self):
        self.mu_p = np.asarray(self.mu_p, dtype=float)
        self.K_diag = np.asarray(self.K_diag, dtype=float)
        self.Lambda_inv = np.asarray(self.Lambda_inv, dtype=float)
        k = self.mu_p.size
        if self.K_diag.shape != (k,):
            raise InputError("K_diag length does not match the prior mean")
        if np.any(self.K_diag <= 0):
            raise InputError("prior weights must be positive")
        if self.Lambda_inv.shape != (k, k):
            raise InputError("Lambda_inv must be k x k")
        if not np.allclose(self.Lambda_inv, self.Lambda_inv.T, atol=1e-10):
            raise InputError("Lambda_inv must be symmetric")
        if self.nu_p <= k - 1:
            raise InputError(f"nu_p must exceed k - 1 = {k - 1}")

    @property
    def k(self) -> int:
        return self.mu_p.size


@dataclass(eq=False)
class PositionField:
    """Precomputed per-pixel position prior for an R x C grid."""

    R: int
    C: int
    rho: float
    d: np.ndarray      # (n,) scaled distances
    omega: np.ndarray  # (n,) background scores
    alpha: np.ndarray  # (n, 3) mixing weights, rows sum to 1

    def __post_init__(self):
        n = self.R * self.C
        if self.d.shape != (n,) or self.omega.shape != (n,) or self.alpha.shape != (n, 3):
            raise InputError("position field arrays do not match the grid size")
        if np.any(self.omega < 0) or np.any(self.omega > OMEGA_CAP):
            raise InputError("omega outside [0, 0.97]")
        if not np.allclose(self.alpha.sum(axis=1), 1.0, atol=1e-12):
            raise InputError("alpha rows must sum to 1")


def scaled_distance(r: int, c: int, R: int, C: int) -> float:
    """Distance of pixel (r, c) from the grid centre, scaled so corners map to 1.

    The centre sits at ((R + 1) / 2, (C + 1) / 2); the normaliser is the
    centre-to-corner distance.  A 1 x 1 grid has no extent and returns 0.
    """
    if not (1 <= r <= R and 1 <= c <= C):
        raise InputError(f"pixel ({r}, {c}) outside the {R} x {C} grid")
    rc = (R + 1) / 2.0
    cc = (C + 1) / 2.0
    denom = math.sqrt((1 - rc) ** 2 + (1 - cc) ** 2)
    if denom == 0.0:
        return 0.0
    return math.sqrt((r - rc) ** 2 + (c - cc) ** 2) / denom


def background_score(d: float, rho: float) -> float:
    """Background score omega for scaled distance d with sharpness rho.

    Linear in d up to the knee; beyond it the score jumps to d**(1/rho)
    (rho > 1 pushes rim pixels harder toward background) and is capped.
    """
    if not 0 <= d <= 1:
        raise InputError(f"scaled distance {d} outside [0, 1]")
    if rho <= 0:
        raise InputError("rho must be positive")
    if d > OMEGA_KNEE:
        return min(d ** (1.0 / rho), OMEGA_CAP)
    return d


def position_params(omega: float) -> np.ndarray:
    """Mixing weights (normal, metastatic, background) for one pixel."""
    if not 0 <= omega <= OMEGA_CAP:
        raise InputError(f"omega {omega} outside [0, {OMEGA_CAP}]")
    return np.array([(1 - omega) / 2, (1 - omega) / 2, omega])


@lru_cache(maxsize=64)
def _position_field_cached(R: int, C: int, rho: float) -> PositionField:
    n = R * C
    d = np.empty(n)
    omega = np.empty(n)
    for i in range(n):
        r, c = i // C + 1, i % C + 1
        d[i] = scaled_distance(r, c, R, C)
        omega[i] = background_score(d[i], rho)
    alpha = np.column_stack([(1 - omega) / 2, (1 - omega) / 2, omega])
    return PositionField(R, C, rho, d, omega, alpha)


def position_field(R: int, C: int, rho: float) -> PositionField:
    """Build (and cache) the position prior for an R x C grid."""
    if R < 1 or C < 1:
        raise InputError("grid dimensions must be positive")
    if rho <= 0:
        raise InputError("rho must be positive")
    return _position_field_cached(int(R), int(C), float(rho))


def build_group_priors(
    moments: PriorMoments,
    nonnodal_moments: ClassMoments,
    k_diags=None,
) -> list[GroupPrior]:
    """Assemble the three conjugate priors from class moments.

    Degrees of freedom are fixed at nu_p = k + 2, the smallest value with a
    finite prior covariance mean; the inverse scale (nu_p - k - 1) V then
    makes that mean equal the observed class covariance V.  k_diags may
    override the per-dimension prior weights (defaults exist for k = 2).
    """
    k = moments.m_n.size
    nu_p = float(k + 2)
    if k_diags is None:
        if k != 2:
            raise InputError(
                f"built-in prior weights cover k = 2 only; supply k_diags for k = {k}"
            )
        k_diags = [DEFAULT_K_DIAG["normal"], DEFAULT_K_DIAG["metastatic"],
                   DEFAULT_K_DIAG["nonnodal"]]
    if len(k_diags) != 3:
        raise InputError("k_diags must list weights for exactly 3 components")
    factor = nu_p - k - 1  # equals 1 for nu_p = k + 2; kept explicit
    specs = [
        (moments.m_n, moments.V_n),
        (moments.m_c, moments.V_c),
        (nonnodal_moments.mean, nonnodal_moments.cov),
    ]
    out = []
    for (mu, V), kd in zip(specs, k_diags):
        kd = np.asarray(kd, dtype=float)
        if kd.shape != (k,):
            raise InputError(f"prior weight diagonal must have length k = {k}")
        out.append(GroupPrior(mu, kd, nu_p, factor * np.asarray(V, dtype=float)))
    return out
