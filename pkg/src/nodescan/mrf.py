"""Spatial label smoothing: the position prior is sharpened with a Markov
random field over the 8-neighbour grid graph and optimised by iterated
conditional modes, alternating with the conjugate parameter updates.

The abundances pi play no role here; a pixel's prior weight for
component j is alpha_ij exp(-beta * gamma_ij), where gamma_ij is the
fraction of its neighbours currently labelled differently from j.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .mixture import (
    MixtureState,
    _log_density_and_maha,
    m_step_theta,
    rel_change,
)
from .priors import PositionField
from .types import NumericalError


@dataclass
class MrfConfig:
    beta: float = 15.0       # neighbour disagreement penalty
    nu: float = 4.0          # t degrees of freedom for this stage
    max_sweeps: int = 100
    theta_tol: float = 0.01  # parameter relative-change stopping threshold
    inner_tol: float = 1e-8
    inner_max: int = 50


def grid_neighbors(R: int, C: int) -> list[np.ndarray]:
    """Second-order (8-connected) neighbour indices for each grid pixel.

    Interior pixels get 8 neighbours, edge pixels 5, corner pixels 3.
    """
    if R < 1 or C < 1:
        raise NumericalError("grid dimensions must be positive")
    out = []
    for r in range(R):
        for c in range(C):
            nb = [
                rr * C + cc
                for rr in range(max(0, r - 1), min(R, r + 2))
                for cc in range(max(0, c - 1), min(C, c + 2))
                if (rr, cc) != (r, c)
            ]
            out.append(np.array(nb, dtype=int))
    return out


def gamma_frac(i: int, j: int, y: np.ndarray, nbhd: list[np.ndarray]) -> float:
    """Fraction of pixel i's neighbours whose label differs from j.

    j is a 1-based component label.  A pixel with no neighbours (1 x 1
    grid) has nothing to disagree with and scores 0.
    """
    nb = nbhd[i]
    if nb.size == 0:
        return 0.0
    return float(np.count_nonzero(y[nb] != j)) / nb.size


def mrf_prior(i, j, y, alpha, beta, nbhd) -> float:
    """Normalised smoothed prior weight of component j at pixel i."""
    weights = np.array(
        [alpha[i, jj] * np.exp(-beta * gamma_frac(i, jj + 1, y, nbhd))
         for jj in range(3)]
    )
    tot = weights.sum()
    if tot <= 0:
        raise NumericalError(f"smoothed prior vanished at pixel {i}")
    return float(weights[j - 1] / tot)


def _sweep(logf, y, alpha, beta, nbhd):
    """One raster-order pass of in-place conditional-mode updates.

    Returns (z, changes): memberships recorded at visit time and the
    number of label flips.  Labels in y are updated in place, so later
    pixels already see earlier flips.
    """
    n, g = logf.shape
    fshift = np.exp(logf - logf.max(axis=1, keepdims=True))
    z = np.empty((n, g))
    changes = 0
    for i in range(n):
        nb = nbhd[i]
        if nb.size:
            counts = np.bincount(y[nb], minlength=g + 1)[1:g + 1]
            gamma = 1.0 - counts / nb.size
        else:
            gamma = np.zeros(g)
        w = alpha[i] * np.exp(-beta * gamma) * fshift[i]
        tot = w.sum()
        if not tot > 0:
            raise NumericalError(f"posterior underflow at pixel {i}")
        zi = w / tot
        z[i] = zi
        lab = int(np.argmax(zi)) + 1
        if lab != y[i]:
            y[i] = lab
            changes += 1
    return z, changes


def icm_sweep(x, mu, Sigma, y, field: PositionField, beta, nu, nbhd=None):
    """Sweep every pixel once under fixed parameters.

    y is modified in place; returns (z, y, changes).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if nbhd is None:
        nbhd = grid_neighbors(field.R, field.C)
    logf, _ = _log_density_and_maha(x, mu, Sigma, nu)
    z, changes = _sweep(logf, y, field.alpha, beta, nbhd)
    return z, y, changes


def run_stage2(
    x,
    state1: MixtureState,
    field: PositionField,
    priors,
    cfg: MrfConfig,
    update_theta: bool = True,
) -> MixtureState:
    """Restoration-maximisation from a fitted stage-1 state.

    Each round sweeps the labels, refreshes the precision weights under
    the pre-sweep parameters, then (optionally) re-estimates mu and
    Sigma.  The loop stops once a sweep flips no label and the parameter
    change is below theta_tol; the parameters that produced that final
    sweep are kept, so the returned labels are exactly sweep-stable.
    pi and delta pass through from stage 1 untouched.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, k = x.shape
    nbhd = grid_neighbors(field.R, field.C)
    mu = state1.mu.copy()
    Sigma = state1.Sigma.copy()
    y = state1.y.copy()
    z = state1.z.copy()
    u = state1.u.copy()
    converged = False
    sweeps = 0
    for sweeps in range(1, cfg.max_sweeps + 1):
        logf, maha = _log_density_and_maha(x, mu, Sigma, cfg.nu)
        z, changes = _sweep(logf, y, field.alpha, cfg.beta, nbhd)
        u = (cfg.nu + k) / (cfg.nu + maha)
        if update_theta:
            mu_new, Sigma_new = m_step_theta(x, z, u, priors, cfg.inner_tol, cfg.inner_max)
            theta_change = rel_change([mu, Sigma], [mu_new, Sigma_new])
        else:
            mu_new, Sigma_new = mu, Sigma
            theta_change = 0.0
        if changes == 0 and theta_change < cfg.theta_tol:
            converged = True  # keep the pre-update parameters; see docstring
            break
        mu, Sigma = mu_new, Sigma_new
    if not converged:
        warnings.warn(f"label smoothing stopped at max_sweeps = {cfg.max_sweeps}",
                      RuntimeWarning)
    return MixtureState(
        mu=mu, Sigma=Sigma, pi=state1.pi.copy(), z=z, u=u, y=y,
        delta=state1.delta.copy(), objective=list(state1.objective),
        n_iter=sweeps, converged=converged,
    )
