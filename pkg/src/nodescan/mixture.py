"""Three-component multivariate-t mixture with conjugate priors, fitted by
MAP EM under position-dependent mixing.

Each component density is a multivariate t, handled through its
scale-mixture form: x | u ~ N(mu, Sigma / u) with u ~ Gamma(nu/2, nu/2).
The E step therefore produces both membership weights z and precision
weights u.  The M step maximises the posterior: mixing abundances pi
through a normalising fixed point that ties them to the position weights
alpha, and (mu_j, Sigma_j) through a short coordinate ascent on the
coupled conjugate updates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.linalg import cholesky, solve_triangular
from scipy.special import gammaln, multigammaln

from .priors import GroupPrior, PositionField
from .types import NumericalError

_G = 3  # fixed component count: normal, metastatic, background

# Elements smaller than this switch the relative-change test to absolute.
_REL_FLOOR = 1e-8


@dataclass
class EmConfig:
    nu: float = 4.0          # t degrees of freedom
    epsilon: float = 0.01    # outer relative-change stopping threshold
    max_outer: int = 500
    inner_tol: float = 1e-8  # fixed-point / coordinate-ascent tolerance
    inner_max: int = 50


@dataclass(eq=False)
class MixtureState:
    """Full EM state for one node; arrays are aligned with the pixel order."""

    mu: np.ndarray       # (3, k)
    Sigma: np.ndarray    # (3, k, k)
    pi: np.ndarray       # (3,) abundances, normalised to sum 1
    z: np.ndarray        # (n, 3) membership probabilities
    u: np.ndarray        # (n, 3) precision weights
    y: np.ndarray        # (n,) hard labels in {1, 2, 3}
    delta: np.ndarray    # (n,) position normalisers
    objective: list = field(default_factory=list)  # MAP objective per iteration
    n_iter: int = 0
    converged: bool = True


def rel_change(old, new) -> float:
    """Largest element-wise relative change, absolute below the floor."""
    worst = 0.0
    for a, b in zip(old, new):
        a = np.asarray(a, dtype=float).ravel()
        b = np.asarray(b, dtype=float).ravel()
        diff = np.abs(b - a)
        scale = np.abs(a)
        r = np.where(scale < _REL_FLOOR, diff, diff / np.maximum(scale, _REL_FLOOR))
        if r.size:
            worst = max(worst, float(r.max()))
    return worst


def _log_density_and_maha(x, mu, Sigma, nu):
    """Component-wise t log-densities and Mahalanobis squares.

    x: (n, k); mu: (g, k); Sigma: (g, k, k).  Returns (logf, maha), both
    (n, g).  Raises NumericalError on a non-positive-definite scale.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, k = x.shape
    g = mu.shape[0]
    logf = np.empty((n, g))
    maha = np.empty((n, g))
    const = gammaln((nu + k) / 2) - gammaln(nu / 2) - 0.5 * k * np.log(nu * np.pi)
    for j in range(g):
        try:
            L = cholesky(Sigma[j], lower=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"component {j + 1} scale not positive definite") from exc
        sol = solve_triangular(L, (x - mu[j]).T, lower=True)
        maha[:, j] = np.einsum("ij,ij->j", sol, sol)
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        logf[:, j] = const - 0.5 * logdet - 0.5 * (nu + k) * np.log1p(maha[:, j] / nu)
    return logf, maha


def t_logpdf(x, mu, Sigma, nu) -> float:
    """Log-density of one point under a multivariate t distribution."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    logf, _ = _log_density_and_maha(x[None, :], mu[None, :], Sigma[None, :, :], float(nu))
    return float(logf[0, 0])


def floor_covariance(S: np.ndarray, fallback: np.ndarray | None = None) -> np.ndarray:
    """Clip eigenvalues at 1e-10 * trace / k; degenerate input uses the fallback."""
    S = 0.5 * (S + S.T)
    k = S.shape[0]
    tr = float(np.trace(S))
    if not tr > 0:
        if fallback is None:
            raise NumericalError("covariance has non-positive trace and no fallback")
        return fallback.copy()
    lo = 1e-10 * tr / k
    vals, vecs = np.linalg.eigh(S)
    if vals[0] >= lo:
        return S
    vals = np.maximum(vals, lo)
    return (vecs * vals) @ vecs.T


def init_hierarchical(x: np.ndarray, priors: list[GroupPrior]):
    """Initial labels and component parameters from single-link clustering.

    The n >= 3 pixels are cut into 3 single-linkage clusters, which are
    matched to components by the assignment of cluster means to prior
    means with the smallest total distance.  Returns (labels0, mu0, Sigma0)
    with labels0 in {1, 2, 3}.
    """
    x = np.asarray(x, dtype=float)
    n, k = x.shape
    if n < 3:
        raise NumericalError(f"hierarchical init needs n >= 3 pixels, got {n}")
    Z = linkage(x, method="single")
    assign = fcluster(Z, t=_G, criterion="maxclust")  # cluster ids 1..3
    ids = np.unique(assign)
    means = np.vstack([x[assign == cid].mean(axis=0) for cid in ids])
    # Assign clusters to components so the total mean-to-prior-mean
    # distance is smallest over all injective assignments (6 when 3
    # clusters exist; duplicate points can leave fewer).
    prior_means = np.vstack([p.mu_p for p in priors])
    best, best_cost = None, np.inf
    for perm in permutations(range(_G), len(ids)):
        cost = sum(
            np.linalg.norm(means[ci] - prior_means[j]) for ci, j in enumerate(perm)
        )
        if cost < best_cost:
            best, best_cost = perm, cost
    comp_of_cluster = dict(enumerate(best))
    labels0 = np.empty(n, dtype=int)
    mu0 = np.empty((_G, k))
    Sigma0 = np.empty((_G, k, k))
    assigned = set(comp_of_cluster.values())
    for j in range(_G):
        if j not in assigned:
            mu0[j] = priors[j].mu_p
            Sigma0[j] = priors[j].Lambda_inv / (priors[j].nu_p + k + 2)
    for ci, j in comp_of_cluster.items():
        members = assign == ids[ci]
        labels0[members] = j + 1
        pts = x[members]
        prior_scale = priors[j].Lambda_inv / (priors[j].nu_p + k + 2)
        mu0[j] = pts.mean(axis=0)
        if pts.shape[0] > 1:
            cov = np.cov(pts, rowvar=False, ddof=1).reshape(k, k)
        else:
            cov = np.zeros((k, k))
        Sigma0[j] = floor_covariance(cov, fallback=prior_scale)
    return labels0, mu0, Sigma0


def e_step(x, mu, Sigma, pi, delta, field: PositionField, nu):
    """Membership and precision weights under the current parameters.

    z_ij is proportional to alpha_ij delta_i pi_j f_t(x_i); u_ij is the
    conditional gamma-weight mean (nu + k) / (nu + maha_ij).
    """
    x = np.asarray(x, dtype=float)
    n, k = x.shape
    logf, maha = _log_density_and_maha(x, mu, Sigma, nu)
    prior_w = field.alpha * delta[:, None] * pi[None, :]
    shift = logf.max(axis=1, keepdims=True)
    w = prior_w * np.exp(logf - shift)
    tot = w.sum(axis=1)
    if np.any(~np.isfinite(tot)) or np.any(tot <= 0):
        raise NumericalError("all-zero density row: posterior weights underflowed")
    z = w / tot[:, None]
    u = (nu + k) / (nu + maha)
    return z, u


def m_step_pi(z, field: PositionField, inner_tol=1e-8, inner_max=50):
    """Abundances pi and normalisers delta solving the position fixed point.

    Iterates delta_i = 1 / sum_j alpha_ij pi_j and
    pi_j = nhat_j / sum_i delta_i alpha_ij until the relative change in pi
    drops below inner_tol.  The pair is scale-invariant, so pi is
    normalised to sum 1 before the final delta is derived from it; the
    returned pair satisfies sum_j alpha_ij delta_i pi_j = 1 exactly.
    """
    alpha = field.alpha
    nhat = z.sum(axis=0)
    n = z.shape[0]
    pi = nhat / n
    for _ in range(inner_max):
        mix = alpha @ pi
        if np.any(mix <= 0):
            raise NumericalError("position mixture collapsed: alpha @ pi has zeros")
        delta = 1.0 / mix
        new_pi = nhat / (delta @ alpha)
        change = rel_change([pi], [new_pi])
        pi = new_pi
        if change < inner_tol:
            break
    else:
        warnings.warn("abundance fixed point did not reach inner_tol", RuntimeWarning)
    pi = pi / pi.sum()
    delta = 1.0 / (alpha @ pi)
    return pi, delta


def _sigma_given_mu(x, w, mu, prior: GroupPrior, nhat):
    """Conjugate scale update for fixed mu; w = z * u per pixel."""
    k = x.shape[1]
    dif = x - mu
    S = (w[:, None] * dif).T @ dif
    dm = np.sqrt(prior.K_diag) * (mu - prior.mu_p)
    num = prior.Lambda_inv + np.outer(dm, dm) + S
    Sigma = num / (prior.nu_p + nhat + k + 2)
    return 0.5 * (Sigma + Sigma.T)


def _mu_given_sigma(Sigma, xbar, n_u, prior: GroupPrior):
    """Conjugate mean update for fixed Sigma: precision-weighted blend of
    the prior mean and the weighted data mean."""
    try:
        Sigma_inv = np.linalg.inv(Sigma)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("scale matrix singular in mean update") from exc
    ks = np.sqrt(prior.K_diag)
    w0 = ks[:, None] * Sigma_inv * ks[None, :]
    A = w0 + Sigma_inv * n_u
    b = w0 @ prior.mu_p + Sigma_inv @ (n_u * xbar)
    return np.linalg.solve(A, b)


def m_step_theta(x, z, u, priors: list[GroupPrior], inner_tol=1e-8, inner_max=50):
    """Posterior-mode component parameters given memberships and weights.

    The mean and scale updates are coupled, so they are alternated from
    mu = weighted data mean until the joint relative change falls below
    inner_tol.  A component with no effective data returns its prior mode
    exactly: mu_jp and Lambda_inv / (nu_p + k + 2).
    """
    x = np.asarray(x, dtype=float)
    n, k = x.shape
    mu_out = np.empty((_G, k))
    Sigma_out = np.empty((_G, k, k))
    for j in range(_G):
        pr = priors[j]
        w = z[:, j] * u[:, j]
        nhat = float(z[:, j].sum())
        n_u = float(w.sum())
        if n_u == 0.0:
            mu_out[j] = pr.mu_p
            Sigma_out[j] = pr.Lambda_inv / (pr.nu_p + nhat + k + 2)
            continue
        xbar = (w @ x) / n_u
        mu = xbar.copy()
        Sigma = None
        for _ in range(inner_max):
            Sigma_new = _sigma_given_mu(x, w, mu, pr, nhat)
            mu_new = _mu_given_sigma(Sigma_new, xbar, n_u, pr)
            if Sigma is not None and rel_change([mu, Sigma], [mu_new, Sigma_new]) < inner_tol:
                mu, Sigma = mu_new, Sigma_new
                break
            mu, Sigma = mu_new, Sigma_new
        try:
            cholesky(Sigma, lower=True)
        except np.linalg.LinAlgError:
            warnings.warn(f"flooring near-singular scale of component {j + 1}",
                          RuntimeWarning)
            Sigma = floor_covariance(Sigma, fallback=pr.Lambda_inv / (pr.nu_p + k + 2))
        mu_out[j] = mu
        Sigma_out[j] = Sigma
    return mu_out, Sigma_out


def _log_eniw(mu, Sigma, prior: GroupPrior) -> float:
    """Log prior density of (mu, Sigma) under one conjugate component prior."""
    k = prior.k
    nu_p = prior.nu_p
    sign, logdet_s = np.linalg.slogdet(Sigma)
    if sign <= 0:
        return -np.inf
    try:
        Sigma_inv = np.linalg.inv(Sigma)
    except np.linalg.LinAlgError:
        return -np.inf
    dm = np.sqrt(prior.K_diag) * (mu - prior.mu_p)
    log_k = float(np.sum(np.log(prior.K_diag)))
    # Normal part: covariance K^-1/2 Sigma K^-1/2.
    quad = float(dm @ Sigma_inv @ dm)
    log_norm = -0.5 * k * np.log(2 * np.pi) - 0.5 * (logdet_s - log_k) - 0.5 * quad
    # Inverse-Wishart part with inverse scale Lambda_inv.
    sign_l, logdet_l = np.linalg.slogdet(prior.Lambda_inv)
    if sign_l <= 0:
        return -np.inf
    log_iw = (
        0.5 * nu_p * logdet_l
        - 0.5 * nu_p * k * np.log(2.0)
        - multigammaln(0.5 * nu_p, k)
        - 0.5 * (nu_p + k + 1) * logdet_s
        - 0.5 * float(np.trace(Sigma_inv @ prior.Lambda_inv))
    )
    return log_norm + log_iw


def map_objective(x, mu, Sigma, pi, delta, field: PositionField, priors, nu) -> float:
    """Observed-data log-likelihood plus the component log priors."""
    logf, _ = _log_density_and_maha(x, mu, Sigma, nu)
    prior_w = field.alpha * delta[:, None] * pi[None, :]
    shift = logf.max(axis=1)
    lik = shift + np.log(np.sum(prior_w * np.exp(logf - shift[:, None]), axis=1))
    total = float(lik.sum())
    for j in range(_G):
        total += _log_eniw(mu[j], Sigma[j], priors[j])
    return total


def run_stage1(x, field: PositionField, priors: list[GroupPrior], cfg: EmConfig) -> MixtureState:
    """Fit the mixture on one node's reduced scores.

    Starts from single-link clusters (or the prior modes when n < 3),
    equal abundances, and alternates e_step / m_step_pi / m_step_theta
    until every element of (mu, Sigma, pi) moves by less than epsilon, or
    max_outer is hit.  A final e_step synchronises z, u and the hard
    labels with the converged parameters.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, k = x.shape
    if n != field.alpha.shape[0]:
        raise NumericalError("position field does not match the pixel count")
    if n >= 3:
        _, mu, Sigma = init_hierarchical(x, priors)
    else:
        mu = np.vstack([p.mu_p for p in priors])
        Sigma = np.stack([p.Lambda_inv / (p.nu_p + k + 2) for p in priors])
    pi = np.full(_G, 1.0 / _G)
    delta = 1.0 / (field.alpha @ pi)
    trace = [map_objective(x, mu, Sigma, pi, delta, field, priors, cfg.nu)]
    converged = False
    it = 0
    for it in range(1, cfg.max_outer + 1):
        prev = (mu.copy(), Sigma.copy(), pi.copy())
        z, u = e_step(x, mu, Sigma, pi, delta, field, cfg.nu)
        pi, delta = m_step_pi(z, field, cfg.inner_tol, cfg.inner_max)
        resid = np.abs(field.alpha @ pi * delta - 1.0).max()
        if resid >= 1e-6:
            raise NumericalError(f"abundance fixed point residual {resid:.2e}")
        mu, Sigma = m_step_theta(x, z, u, priors, cfg.inner_tol, cfg.inner_max)
        trace.append(map_objective(x, mu, Sigma, pi, delta, field, priors, cfg.nu))
        if rel_change(prev, (mu, Sigma, pi)) < cfg.epsilon:
            converged = True
            break
    if not converged:
        warnings.warn(f"EM stopped at max_outer = {cfg.max_outer}", RuntimeWarning)
    z, u = e_step(x, mu, Sigma, pi, delta, field, cfg.nu)
    y = np.argmax(z, axis=1) + 1
    return MixtureState(
        mu=mu, Sigma=Sigma, pi=pi, z=z, u=u, y=y, delta=delta,
        objective=trace, n_iter=it, converged=converged,
    )


def validate_state(state: MixtureState, field: PositionField, atol=1e-6) -> None:
    """Raise if the state violates its structural invariants."""
    z_sums = state.z.sum(axis=1)
    if np.abs(z_sums - 1).max() > 1e-12:
        raise NumericalError("membership rows do not sum to 1")
    if np.any(state.u <= 0):
        raise NumericalError("non-positive precision weight")
    mix = (field.alpha @ state.pi) * state.delta
    if np.abs(mix - 1).max() > atol:
        raise NumericalError("position normalisation violated")
    for j in range(_G):
        cholesky(state.Sigma[j], lower=True)
