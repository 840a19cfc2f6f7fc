"""Gaussian copula linking the two treatment worlds of the confounder.

The 2N x 2N correlation matrix has equicorrelated diagonal blocks (within
each world) and a compound-symmetric off-diagonal block (across worlds).
Every matrix in sight has the form a*I + b*J, so all products, inverses and
conditionals stay in that two-parameter algebra; dense linear algebra is
only used by the validation tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from . import kernels
from .config import CDF_INVERSION_TOL


@dataclass(frozen=True)
class CopulaParams:
    gamma1: float  # within-cluster correlation, treated world
    gamma0: float  # within-cluster correlation, control world
    rho: float     # cross-world unit-level correlation


def rho_star(params: CopulaParams) -> float:
    """Cross-world correlation between different units of a cluster."""
    return 0.5 * (params.gamma0 + params.gamma1) * params.rho


# ---------------------------------------------------------------------------
# a*I + b*J algebra
# ---------------------------------------------------------------------------

def eq_mat(a: float, b: float, n: int) -> np.ndarray:
    return a * np.eye(n) + b * np.ones((n, n))


def eq_mul(p1, p2, n):
    a1, b1 = p1
    a2, b2 = p2
    return a1 * a2, a1 * b2 + b1 * a2 + n * b1 * b2


def eq_inv(p, n):
    a, b = p
    return 1.0 / a, -b / (a * (a + n * b))


def eq_apply(p, z):
    a, b = p
    return a * z + b * z.sum()


def sample_eq_normal(rng, mean, p, n):
    """Draw from N(mean, a*I + b*J) using the two-eigenvalue structure."""
    a, b = p
    lam_perp = max(a, 0.0)
    lam_one = max(a + n * b, 0.0)
    eps = rng.standard_normal(n)
    centred = eps - eps.mean()
    return mean + np.sqrt(lam_perp) * centred + \
        np.sqrt(lam_one / n) * rng.standard_normal() * np.ones(n)


# ---------------------------------------------------------------------------
# joint correlation matrix and its positive-definiteness region
# ---------------------------------------------------------------------------

def build_omega(params: CopulaParams, n: int) -> np.ndarray:
    """Dense 2N x 2N correlation matrix, treated block first."""
    rs = rho_star(params)
    c11 = eq_mat(1.0 - params.gamma1, params.gamma1, n)
    c00 = eq_mat(1.0 - params.gamma0, params.gamma0, n)
    c10 = eq_mat(params.rho - rs, rs, n)
    top = np.hstack([c11, c10])
    bot = np.hstack([c10, c00])
    return np.vstack([top, bot])


def rho_upper_bound(gamma1: float, gamma0: float, n: int) -> float:
    """Largest |rho| keeping the joint matrix positive definite."""
    t1 = 4.0 * (1.0 - gamma1) * (1.0 - gamma0) / (2.0 - gamma1 - gamma0) ** 2
    denom = 2.0 + (n - 1) * (gamma1 + gamma0)
    t2 = 4.0 * (1.0 + (n - 1) * gamma1) * (1.0 + (n - 1) * gamma0) / denom ** 2
    return float(np.sqrt(min(t1, t2)))


def check_pd_condition(params: CopulaParams, n: int) -> bool:
    lo = -1.0 / (n - 1) if n > 1 else -np.inf
    for g in (params.gamma1, params.gamma0):
        if not (lo < g < 1.0):
            return False
    return abs(params.rho) < rho_upper_bound(params.gamma1, params.gamma0, n)


def sample_rho(rng, gamma1: float, gamma0: float, n: int) -> float:
    upper = rho_upper_bound(gamma1, gamma0, n)
    if not upper > 0.0:
        raise ValueError("cross-world correlation has a non-positive upper bound")
    return float(rng.uniform(0.0, upper))


# ---------------------------------------------------------------------------
# equicorrelated gaussian log likelihood (one cluster, one world)
# ---------------------------------------------------------------------------

def equicorr_loglik(z: np.ndarray, gamma: float) -> float:
    n = z.shape[0]
    one_mg = 1.0 - gamma
    trail = 1.0 + (n - 1) * gamma
    if one_mg <= 0 or trail <= 0:
        return -np.inf
    s1 = z.sum()
    s2 = float(z @ z)
    logdet = (n - 1) * np.log(one_mg) + np.log(trail)
    quad = s2 / one_mg - gamma * s1 * s1 / (one_mg * trail)
    return -0.5 * (n * np.log(2.0 * np.pi) + logdet + quad)


def _arm_loglik(z_clusters: list[np.ndarray], gamma: float) -> float:
    return sum(equicorr_loglik(z, gamma) for z in z_clusters)


def mh_update_gammas(rng, z_treated: list[np.ndarray],
                     z_control: list[np.ndarray],
                     n_steps: int = 2000, n_burn: int = 500):
    """Independence Metropolis for the two within-world correlations.

    Prior and proposal are both Unif(0, 1), so the acceptance ratio is a
    pure likelihood ratio. Returns the retained draws for each parameter.
    """
    draws = np.empty((n_steps - n_burn, 2))
    cur = np.array([0.5, 0.5])
    cur_ll = np.array([_arm_loglik(z_treated, cur[0]),
                       _arm_loglik(z_control, cur[1])])
    for step in range(n_steps):
        for a, z_arm in enumerate((z_treated, z_control)):
            prop = rng.uniform(0.0, 1.0)
            prop_ll = _arm_loglik(z_arm, prop)
            if np.log(rng.random()) < prop_ll - cur_ll[a]:
                cur[a] = prop
                cur_ll[a] = prop_ll
        if step >= n_burn:
            draws[step - n_burn] = cur
    return draws


# ---------------------------------------------------------------------------
# mixture marginal for the confounder and the cross-world conditional
# ---------------------------------------------------------------------------

def mixture_weights(pi: np.ndarray, w_theta: np.ndarray) -> np.ndarray:
    """Marginal outcome-class weights: the cluster level integrates out."""
    return pi @ w_theta


def mixture_marginal_cdf(d_values, omega, means, sds):
    """F(d) for the confounder mixture; means is (n, L), one row per unit."""
    return kernels.mixture_cdf(np.asarray(d_values, float), omega, means, sds)


def invert_mixture_cdf(u, omega, means, sds, tol=CDF_INVERSION_TOL):
    u = np.asarray(u, float)
    if ((u <= 0.0) | (u >= 1.0)).any():
        raise ValueError("cannot invert the mixture CDF at u in {0, 1}")
    return kernels.invert_mixture_cdf(u, omega, means, sds, tol)


def conditional_cross_world(z1: np.ndarray, params: CopulaParams):
    """Mean and covariance (as an (a, b) pair) of the control-world scores
    given the treated-world scores for one cluster."""
    n = z1.shape[0]
    if not check_pd_condition(params, n):
        raise ValueError("copula parameters violate positive definiteness")
    rs = rho_star(params)
    r1 = (1.0 - params.gamma1, params.gamma1)
    r0 = (1.0 - params.gamma0, params.gamma0)
    b10 = (params.rho - rs, rs)
    r1_inv = eq_inv(r1, n)
    gain = eq_mul(b10, r1_inv, n)
    mean = eq_apply(gain, z1)
    cov = tuple(np.subtract(r0, eq_mul(gain, b10, n)))
    return mean, cov


def sample_cross_world(rng, z1: np.ndarray, params: CopulaParams) -> np.ndarray:
    mean, cov = conditional_cross_world(z1, params)
    return sample_eq_normal(rng, mean, cov, z1.shape[0])


def scores_from_uniforms(u: np.ndarray) -> np.ndarray:
    return ndtri(np.clip(u, 1e-15, 1.0 - 1e-15))


def uniforms_from_scores(z: np.ndarray) -> np.ndarray:
    return ndtr(z)
