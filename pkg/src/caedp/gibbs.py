"""Blocked Gibbs sampler for the truncated nested common-atoms model.

One sweep updates, in order: the latent confounder scores when D is binary,
the three levels of class indicators, the stick fractions, the concentration
parameters, and every family of atoms (cluster-size rates, cluster-covariate
locations, the three regression blocks, and the covariate locations).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ndtr, ndtri

from . import kernels
from .config import STICK_FRACTION_CLAMP
from .data import FlatData
from .model import (BaseMeasureHyper, ConcentrationParams, NigHyper,
                    RegressionHyper, StickWeights, TruncationLevels,
                    sticks_to_weights)


@dataclass
class McmcConfig:
    n_burn: int = 1000
    n_keep: int = 500
    thin: int = 1


@dataclass
class CaEdpState:
    """Full parameter state of the sampler."""

    v_pi: np.ndarray      # (K,) stick fractions, cluster level
    v_theta: np.ndarray   # (K, L)
    v_phi: np.ndarray     # (K, L, M)
    alpha_star: float
    alpha_theta: float
    alpha_phi: float
    lam: np.ndarray       # (K,) cluster-size rates
    eta_mean: np.ndarray  # (K, q)
    eta_var: np.ndarray   # (K, q)
    beta_d: np.ndarray    # (L, dim_d)
    sig2_d: np.ndarray    # (L,)
    beta_m: np.ndarray
    sig2_m: np.ndarray
    beta_y: np.ndarray
    sig2_y: np.ndarray
    phi_mean: np.ndarray  # (M, p)
    phi_var: np.ndarray   # (M, p)
    zn: np.ndarray        # (I,) cluster-class labels
    zy: np.ndarray        # (n_total,)
    zx: np.ndarray        # (n_total,)
    d_latent: np.ndarray | None = None  # (n_total,) probit scores, binary D

    def weights(self) -> StickWeights:
        return StickWeights(sticks_to_weights(self.v_pi),
                            sticks_to_weights(self.v_theta),
                            sticks_to_weights(self.v_phi))


@dataclass
class PosteriorSample:
    pi: np.ndarray
    w_theta: np.ndarray
    w_phi: np.ndarray
    alpha_star: float
    alpha_theta: float
    alpha_phi: float
    lam: np.ndarray
    eta_mean: np.ndarray
    eta_var: np.ndarray
    beta_d: np.ndarray
    sig2_d: np.ndarray
    beta_m: np.ndarray
    sig2_m: np.ndarray
    beta_y: np.ndarray
    sig2_y: np.ndarray
    phi_mean: np.ndarray
    phi_var: np.ndarray
    indiv_lik: np.ndarray  # per-individual likelihood, for the fit score


# ---------------------------------------------------------------------------
# initialisation: a draw from the prior
# ---------------------------------------------------------------------------

def _sample_regression_atoms(rng, hyper: RegressionHyper, L: int):
    sig2 = hyper.b_sigma / rng.gamma(hyper.a_sigma, size=L)
    chol = np.linalg.cholesky(hyper.sigma0)
    d = hyper.mu0.shape[0]
    beta = hyper.mu0[None, :] + rng.standard_normal((L, d)) @ chol.T
    return beta, sig2


def _sample_nig_atoms(rng, hyper: NigHyper, count: int):
    d = hyper.m.shape[0]
    var = hyper.b[None, :] / rng.gamma(hyper.a[None, :], size=(count, d))
    mean = hyper.m[None, :] + rng.standard_normal((count, d)) * np.sqrt(var / hyper.kappa[None, :])
    return mean, var


def init_state(rng: np.random.Generator, flat: FlatData,
               hyper: BaseMeasureHyper, trunc: TruncationLevels,
               binary_d: bool = False) -> CaEdpState:
    K, L, M = trunc.K, trunc.L, trunc.M
    a_star = rng.gamma(hyper.conc_shape, 1.0 / hyper.conc_rate)
    a_theta = rng.gamma(hyper.conc_shape, 1.0 / hyper.conc_rate)
    a_phi = rng.gamma(hyper.conc_shape, 1.0 / hyper.conc_rate)
    v_pi = rng.beta(1.0, a_star, size=K)
    v_theta = rng.beta(1.0, a_theta, size=(K, L))
    v_phi = rng.beta(1.0, a_phi, size=(K, L, M))
    lam = rng.gamma(hyper.size_shape, 1.0 / hyper.size_rate, size=K)
    eta_mean, eta_var = _sample_nig_atoms(rng, hyper.v, K)
    beta_d, sig2_d = _sample_regression_atoms(rng, hyper.reg_d, L)
    if binary_d:
        sig2_d = np.ones(L)
    beta_m, sig2_m = _sample_regression_atoms(rng, hyper.reg_m, L)
    beta_y, sig2_y = _sample_regression_atoms(rng, hyper.reg_y, L)
    phi_mean, phi_var = _sample_nig_atoms(rng, hyper.x, M)

    pi = sticks_to_weights(v_pi)
    wt = sticks_to_weights(v_theta)
    wf = sticks_to_weights(v_phi)
    zn = rng.choice(K, size=flat.n_clusters, p=pi)
    zy = np.empty(flat.n_total, dtype=np.int64)
    zx = np.empty(flat.n_total, dtype=np.int64)
    for i, sl in enumerate(flat.slices):
        k = zn[i]
        zy[sl] = rng.choice(L, size=sl.stop - sl.start, p=wt[k])
        for j in range(sl.start, sl.stop):
            zx[j] = rng.choice(M, p=wf[k, zy[j]])
    d_latent = None
    if binary_d:
        mu = np.einsum("nd,nd->n", flat.C_d, beta_d[zy])
        d_latent = _sample_probit_latent(rng, flat.D, mu)
    return CaEdpState(v_pi, v_theta, v_phi, a_star, a_theta, a_phi,
                      lam, eta_mean, eta_var, beta_d, sig2_d,
                      beta_m, sig2_m, beta_y, sig2_y, phi_mean, phi_var,
                      zn, zy, zx, d_latent)


# ---------------------------------------------------------------------------
# likelihood matrices
# ---------------------------------------------------------------------------

def _normal_loglik_matrix(y, C, beta, sig2):
    # (n, L): log N(y_j | C_j beta_l, sig2_l)
    resid = y[:, None] - C @ beta.T
    return -0.5 * (np.log(2.0 * np.pi * sig2)[None, :] + resid ** 2 / sig2[None, :])


def outcome_loglik_matrix(flat: FlatData, state: CaEdpState) -> np.ndarray:
    """(n_total, L) log likelihood of (D, M, Y) under each outcome class."""
    d_vals = state.d_latent if state.d_latent is not None else flat.D
    ll = _normal_loglik_matrix(d_vals, flat.C_d, state.beta_d, state.sig2_d)
    ll += _normal_loglik_matrix(flat.M, flat.C_m, state.beta_m, state.sig2_m)
    ll += _normal_loglik_matrix(flat.Y, flat.C_y, state.beta_y, state.sig2_y)
    return ll


def covariate_loglik_matrix(flat: FlatData, state: CaEdpState) -> np.ndarray:
    """(n_total, M) log likelihood of X under each covariate class."""
    diff = flat.X[:, None, :] - state.phi_mean[None, :, :]
    return (-0.5 * (np.log(2.0 * np.pi * state.phi_var)[None, :, :]
                    + diff ** 2 / state.phi_var[None, :, :])).sum(axis=2)


def cluster_level_loglik(flat: FlatData, state: CaEdpState) -> np.ndarray:
    """(I, K) log likelihood of (N_i, V_i) under each cluster class."""
    n = flat.sizes[:, None].astype(float)
    ll = n * np.log(state.lam)[None, :] - state.lam[None, :] - gammaln(n + 1.0)
    diff = flat.V[:, None, :] - state.eta_mean[None, :, :]
    ll += (-0.5 * (np.log(2.0 * np.pi * state.eta_var)[None, :, :]
                   + diff ** 2 / state.eta_var[None, :, :])).sum(axis=2)
    return ll


# ---------------------------------------------------------------------------
# indicator updates
# ---------------------------------------------------------------------------

def update_cluster_classes(rng, flat, state, ll_theta, ll_phi):
    if flat.n_clusters == 0:
        return
    w = state.weights()
    log_pi = np.log(np.maximum(w.pi, 1e-300))
    scores = kernels.individual_cluster_scores(
        ll_theta, ll_phi, np.log(np.maximum(w.w_theta, 1e-300)),
        np.log(np.maximum(w.w_phi, 1e-300)))
    per_cluster = np.add.reduceat(scores, [sl.start for sl in flat.slices], axis=0)
    logp = log_pi[None, :] + cluster_level_loglik(flat, state) + per_cluster
    dead = ~np.isfinite(logp.max(axis=1))
    if dead.any():
        raise FloatingPointError(
            f"all class weights underflowed for cluster index "
            f"{int(np.where(dead)[0][0])}")
    state.zn = kernels.sample_categorical_rows(logp, rng.random(flat.n_clusters))


def update_outcome_classes(rng, flat, state, ll_theta, ll_phi):
    if flat.n_total == 0:
        return
    w = state.weights()
    k_of_ind = state.zn[flat.cluster_index]
    logp = kernels.y_class_logprobs(
        ll_theta, ll_phi, np.log(np.maximum(w.w_theta, 1e-300)),
        np.log(np.maximum(w.w_phi, 1e-300)), k_of_ind)
    state.zy = kernels.sample_categorical_rows(logp, rng.random(flat.n_total))


def update_covariate_classes(rng, flat, state, ll_phi):
    if flat.n_total == 0:
        return
    w = state.weights()
    k_of_ind = state.zn[flat.cluster_index]
    logw = np.log(np.maximum(w.w_phi, 1e-300))[k_of_ind, state.zy]
    state.zx = kernels.sample_categorical_rows(logw + ll_phi,
                                               rng.random(flat.n_total))


# ---------------------------------------------------------------------------
# stick and concentration updates
# ---------------------------------------------------------------------------

def _stick_counts(labels, n_levels):
    eq = np.bincount(labels, minlength=n_levels).astype(float)
    gt = eq[::-1].cumsum()[::-1] - eq  # counts strictly above each level
    return eq, gt


def update_sticks(rng, flat, state, trunc):
    K, L, M = trunc.K, trunc.L, trunc.M
    eq, gt = _stick_counts(state.zn, K)
    state.v_pi = rng.beta(1.0 + eq, state.alpha_star + gt)
    state.v_pi[-1] = 1.0

    k_of_ind = state.zn[flat.cluster_index]
    eq_t = np.zeros((K, L))
    np.add.at(eq_t, (k_of_ind, state.zy), 1.0)
    gt_t = eq_t[:, ::-1].cumsum(axis=1)[:, ::-1] - eq_t
    state.v_theta = rng.beta(1.0 + eq_t, state.alpha_theta + gt_t)
    state.v_theta[:, -1] = 1.0

    eq_f = np.zeros((K, L, M))
    np.add.at(eq_f, (k_of_ind, state.zy, state.zx), 1.0)
    gt_f = eq_f[:, :, ::-1].cumsum(axis=2)[:, :, ::-1] - eq_f
    state.v_phi = rng.beta(1.0 + eq_f, state.alpha_phi + gt_f)
    state.v_phi[:, :, -1] = 1.0


def update_concentrations(rng, state, trunc, hyper):
    K, L, M = trunc.K, trunc.L, trunc.M
    a, b = hyper.conc_shape, hyper.conc_rate

    def draw(shape_add, sticks):
        s = np.minimum(sticks, STICK_FRACTION_CLAMP)
        rate = b - np.log1p(-s).sum()
        return rng.gamma(a + shape_add, 1.0 / rate)

    state.alpha_star = draw(K - 1, state.v_pi[:-1])
    state.alpha_theta = draw(K * (L - 1), state.v_theta[:, :-1])
    state.alpha_phi = draw(K * L * (M - 1), state.v_phi[:, :, :-1])


# ---------------------------------------------------------------------------
# atom updates
# ---------------------------------------------------------------------------

def update_size_rates(rng, flat, state, hyper, trunc):
    K = trunc.K
    n_k = np.bincount(state.zn, minlength=K).astype(float)
    sum_n = np.bincount(state.zn, weights=flat.sizes.astype(float), minlength=K)
    state.lam = rng.gamma(hyper.size_shape + sum_n,
                          1.0 / (hyper.size_rate + n_k))


def _update_nig_atoms(rng, values, labels, n_levels, hyper: NigHyper):
    d = values.shape[1]
    mean = np.empty((n_levels, d))
    var = np.empty((n_levels, d))
    for lev in range(n_levels):
        rows = values[labels == lev]
        n = rows.shape[0]
        if n == 0:
            m1, v1 = _sample_nig_atoms(rng, hyper, 1)
            mean[lev], var[lev] = m1[0], v1[0]
            continue
        xbar = rows.mean(axis=0)
        ss = ((rows - xbar) ** 2).sum(axis=0)
        kap_n = hyper.kappa + n
        m_n = (hyper.kappa * hyper.m + n * xbar) / kap_n
        a_n = hyper.a + 0.5 * n
        b_n = hyper.b + 0.5 * ss + 0.5 * hyper.kappa * n * (xbar - hyper.m) ** 2 / kap_n
        var[lev] = b_n / rng.gamma(a_n)
        mean[lev] = m_n + rng.standard_normal(d) * np.sqrt(var[lev] / kap_n)
    return mean, var


def update_cluster_covariate_atoms(rng, flat, state, hyper, trunc):
    state.eta_mean, state.eta_var = _update_nig_atoms(
        rng, flat.V, state.zn, trunc.K, hyper.v)


def update_covariate_atoms(rng, flat, state, hyper, trunc):
    state.phi_mean, state.phi_var = _update_nig_atoms(
        rng, flat.X, state.zx, trunc.M, hyper.x)


def _update_regression_block(rng, y, C, labels, n_levels,
                             hyper: RegressionHyper, beta, sig2,
                             fixed_variance: bool = False):
    sig0_inv = np.linalg.inv(hyper.sigma0)
    sig0_inv_mu = sig0_inv @ hyper.mu0
    d = hyper.mu0.shape[0]
    for lev in range(n_levels):
        mask = labels == lev
        n = int(mask.sum())
        if n == 0:
            if not fixed_variance:
                sig2[lev] = hyper.b_sigma / rng.gamma(hyper.a_sigma)
            beta[lev] = hyper.mu0 + np.linalg.cholesky(hyper.sigma0) @ rng.standard_normal(d)
            continue
        Cl, yl = C[mask], y[mask]
        if not fixed_variance:
            resid = yl - Cl @ beta[lev]
            sig2[lev] = (hyper.b_sigma + 0.5 * resid @ resid) / \
                rng.gamma(hyper.a_sigma + 0.5 * n)
        prec = sig0_inv + (Cl.T @ Cl) / sig2[lev]
        cov = np.linalg.inv(prec)
        mean = cov @ (sig0_inv_mu + (Cl.T @ yl) / sig2[lev])
        beta[lev] = mean + np.linalg.cholesky(cov) @ rng.standard_normal(d)


def update_regression_atoms(rng, flat, state, hyper, trunc):
    L = trunc.L
    d_vals = state.d_latent if state.d_latent is not None else flat.D
    _update_regression_block(rng, d_vals, flat.C_d, state.zy, L,
                             hyper.reg_d, state.beta_d, state.sig2_d,
                             fixed_variance=state.d_latent is not None)
    _update_regression_block(rng, flat.M, flat.C_m, state.zy, L,
                             hyper.reg_m, state.beta_m, state.sig2_m)
    _update_regression_block(rng, flat.Y, flat.C_y, state.zy, L,
                             hyper.reg_y, state.beta_y, state.sig2_y)


# ---------------------------------------------------------------------------
# latent probit scores for a binary confounder
# ---------------------------------------------------------------------------

def _sample_probit_latent(rng, d_obs, mu):
    u = rng.random(mu.shape[0])
    p0 = ndtr(-mu)  # P(latent <= 0)
    # map u into the allowed tail for each observation
    cdf_val = np.where(d_obs > 0.5, p0 + u * (1.0 - p0), u * p0)
    cdf_val = np.clip(cdf_val, 1e-15, 1.0 - 1e-15)
    return mu + ndtri(cdf_val)


def update_binary_d_latent(rng, flat, state):
    mu = np.einsum("nd,nd->n", flat.C_d, state.beta_d[state.zy])
    state.d_latent = _sample_probit_latent(rng, flat.D, mu)


# ---------------------------------------------------------------------------
# sweep and chain drivers
# ---------------------------------------------------------------------------

def gibbs_sweep(rng, flat, state, hyper, trunc):
    if state.d_latent is not None:
        update_binary_d_latent(rng, flat, state)
    ll_theta = outcome_loglik_matrix(flat, state)
    ll_phi = covariate_loglik_matrix(flat, state)
    update_cluster_classes(rng, flat, state, ll_theta, ll_phi)
    update_outcome_classes(rng, flat, state, ll_theta, ll_phi)
    update_covariate_classes(rng, flat, state, ll_phi)
    update_sticks(rng, flat, state, trunc)
    update_concentrations(rng, state, trunc, hyper)
    update_size_rates(rng, flat, state, hyper, trunc)
    update_cluster_covariate_atoms(rng, flat, state, hyper, trunc)
    update_regression_atoms(rng, flat, state, hyper, trunc)
    update_covariate_atoms(rng, flat, state, hyper, trunc)


def individual_likelihoods(flat, state) -> np.ndarray:
    """p(D, M, Y | class weights, atoms) for each individual, used for the
    pseudo marginal likelihood fit score."""
    w = state.weights()
    ll_theta = outcome_loglik_matrix(flat, state)
    wt = w.w_theta[state.zn[flat.cluster_index]]  # (n_total, L)
    m = ll_theta.max(axis=1, keepdims=True)
    return np.exp(m[:, 0]) * (wt * np.exp(ll_theta - m)).sum(axis=1)


def run_chain(rng: np.random.Generator, flat: FlatData,
              hyper: BaseMeasureHyper, trunc: TruncationLevels,
              config: McmcConfig, binary_d: bool = False,
              progress: bool = False) -> list[PosteriorSample]:
    state = init_state(rng, flat, hyper, trunc, binary_d=binary_d)
    samples: list[PosteriorSample] = []
    total = config.n_burn + config.n_keep * config.thin
    for it in range(total):
        try:
            gibbs_sweep(rng, flat, state, hyper, trunc)
        except Exception as exc:
            raise RuntimeError(f"sampler failed at sweep {it}: {exc}") from exc
        if it >= config.n_burn and (it - config.n_burn) % config.thin == 0:
            w = state.weights()
            samples.append(PosteriorSample(
                pi=w.pi, w_theta=w.w_theta, w_phi=w.w_phi,
                alpha_star=state.alpha_star, alpha_theta=state.alpha_theta,
                alpha_phi=state.alpha_phi, lam=state.lam.copy(),
                eta_mean=state.eta_mean.copy(), eta_var=state.eta_var.copy(),
                beta_d=state.beta_d.copy(), sig2_d=state.sig2_d.copy(),
                beta_m=state.beta_m.copy(), sig2_m=state.sig2_m.copy(),
                beta_y=state.beta_y.copy(), sig2_y=state.sig2_y.copy(),
                phi_mean=state.phi_mean.copy(), phi_var=state.phi_var.copy(),
                indiv_lik=individual_likelihoods(flat, state)))
    return samples
