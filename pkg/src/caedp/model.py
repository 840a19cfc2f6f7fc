"""Core model quantities: nested stick-breaking weights, pairwise tie
probabilities, induced correlations, the covariance decomposition for the
random mixing measures, truncation error bounds, and empirical-Bayes
hyperparameter construction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import STICK_FRACTION_CLAMP


@dataclass(frozen=True)
class TruncationLevels:
    """Finite truncation of the three stick-breaking levels."""

    K: int  # cluster classes
    L: int  # outcome classes nested in each cluster class
    M: int  # covariate classes nested in each (cluster, outcome) class

    def __post_init__(self):
        if min(self.K, self.L, self.M) < 1:
            raise ValueError("truncation levels must be >= 1")


@dataclass(frozen=True)
class ConcentrationParams:
    alpha_star: float   # cluster level
    alpha_theta: float  # outcome level
    alpha_phi: float    # covariate level

    def __post_init__(self):
        if min(self.alpha_star, self.alpha_theta, self.alpha_phi) <= 0:
            raise ValueError("concentration parameters must be positive")


# ---------------------------------------------------------------------------
# tie probabilities and induced correlations
# ---------------------------------------------------------------------------

def tie_prob_theta(alpha_star: float, alpha_theta: float) -> float:
    """Probability that two clusters share an outcome class."""
    a, t = alpha_star, alpha_theta
    return (1.0 / (1.0 + a)) * (1.0 / (1.0 + t) + a / (1.0 + 2.0 * t))


def tie_prob_phi(alpha_star: float, alpha_theta: float, alpha_phi: float) -> float:
    """Probability that two clusters share a covariate class."""
    a, t, f = alpha_star, alpha_theta, alpha_phi
    lead = 1.0 / ((1.0 + a) * (1.0 + t))
    return lead * (1.0 / (1.0 + f) + (a + t + a * t) / (1.0 + 2.0 * f))


def tie_prob_joint(alpha_star: float, alpha_theta: float, alpha_phi: float) -> float:
    """Probability that two clusters share both the outcome and the
    covariate class."""
    a, t, f = alpha_star, alpha_theta, alpha_phi
    inner = 1.0 / ((1.0 + t) * (1.0 + f)) + a / ((1.0 + 2.0 * t) * (1.0 + 2.0 * f))
    return inner / (1.0 + a)


def corr_theta(alpha_star: float, alpha_theta: float) -> float:
    """Correlation between the outcome-level mixing measures of two
    clusters, evaluated at a common atom indicator."""
    a, t = alpha_star, alpha_theta
    return 1.0 - (a / (1.0 + a)) * (t / (1.0 + 2.0 * t))


def corr_phi(alpha_star: float, alpha_theta: float, alpha_phi: float) -> float:
    """Correlation between the covariate-level mixing measures of two
    clusters."""
    a, t, f = alpha_star, alpha_theta, alpha_phi
    return 1.0 - (a / (1.0 + a)) * (f / (1.0 + t + t * f + 2.0 * f))


def cross_measure_covariance(
    alpha_star: float,
    alpha_theta: float,
    alpha_phi: float,
    g_theta_a: float, g_theta_b: float, g_theta_ab: float,
    g_phi_a: float, g_phi_b: float, g_phi_ab: float,
) -> float:
    """Covariance between the joint mixing measures of two clusters on
    product sets A and B, in terms of the base-measure probabilities of
    A, B and their intersections at each level."""
    q_t = tie_prob_theta(alpha_star, alpha_theta)
    q_f = tie_prob_phi(alpha_star, alpha_theta, alpha_phi)
    q_tf = tie_prob_joint(alpha_star, alpha_theta, alpha_phi)
    delta_t = g_theta_ab - g_theta_a * g_theta_b
    delta_f = g_phi_ab - g_phi_a * g_phi_b
    return (q_t * g_phi_a * g_phi_b * delta_t
            + q_f * g_theta_a * g_theta_b * delta_f
            + q_tf * delta_t * delta_f)


# ---------------------------------------------------------------------------
# truncation error bounds
# ---------------------------------------------------------------------------

def truncation_bound(params: ConcentrationParams, trunc: TruncationLevels) -> float:
    """Upper bound on the total variation distance between the truncated
    and the full process prior, for a single cluster."""
    a, t, f = params.alpha_star, params.alpha_theta, params.alpha_phi
    return ((a / (1.0 + a)) ** trunc.K
            + (t / (1.0 + t)) ** trunc.L
            + (f / (1.0 + f)) ** trunc.M)


def marginal_truncation_bound(params: ConcentrationParams,
                              trunc: TruncationLevels,
                              total_n: int) -> float:
    """Bound on the marginal data densities: the single-cluster bound
    scaled by the total sample size."""
    return total_n * truncation_bound(params, trunc)


# ---------------------------------------------------------------------------
# stick-breaking weights
# ---------------------------------------------------------------------------

def sticks_to_weights(v: np.ndarray) -> np.ndarray:
    """Convert stick fractions along the last axis into simplex weights.

    The final fraction is forced to 1 so each weight vector sums to one at
    the truncation level.
    """
    v = np.asarray(v, dtype=float).copy()
    v[..., -1] = 1.0
    if v.shape[-1] == 1:
        return v
    v = np.minimum(v, STICK_FRACTION_CLAMP)
    log_remain = np.cumsum(np.log1p(-v[..., :-1]), axis=-1)
    w = np.empty_like(v)
    w[..., 0] = v[..., 0]
    w[..., 1:] = v[..., 1:] * np.exp(log_remain)
    w[..., -1] = np.exp(log_remain[..., -1])  # exact leftover mass
    return w


@dataclass
class StickWeights:
    """Weights of the three nested levels.

    pi          (K,)      cluster-class weights
    w_theta     (K, L)    outcome-class weights within each cluster class
    w_phi       (K, L, M) covariate-class weights within each pair
    """

    pi: np.ndarray
    w_theta: np.ndarray
    w_phi: np.ndarray


def sample_prior_weights(rng: np.random.Generator,
                         params: ConcentrationParams,
                         trunc: TruncationLevels) -> StickWeights:
    K, L, M = trunc.K, trunc.L, trunc.M
    v_pi = rng.beta(1.0, params.alpha_star, size=K)
    v_t = rng.beta(1.0, params.alpha_theta, size=(K, L))
    v_f = rng.beta(1.0, params.alpha_phi, size=(K, L, M))
    return StickWeights(sticks_to_weights(v_pi),
                        sticks_to_weights(v_t),
                        sticks_to_weights(v_f))


def sample_prior_draw(trunc: TruncationLevels, params: ConcentrationParams,
                      base: "BaseMeasureHyper", rng_seed):
    """One full draw from the truncated prior.

    Returns the stick weights, the shared atom tables, and the parameters of
    one simulated cluster (its class path plus the atoms that path selects).
    """
    rng = np.random.default_rng(rng_seed)
    weights = sample_prior_weights(rng, params, trunc)
    K, L, M = trunc.K, trunc.L, trunc.M

    def nig(hyper, count):
        d = hyper.m.shape[0]
        var = hyper.b[None, :] / rng.gamma(hyper.a[None, :], size=(count, d))
        mean = hyper.m[None, :] + rng.standard_normal((count, d)) * \
            np.sqrt(var / hyper.kappa[None, :])
        return mean, var

    def reg(hyper, count):
        sig2 = hyper.b_sigma / rng.gamma(hyper.a_sigma, size=count)
        chol = np.linalg.cholesky(hyper.sigma0)
        d = hyper.mu0.shape[0]
        beta = hyper.mu0[None, :] + rng.standard_normal((count, d)) @ chol.T
        return beta, sig2

    lam = rng.gamma(base.size_shape, 1.0 / base.size_rate, size=K)
    eta_mean, eta_var = nig(base.v, K)
    beta_d, sig2_d = reg(base.reg_d, L)
    beta_m, sig2_m = reg(base.reg_m, L)
    beta_y, sig2_y = reg(base.reg_y, L)
    phi_mean, phi_var = nig(base.x, M)
    atoms = {"lam": lam, "eta_mean": eta_mean, "eta_var": eta_var,
             "beta_d": beta_d, "sig2_d": sig2_d, "beta_m": beta_m,
             "sig2_m": sig2_m, "beta_y": beta_y, "sig2_y": sig2_y,
             "phi_mean": phi_mean, "phi_var": phi_var}

    k = int(rng.choice(K, p=weights.pi))
    l = int(rng.choice(L, p=weights.w_theta[k]))
    m = int(rng.choice(M, p=weights.w_phi[k, l]))
    cluster = {"k": k, "l": l, "m": m, "lam": lam[k],
               "eta": (eta_mean[k], eta_var[k]),
               "theta": (beta_d[l], sig2_d[l], beta_m[l], sig2_m[l],
                         beta_y[l], sig2_y[l]),
               "phi": (phi_mean[m], phi_var[m])}
    return weights, atoms, cluster


# ---------------------------------------------------------------------------
# base-measure hyperparameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegressionHyper:
    """Conjugate normal-inverse-gamma prior for one regression block."""

    mu0: np.ndarray      # (d,)
    sigma0: np.ndarray   # (d, d)
    a_sigma: float
    b_sigma: float


@dataclass(frozen=True)
class NigHyper:
    """Independent per-coordinate normal-inverse-gamma prior."""

    m: np.ndarray
    kappa: np.ndarray
    a: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class BaseMeasureHyper:
    reg_d: RegressionHyper
    reg_m: RegressionHyper
    reg_y: RegressionHyper
    x: NigHyper
    v: NigHyper
    size_shape: float  # gamma prior on the cluster-size rate
    size_rate: float
    conc_shape: float = 1.0  # gamma hyperprior on each concentration
    conc_rate: float = 1.0


def gprior_hyperparameters(C: np.ndarray, y: np.ndarray,
                           r_squared_target: float = 0.5) -> RegressionHyper:
    """Empirical-Bayes regression prior centred on the least-squares fit.

    The prior covariance is a g-prior with g chosen so the implied
    signal-to-noise matches ``r_squared_target``; a zero g falls back to
    1/N so the prior never degenerates to a point mass.
    """
    n, d = C.shape
    if n <= d + 1:
        raise ValueError("too few rows to calibrate the regression prior")
    gram = C.T @ C
    rank = np.linalg.matrix_rank(gram)
    if rank < d:
        raise ValueError(f"design matrix is rank deficient (rank {rank} < {d})")
    beta_hat = np.linalg.solve(gram, C.T @ y)
    resid = y - C @ beta_hat
    sse = float(resid @ resid)
    tss = float(np.sum((y - y.mean()) ** 2))
    if tss <= 0 or sse <= 0:
        raise ValueError("response has no residual variation; cannot set g-prior")
    r2 = 1.0 - sse / tss
    if r2 >= 1.0:
        raise ValueError("response has no residual variation; cannot set g-prior")
    g = max(0.0, r2 / (1.0 - r2) * (n - d - 1) / d)
    if g == 0.0:
        g = 1.0 / n
    sigma2_hat = sse / (n - d)
    sigma0 = g * sigma2_hat * np.linalg.inv(gram)
    return RegressionHyper(mu0=beta_hat, sigma0=sigma0,
                           a_sigma=2.0, b_sigma=sigma2_hat)


def moment_nig(values: np.ndarray) -> NigHyper:
    """Per-coordinate prior matched to sample moments; values is (n, d)."""
    values = np.atleast_2d(values)
    m = values.mean(axis=0)
    var = values.var(axis=0, ddof=1)
    var = np.maximum(var, 1e-8)
    d = values.shape[1]
    return NigHyper(m=m, kappa=np.full(d, 0.5), a=np.full(d, 2.0), b=var)


def empirical_hyperparameters(flat, binary_d: bool = False) -> BaseMeasureHyper:
    """Build all base-measure hyperparameters from the observed data."""
    if binary_d:
        # latent probit confounder: the d-regression prior is set on the
        # latent scale with unit residual variance
        d_dim = flat.C_d.shape[1]
        gram = flat.C_d.T @ flat.C_d
        if np.linalg.matrix_rank(gram) < d_dim:
            raise ValueError("d-regression design matrix is rank deficient")
        beta_hat = np.linalg.solve(gram, flat.C_d.T @ (2.0 * flat.D - 1.0))
        reg_d = RegressionHyper(mu0=beta_hat,
                                sigma0=np.linalg.inv(gram) * flat.n_total,
                                a_sigma=2.0, b_sigma=1.0)
    else:
        reg_d = gprior_hyperparameters(flat.C_d, flat.D)
    reg_m = gprior_hyperparameters(flat.C_m, flat.M)
    reg_y = gprior_hyperparameters(flat.C_y, flat.Y)
    nbar = float(flat.sizes.mean())
    return BaseMeasureHyper(
        reg_d=reg_d, reg_m=reg_m, reg_y=reg_y,
        x=moment_nig(flat.X), v=moment_nig(flat.V),
        size_shape=max(nbar, 1.0), size_rate=1.0,
    )
