"""Benchmark data generators (scenarios S1 to S7), the Monte Carlo ground
truth for the mediation estimands, a parametric one-class baseline fit, and
frequentist evaluation of repeated-replicate results."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ClusterDataset, ClusterRecord
from .gcomp import ESTIMAND_NAMES

# cross-world mediator correlation constants
SIGMA2 = 1.0
ALPHA0 = 0.05  # D-M, same world, same unit
ALPHA1 = 0.03  # same variable across worlds, same unit
ALPHA2 = 0.05  # D-M across worlds, same unit
RHO0 = 0.03    # same variable, same world, different units
RHO1 = 0.0     # D-M, same world, different units

_R_BLOCK = np.array([
    [1.0, ALPHA1, ALPHA0, ALPHA2],
    [ALPHA1, 1.0, ALPHA2, ALPHA0],
    [ALPHA0, ALPHA2, 1.0, ALPHA1],
    [ALPHA2, ALPHA0, ALPHA1, 1.0],
])
_S_BLOCK = np.array([
    [RHO0, 0.0, RHO1, 0.0],
    [0.0, RHO0, 0.0, RHO1],
    [RHO1, 0.0, RHO0, 0.0],
    [0.0, RHO1, 0.0, RHO0],
])

_G_PROBS = np.array([0.2, 0.3, 0.5])
_G_WEIGHTS = (np.array([0.5, 0.5]), np.array([0.5, 0.25, 0.25]),
              np.array([0.5, 0.25, 0.25]))
_T_DF = 1.5


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    n_clusters: int
    n_noise_covariates: int  # extra independent N(0,1) covariates
    bimodal: bool            # S2 cluster-size and covariate mixtures
    linear_outcome: bool     # S7 gaussian linear outcome

    @property
    def p(self) -> int:
        return 3 + self.n_noise_covariates


_SCENARIOS = {
    "S1": ScenarioSpec("S1", 40, 0, False, False),
    "S2": ScenarioSpec("S2", 40, 0, True, False),
    "S3": ScenarioSpec("S3", 40, 5, False, False),
    "S4": ScenarioSpec("S4", 40, 12, False, False),
    "S5": ScenarioSpec("S5", 20, 0, False, False),
    "S6": ScenarioSpec("S6", 80, 0, False, False),
    "S7": ScenarioSpec("S7", 40, 0, False, True),
}


def scenario(name: str, n_clusters: int | None = None) -> ScenarioSpec:
    if name not in _SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; choose from "
                       f"{sorted(_SCENARIOS)}")
    spec = _SCENARIOS[name]
    if n_clusters is not None:
        spec = ScenarioSpec(spec.name, n_clusters, spec.n_noise_covariates,
                            spec.bimodal, spec.linear_outcome)
    return spec


# ---------------------------------------------------------------------------
# covariates, sizes and the cross-world mediator draw
# ---------------------------------------------------------------------------

def _sample_size(rng, spec) -> int:
    if spec.bimodal:
        lam = 15.0 if rng.random() < 0.8 else 30.0
        n = 0
        while n == 0:
            n = int(rng.poisson(lam))
        return n
    return int(rng.integers(20, 41))


def _mvn_cov(off: float) -> np.ndarray:
    c = np.full((3, 3), off)
    np.fill_diagonal(c, 1.0)
    return c


def _sample_covariates(rng, spec, n) -> np.ndarray:
    if spec.bimodal:
        X = np.empty((n, 3))
        lo = rng.random(n) < 0.8
        X[lo] = rng.multivariate_normal([-1.0, -1.5, -0.5], _mvn_cov(0.2),
                                        size=int(lo.sum()))
        X[~lo] = rng.multivariate_normal([1.5, 1.0, 0.5], _mvn_cov(0.4),
                                         size=int((~lo).sum()))
    else:
        X = rng.multivariate_normal([0.5, 0.0, -0.5], _mvn_cov(0.2), size=n)
    if spec.n_noise_covariates:
        X = np.hstack([X, rng.standard_normal((n, spec.n_noise_covariates))])
    return X


def _mediator_location(a, n, X, V):
    return 1.5 * (-2.0 + 2.0 * a + (0.5 + 0.5 * a) * n / 50.0
                  + 0.5 * X[:, 0] - 0.5 * X[:, 1] + X[:, 1] + 0.5 * V)


def _sample_cross_world(rng, n, X, V):
    """Joint draw of (D(1), D(0), M(1), M(0)) for all n units of a cluster."""
    th_d1 = _mediator_location(1, n, X, V)
    th_d0 = _mediator_location(0, n, X, V)
    mean = np.empty(4 * n)
    mean[0::4] = th_d1
    mean[1::4] = th_d0
    mean[2::4] = -th_d1
    mean[3::4] = -th_d0
    cov = SIGMA2 * (np.kron(np.eye(n), _R_BLOCK)
                    + np.kron(np.ones((n, n)) - np.eye(n), _S_BLOCK))
    draw = mean + np.linalg.cholesky(cov) @ rng.standard_normal(4 * n)
    return draw[0::4], draw[1::4], draw[2::4], draw[3::4]


# ---------------------------------------------------------------------------
# outcome locations
# ---------------------------------------------------------------------------

def _mixture_locations(a, n, X, V, d, m, dbar, mbar):
    x1, x2, x3 = X[:, 0], X[:, 1], X[:, 2]
    quad = 0.1 * x1 ** 2 + 0.1 * x2 ** 2 + 0.1 * x1 * x2
    t1 = (1.0 + a + (0.5 + 0.5 * a) * n / 50.0 + 0.5 * dbar - 0.5 * mbar
          + d - m + 0.3 * x1 * a - 0.3 * x2 * a + quad + 0.5 * x3 + 0.5 * V)
    t2 = (-1.0 - a - (0.5 + 0.5 * a) * n / 50.0 - 0.5 * dbar + 0.5 * mbar
          - d + m - 0.3 * x1 * a + 0.3 * x2 * a - quad + 0.5 * x3 + 0.5 * V)
    t3 = (1.0 + a + (0.3 + 0.3 * a) * n / 50.0 + 0.3 * dbar - 0.3 * mbar
          + d - m + 0.1 * x1 * a - 0.1 * x2 * a + quad + 0.3 * x3 + 0.3 * V)
    t4 = (-1.0 - a - (0.3 + 0.3 * a) * n / 50.0 - 0.3 * dbar + 0.3 * mbar
          - d + m - 0.1 * x1 * a + 0.1 * x2 * a - quad + 0.3 * x3 + 0.3 * V)
    return [t1, t2, t3, t4, -0.5 * t1, -t2, -1.5 * t3, -2.0 * t4]


_COMPONENTS = ((0, 1), (2, 3, 4), (5, 6, 7))


def _linear_location(a, n, X, d, m, dbar, mbar):
    return (1.0 + a + 0.5 * dbar - 0.5 * mbar + 0.5 * d - 0.5 * m
            + 0.3 * X[:, 0] - 0.3 * X[:, 1] + 0.3 * X[:, 2] + 0.3 * n)


def expected_outcome(spec, a, n, X, V, d, m, dbar, mbar):
    """E[Y | inputs]: mixture components are location t's with df > 1, so
    their means equal the locations."""
    if spec.linear_outcome:
        return _linear_location(a, n, X, d, m, dbar, mbar)
    locs = _mixture_locations(a, n, X, V, d, m, dbar, mbar)
    out = np.zeros_like(locs[0])
    for g, comps in enumerate(_COMPONENTS):
        w = _G_WEIGHTS[g]
        out += _G_PROBS[g] * sum(wc * locs[c] for wc, c in zip(w, comps))
    return out


def _sample_outcome(rng, spec, a, n, X, V, d, m):
    dbar, mbar = d.mean(), m.mean()
    if spec.linear_outcome:
        loc = _linear_location(a, n, X, d, m, dbar, mbar)
        return loc + rng.standard_normal(n)
    locs = _mixture_locations(a, n, X, V, d, m, dbar, mbar)
    g = rng.choice(3, p=_G_PROBS)
    comps = _COMPONENTS[g]
    pick = rng.choice(len(comps), size=n, p=_G_WEIGHTS[g])
    loc = np.choose(pick, [locs[c] for c in comps])
    return loc + rng.standard_t(_T_DF, size=n)


# ---------------------------------------------------------------------------
# dataset generation and the estimand ground truth
# ---------------------------------------------------------------------------

def generate_dataset(rng: np.random.Generator, spec: ScenarioSpec) -> ClusterDataset:
    clusters = []
    for i in range(spec.n_clusters):
        n = _sample_size(rng, spec)
        X = _sample_covariates(rng, spec, n)
        V = float(rng.normal(3.0 * n / 50.0, 1.0))
        a = int(rng.random() < 0.5)
        d1, d0, m1, m0 = _sample_cross_world(rng, n, X, V)
        d, m = (d1, m1) if a == 1 else (d0, m0)
        y = _sample_outcome(rng, spec, a, n, X, V, d, m)
        clusters.append(ClusterRecord(
            id=f"c{i:03d}", treatment=a, cluster_covariates=np.array([V]),
            X=X, D=d, M=m, Y=y))
    return ClusterDataset(tuple(clusters))


def _mixed_mean(own: np.ndarray, other: np.ndarray) -> np.ndarray:
    """Per-unit cluster mean where the unit keeps its own-world value and
    every other unit contributes the other-world value."""
    n = own.shape[0]
    return (own + other.sum() - other) / n


def truth_oracle(rng: np.random.Generator, spec: ScenarioSpec,
                 n_mc_clusters: int = 20000) -> dict:
    """Monte Carlo ground truth of the estimands under the generator."""
    regimes = np.zeros(4)
    for _ in range(n_mc_clusters):
        n = _sample_size(rng, spec)
        X = _sample_covariates(rng, spec, n)
        V = float(rng.normal(3.0 * n / 50.0, 1.0))
        d1, d0, m1, m0 = _sample_cross_world(rng, n, X, V)
        d1bar, d0bar = d1.mean(), d0.mean()
        m1bar, m0bar = m1.mean(), m0.mean()
        mix10 = _mixed_mean(m1, m0)  # own world 1, others world 0
        y111 = expected_outcome(spec, 1, n, X, V, d1, m1, d1bar, m1bar).mean()
        y110 = expected_outcome(spec, 1, n, X, V, d1, m1, d1bar, mix10).mean()
        y100 = expected_outcome(spec, 1, n, X, V, d1, m0, d1bar, m0bar).mean()
        y000 = expected_outcome(spec, 0, n, X, V, d0, m0, d0bar, m0bar).mean()
        regimes += np.array([y111, y110, y100, y000])
    y111, y110, y100, y000 = regimes / n_mc_clusters
    return {"TE": y111 - y000, "NDE": y100 - y000, "NIE": y111 - y100,
            "SME": y111 - y110, "IME": y110 - y100}


# ---------------------------------------------------------------------------
# parametric baseline: the same sampler collapsed to one class per level
# ---------------------------------------------------------------------------

def fit_parametric_baseline(rng, flat, hyper, config):
    from .gibbs import run_chain
    from .model import TruncationLevels
    return run_chain(rng, flat, hyper, TruncationLevels(1, 1, 1), config)


def compute_lpml(samples) -> float:
    """Log pseudo marginal likelihood: per-observation conditional predictive
    ordinates via the harmonic mean of per-iteration likelihoods. Accepts
    either posterior draws or a raw (n_iter, n_obs) likelihood matrix."""
    if isinstance(samples, np.ndarray):
        liks = samples
    else:
        liks = np.array([s.indiv_lik for s in samples])  # (n_iter, n_obs)
    zero = np.where((liks <= 0.0).any(axis=0))[0]
    if zero.size:
        raise ValueError(f"zero likelihood for observation {int(zero[0])}")
    cpo = 1.0 / np.mean(1.0 / liks, axis=0)
    return float(np.log(cpo).sum())


# ---------------------------------------------------------------------------
# evaluation across replicates
# ---------------------------------------------------------------------------

def evaluate(estimates: dict, truth: dict) -> dict:
    """Bias, RMSE, average interval length and coverage per estimand.

    estimates maps name -> dict with arrays "mean", "lo", "hi" across
    replicates; truth maps name -> scalar.
    """
    report = {}
    for name in ESTIMAND_NAMES:
        if name not in estimates:
            continue
        est = estimates[name]
        mean = np.asarray(est["mean"], float)
        lo = np.asarray(est["lo"], float)
        hi = np.asarray(est["hi"], float)
        t = truth[name]
        report[name] = {
            "bias": float(mean.mean() - t),
            "rmse": float(np.sqrt(np.mean((mean - t) ** 2))),
            "avg_length": float(np.mean(hi - lo)),
            "coverage": float(np.mean((lo <= t) & (t <= hi))),
        }
    return report
