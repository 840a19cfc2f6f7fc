"""End-to-end acceptance checks.

Each test here is one release criterion and prints a single PASS line with
the measured numbers when it holds; a failure shows the same numbers through
the assertion message. The simulation study test is long (tens of minutes on
one core); run the file with -v to see one line per criterion.
"""

import os
import time
from multiprocessing import Pool

import numpy as np
import pytest
from scipy import stats

from caedp import copula, gcomp, simbench
from caedp.cli import _simulate_replicate
from caedp.data import ClusterDataset, ClusterRecord, DesignSpec, flatten
from caedp.gibbs import McmcConfig, gibbs_sweep, init_state, run_chain
from caedp.model import (BaseMeasureHyper, ConcentrationParams,
                         TruncationLevels, corr_phi, corr_theta,
                         empirical_hyperparameters, truncation_bound,
                         tie_prob_joint, tie_prob_phi, tie_prob_theta)

from test_gibbs import empty_flat, make_hyper, sample_dataset_from_state
from test_model_mc import mc_tie_and_corr

SEED = 20260826


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    print(line)
    assert ok, line


def test_simulation_study_scaled_replication():
    """Repeated-sampling quality of the spillover and individual mediation
    estimates on the linear-outcome scenario."""
    start = time.monotonic()
    n_rep = 20
    workers = min(8, os.cpu_count() or 1)
    jobs = [(("S7", 40), SEED, rep, 1000, 500, 1, (15, 15, 15), 100)
            for rep in range(n_rep)]
    if workers > 1:
        with Pool(workers) as pool:
            summaries = pool.map(_simulate_replicate, jobs)
    else:
        summaries = [_simulate_replicate(j) for j in jobs]
    truth_ss = np.random.SeedSequence(entropy=SEED, spawn_key=(10 ** 6,))
    truth = simbench.truth_oracle(np.random.default_rng(truth_ss),
                                  simbench.scenario("S7"), 100_000)
    estimates = {
        name: {metric: np.array([s[name][metric] for s in summaries])
               for metric in ("mean", "lo", "hi")}
        for name in gcomp.ESTIMAND_NAMES}
    rep = simbench.evaluate(estimates, truth)
    elapsed = (time.monotonic() - start) / 60.0
    ok = True
    parts = []
    for name in ("SME", "NIE"):
        r = rep[name]
        ok &= (abs(r["bias"]) <= 0.15 and r["rmse"] <= 0.8
               and r["coverage"] >= 0.80)
        parts.append(f"{name} bias {r['bias']:+.3f} rmse {r['rmse']:.3f} "
                     f"cp {r['coverage']:.2f}")
    report("simulation study (20 reps, linear scenario)", ok,
           "; ".join(parts) + f"; {elapsed:.1f} min on {workers} worker(s)")


def test_prior_tie_probabilities_and_correlations():
    start = time.monotonic()
    ok = True
    parts = []
    for i, (a, t, f) in enumerate([(0.5, 0.5, 0.5), (1.0, 1.0, 1.0),
                                   (2.0, 1.0, 0.5)]):
        rng = np.random.default_rng(1000 + i)
        est = mc_tie_and_corr(rng, a, t, f)
        targets = {"tie_theta": tie_prob_theta(a, t),
                   "tie_phi": tie_prob_phi(a, t, f),
                   "tie_joint": tie_prob_joint(a, t, f),
                   "corr_theta": corr_theta(a, t),
                   "corr_phi": corr_phi(a, t, f)}
        worst = max(abs(est[k][0] - v) / est[k][1]
                    for k, v in targets.items())
        ok &= worst <= 3.0
        parts.append(f"({a},{t},{f}) worst {worst:.2f} se")
    elapsed = time.monotonic() - start
    ok &= elapsed <= 120.0
    report("prior tie/correlation Monte Carlo", ok,
           "; ".join(parts) + f"; {elapsed:.0f}s")


def test_truncation_bound_and_tail_mass():
    params = ConcentrationParams(1.0, 1.0, 1.0)
    ok = True
    parts = []
    for k in (5, 10, 15):
        got = truncation_bound(params, TruncationLevels(k, k, k))
        ok &= got == 3.0 * 2.0 ** -k
        parts.append(f"K={k} bound {got:.3e}")
    # empirical proxy: mean leftover stick mass per level across prior draws.
    # individual draws fluctuate above the bound, so the mean is compared
    # with a three-standard-error allowance.
    rng = np.random.default_rng(SEED)
    n = 10_000
    for k in (5, 10, 15):
        tails = np.prod(1.0 - rng.beta(1.0, 1.0, size=(n, 3, k)),
                        axis=2).sum(axis=1)
        bound = 3.0 * 2.0 ** -k
        allowance = 3.0 * tails.std(ddof=1) / np.sqrt(n)
        ok &= tails.mean() <= bound + allowance
        parts.append(f"tail@{k} {tails.mean():.2e} vs {bound:.2e}")
    report("truncation bound", ok, "; ".join(parts))


def test_pd_boundary_sweep():
    rng = np.random.default_rng(SEED + 1)
    ok = True
    worst_in, worst_out = np.inf, -np.inf
    for _ in range(200):
        g1, g0 = rng.random(2) * 0.95
        n = int(rng.integers(2, 12))
        bound = copula.rho_upper_bound(g1, g0, n)
        for side, rho in ((1, bound * (1 - 1e-3)), (-1, bound * (1 + 1e-3))):
            omega = copula.build_omega(copula.CopulaParams(g1, g0, rho), n)
            ev = np.linalg.eigvalsh(omega).min()
            if side == 1:
                ok &= ev > 0
                worst_in = min(worst_in, ev)
            else:
                ok &= ev <= 0
                worst_out = max(worst_out, ev)
    report("positive-definiteness boundary sweep", ok,
           f"min eig inside {worst_in:.2e}, max eig outside {worst_out:.2e}")


def test_copula_conditional_against_dense_solver():
    rng = np.random.default_rng(SEED + 2)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 9))
        g1, g0 = rng.random(2) * 0.9
        rho = rng.uniform(-1, 1) * copula.rho_upper_bound(g1, g0, n) * 0.95
        params = copula.CopulaParams(g1, g0, rho)
        z1 = rng.standard_normal(n)
        mean, (ca, cb) = copula.conditional_cross_world(z1, params)
        omega = copula.build_omega(params, n)
        s11, s10 = omega[:n, :n], omega[n:, :n]
        s00 = omega[n:, n:]
        solve = np.linalg.solve(s11, z1)
        dense_mean = s10 @ solve
        dense_cov = s00 - s10 @ np.linalg.solve(s11, s10.T)
        cov = copula.eq_mat(ca, cb, n)
        worst = max(worst, np.abs(mean - dense_mean).max(),
                    np.abs(cov - dense_cov).max())
    report("copula conditional vs dense oracle", worst <= 1e-10,
           f"max abs deviation {worst:.2e}")


def test_gibbs_prior_recovery_and_joint_invariance():
    design = DesignSpec(p=1, q=1)
    # (i) empty dataset leaves the concentration at its prior
    flat = empty_flat(design)
    hyper = make_hyper(design, conc_shape=2.0, conc_rate=2.0)
    samples = run_chain(np.random.default_rng(SEED + 3), flat, hyper,
                        TruncationLevels(3, 3, 3), McmcConfig(200, 5000))
    alphas = np.array([s.alpha_star for s in samples])
    p_prior = stats.kstest(alphas, stats.gamma(a=2.0, scale=0.5).cdf).pvalue

    # (ii) successive-conditional simulation on a 3-cluster miniature
    trunc = TruncationLevels(2, 2, 2)
    rng = np.random.default_rng(SEED + 4)
    state = init_state(rng, flat, hyper, trunc)
    rec = np.empty((2000, 3))
    for cycle in range(2000):
        data, (zn, zy, zx) = sample_dataset_from_state(rng, state, design, 3)
        state.zn, state.zy, state.zx = zn, zy, zx
        gibbs_sweep(rng, data, state, hyper, trunc)
        rec[cycle] = (state.alpha_star, state.lam[0], state.beta_y[0, 0])
    thin = rec[::4]
    p_geweke = min(
        stats.kstest(thin[:, 0], stats.gamma(a=2.0, scale=0.5).cdf).pvalue,
        stats.kstest(thin[:, 1], stats.gamma(a=25.0, scale=1.0).cdf).pvalue,
        stats.kstest(thin[:, 2], stats.norm(0.0, np.sqrt(0.5)).cdf).pvalue)
    ok = p_prior > 0.01 and p_geweke > 0.01
    report("Gibbs prior recovery and joint invariance", ok,
           f"prior KS p {p_prior:.3f}; worst joint-test KS p {p_geweke:.3f}")


def test_estimand_identities_across_scenarios_and_modes():
    worst = 0.0
    modes = (gcomp.INDEPENDENT, gcomp.SensitivitySpec(0.3, 0.2, "prior"))
    for name in ("S1", "S2", "S3", "S4", "S5", "S6", "S7"):
        spec = simbench.scenario(name, n_clusters=6)
        ds = simbench.generate_dataset(np.random.default_rng(SEED + 5), spec)
        design = DesignSpec(p=ds.p, q=ds.q)
        flat = flatten(ds, design)
        hyper = empirical_hyperparameters(flat)
        samples = run_chain(np.random.default_rng(SEED + 6), flat, hyper,
                            TruncationLevels(3, 3, 3), McmcConfig(30, 10))
        for sens in modes:
            draws = gcomp.aggregate_posterior(
                np.random.SeedSequence(SEED + 7), samples, design,
                gcomp.GcompConfig(n_synthetic=25), sens)
            worst = max(worst,
                        np.abs(draws.te - draws.nde - draws.nie).max(),
                        np.abs(draws.nie - draws.sme - draws.ime).max())
    report("estimand decomposition identities", worst <= 1e-10,
           f"max violation {worst:.2e} over 7 scenarios x 2 modes")


def _null_mediation_dataset(rng, design, n_clusters):
    """Data where the confounder enters neither the mediator nor the
    outcome: the indirect pathway is exactly zero."""
    hyper = make_hyper(design)
    state = init_state(rng, empty_flat(design), hyper, TruncationLevels(1, 1, 1))
    state.lam = np.array([15.0])
    state.beta_d = np.array([[0.3, 0.5, 0.0, 0.2, 0.4]])
    state.beta_m = np.array([[0.5, 0.7, 0.0, 0.3, -0.2, 0.0, 0.0]])
    state.beta_y = np.array([[1.0, 0.8, 0.0, 0.2, 0.3, 0.0, 0.0, 0.0, 0.0]])
    state.sig2_d = state.sig2_m = state.sig2_y = np.array([1.0])
    state.eta_mean, state.eta_var = np.zeros((1, 1)), np.ones((1, 1))
    state.phi_mean, state.phi_var = np.zeros((1, 1)), np.ones((1, 1))
    flat, _ = sample_dataset_from_state(rng, state, design, n_clusters)
    return flat


def test_sensitivity_null_stability():
    design = DesignSpec(p=1, q=1)
    rng = np.random.default_rng(SEED + 8)
    flat = _null_mediation_dataset(rng, design, 24)
    hyper = empirical_hyperparameters(flat)
    samples = run_chain(np.random.default_rng(SEED + 9), flat, hyper,
                        TruncationLevels(2, 2, 2), McmcConfig(200, 100))
    out = gcomp.run_sensitivity(np.random.SeedSequence(SEED + 10), samples,
                                flat, design,
                                gcomp.GcompConfig(n_synthetic=60),
                                n_mh_steps=400, n_mh_burn=100)
    diff = out["copula"].nie - out["baseline"].nie
    se = diff.std(ddof=1) / np.sqrt(diff.size)
    ok = abs(diff.mean()) < 2.0 * se or abs(diff.mean()) < 1e-3
    report("sensitivity null stability", ok,
           f"NIE mode difference {diff.mean():+.4f} (mc se {se:.4f})")


def test_lpml_arithmetic_and_model_comparison():
    exact1 = simbench.compute_lpml(np.array([[1.0], [3.0]]))
    exact2 = simbench.compute_lpml(np.full((5, 3), 2.0))
    ok = (abs(exact1 - np.log(1.5)) < 1e-12
          and abs(exact2 - 3 * np.log(2.0)) < 1e-12)

    spec = simbench.scenario("S2", n_clusters=20)
    ds = simbench.generate_dataset(np.random.default_rng(SEED + 11), spec)
    design = DesignSpec(p=ds.p, q=ds.q)
    flat = flatten(ds, design)
    hyper = empirical_hyperparameters(flat)
    rich = run_chain(np.random.default_rng(SEED + 12), flat, hyper,
                     TruncationLevels(5, 5, 5), McmcConfig(300, 150))
    base = simbench.fit_parametric_baseline(
        np.random.default_rng(SEED + 13), flat, hyper, McmcConfig(300, 150))
    lp_rich = simbench.compute_lpml(rich)
    lp_base = simbench.compute_lpml(base)
    ok &= lp_rich > lp_base
    report("log pseudo marginal likelihood", ok,
           f"stub values exact; mixture {lp_rich:.1f} vs "
           f"one-class {lp_base:.1f} on bimodal data")
