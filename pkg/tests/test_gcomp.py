import numpy as np
import pytest

from caedp.data import DesignSpec
from caedp.gcomp import (ESTIMAND_NAMES, INDEPENDENT, GcompConfig,
                         SensitivitySpec, aggregate_posterior,
                         estimands_from_regimes, gcompute_draw,
                         run_sensitivity, summarize)
from caedp.gibbs import McmcConfig, PosteriorSample, run_chain

from test_gibbs import _tiny_flat, make_hyper
from caedp.model import TruncationLevels

DESIGN = DesignSpec(p=1, q=1)  # d-design [1, A, N, V, X]


def single_class_sample(beta_d, beta_m, beta_y, sig2_d=1.0, sig2_m=1.0,
                        lam=20.0, design=DESIGN):
    return PosteriorSample(
        pi=np.array([1.0]), w_theta=np.ones((1, 1)),
        w_phi=np.ones((1, 1, 1)), alpha_star=1.0, alpha_theta=1.0,
        alpha_phi=1.0, lam=np.array([lam]),
        eta_mean=np.zeros((1, design.q)), eta_var=np.ones((1, design.q)),
        beta_d=np.asarray(beta_d, float)[None, :],
        sig2_d=np.array([sig2_d]),
        beta_m=np.asarray(beta_m, float)[None, :],
        sig2_m=np.array([sig2_m]),
        beta_y=np.asarray(beta_y, float)[None, :],
        sig2_y=np.array([1.0]),
        phi_mean=np.zeros((1, design.p)), phi_var=np.ones((1, design.p)),
        indiv_lik=np.empty(0))


def linear_sample():
    # d: [1, A, N, V, X]; m appends [D, D_loo]; y appends [M, M_loo]
    beta_d = np.array([0.5, 0.8, 0.0, 0.3, -0.2])
    beta_m = np.array([-0.2, 0.6, 0.0, 0.1, 0.2, 0.4, 0.3])
    beta_y = np.array([1.0, 0.7, 0.0, -0.1, 0.2, 0.5, 0.2, -0.4, -0.3])
    return beta_d, beta_m, beta_y, single_class_sample(beta_d, beta_m, beta_y)


class TestRegimeArithmetic:
    def test_worked_example(self):
        est = estimands_from_regimes(
            {"y111": 3.0, "y110": 2.5, "y100": 2.0, "y000": 1.0})
        assert est == {"TE": 2.0, "NDE": 1.0, "NIE": 1.0,
                       "SME": 0.5, "IME": 0.5}

    def test_decomposition_identities(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            reg = {k: rng.normal() for k in ("y111", "y110", "y100", "y000")}
            est = estimands_from_regimes(reg)
            assert abs(est["TE"] - (est["NDE"] + est["NIE"])) <= 1e-10
            assert abs(est["NIE"] - (est["SME"] + est["IME"])) <= 1e-10

    def test_identities_hold_on_simulated_draw(self):
        _, _, _, sample = linear_sample()
        rng = np.random.default_rng(1)
        est = estimands_from_regimes(
            gcompute_draw(rng, sample, DESIGN, GcompConfig(n_synthetic=50)))
        assert abs(est["TE"] - (est["NDE"] + est["NIE"])) <= 1e-10
        assert abs(est["NIE"] - (est["SME"] + est["IME"])) <= 1e-10


class TestGcomputeDraw:
    def test_null_model_gives_exact_zero(self):
        # no treatment, confounder or mediator pathways into the outcome:
        # every regime mean coincides cluster by cluster
        beta_d = np.array([0.5, 0.8, 0.0, 0.3, -0.2])
        beta_m = np.array([-0.2, 0.6, 0.0, 0.1, 0.2, 0.4, 0.3])
        beta_y = np.array([1.0, 0.0, 0.1, -0.1, 0.2, 0.0, 0.0, 0.0, 0.0])
        sample = single_class_sample(beta_d, beta_m, beta_y)
        rng = np.random.default_rng(2)
        est = estimands_from_regimes(
            gcompute_draw(rng, sample, DESIGN, GcompConfig(n_synthetic=40)))
        for name in ESTIMAND_NAMES:
            assert abs(est[name]) < 1e-12

    def test_closed_form_te_and_nie(self):
        beta_d, beta_m, beta_y, sample = linear_sample()
        bd_a = beta_d[1]
        bm_a, bm_d = beta_m[1], beta_m[5] + beta_m[6]
        by_a, by_d, by_m = beta_y[1], beta_y[5] + beta_y[6], \
            beta_y[7] + beta_y[8]
        nie = by_m * (bm_a + bm_d * bd_a)
        te = by_a + by_d * bd_a + nie
        seed = np.random.SeedSequence(3)
        draws = aggregate_posterior(seed, [sample] * 60, DESIGN,
                                    GcompConfig(n_synthetic=200), INDEPENDENT)
        se_te = draws.te.std() / np.sqrt(draws.te.size)
        se_nie = draws.nie.std() / np.sqrt(draws.nie.size)
        assert draws.te.mean() == pytest.approx(te, abs=4 * se_te)
        assert draws.nie.mean() == pytest.approx(nie, abs=4 * se_nie)

    def test_duplicate_atoms_make_labels_irrelevant(self):
        # two classes carrying identical atoms: the class label consumed by
        # the sampler cannot change anything downstream
        beta_d, beta_m, beta_y, _ = linear_sample()

        def dup(pi0):
            s = single_class_sample(beta_d, beta_m, beta_y)
            return PosteriorSample(
                pi=np.array([pi0, 1 - pi0]),
                w_theta=np.ones((2, 1)), w_phi=np.ones((2, 1, 1)),
                alpha_star=1.0, alpha_theta=1.0, alpha_phi=1.0,
                lam=np.repeat(s.lam, 2),
                eta_mean=np.repeat(s.eta_mean, 2, axis=0),
                eta_var=np.repeat(s.eta_var, 2, axis=0),
                beta_d=np.repeat(s.beta_d, 2, axis=0),
                sig2_d=np.repeat(s.sig2_d, 2),
                beta_m=np.repeat(s.beta_m, 2, axis=0),
                sig2_m=np.repeat(s.sig2_m, 2),
                beta_y=np.repeat(s.beta_y, 2, axis=0),
                sig2_y=np.repeat(s.sig2_y, 2),
                phi_mean=np.repeat(s.phi_mean, 2, axis=0),
                phi_var=np.repeat(s.phi_var, 2, axis=0),
                indiv_lik=np.empty(0))

        cfg = GcompConfig(n_synthetic=30)
        r1 = gcompute_draw(np.random.default_rng(4), dup(0.3), DESIGN, cfg)
        r2 = gcompute_draw(np.random.default_rng(4), dup(0.9), DESIGN, cfg)
        for key in r1:
            assert r1[key] == pytest.approx(r2[key], abs=1e-12)

    def test_monte_carlo_error_shrinks_with_synthetic_count(self):
        _, _, _, sample = linear_sample()
        def spread(T, seed):
            seq = np.random.SeedSequence(seed)
            vals = [estimands_from_regimes(gcompute_draw(
                np.random.default_rng(c), sample, DESIGN,
                GcompConfig(n_synthetic=T)))["TE"] for c in seq.spawn(40)]
            return np.std(vals)
        ratio = spread(50, 5) / spread(200, 6)
        assert 1.3 < ratio < 3.0

    def test_explicit_zero_matches_independent_constant(self):
        _, _, _, sample = linear_sample()
        cfg = GcompConfig(n_synthetic=30)
        r1 = gcompute_draw(np.random.default_rng(7), sample, DESIGN, cfg,
                           SensitivitySpec(0.0, 0.0, 0.0))
        r2 = gcompute_draw(np.random.default_rng(7), sample, DESIGN, cfg,
                           INDEPENDENT)
        assert r1 == r2

    def test_inversion_failure_raises_after_threshold(self, monkeypatch):
        from caedp import gcomp as gc
        _, _, _, sample = linear_sample()

        def always_fail(u, w, means, sds, tol=1e-8):
            return np.zeros_like(u), np.zeros(u.shape, dtype=bool)

        monkeypatch.setattr(gc.copula, "invert_mixture_cdf", always_fail)
        with pytest.raises(RuntimeError, match="synthetic clusters"):
            gcompute_draw(np.random.default_rng(8), sample, DESIGN,
                          GcompConfig(n_synthetic=20))


class TestAggregation:
    def test_seed_determinism(self):
        _, _, _, sample = linear_sample()
        cfg = GcompConfig(n_synthetic=25)
        d1 = aggregate_posterior(np.random.SeedSequence(9), [sample] * 5,
                                 DESIGN, cfg)
        d2 = aggregate_posterior(np.random.SeedSequence(9), [sample] * 5,
                                 DESIGN, cfg)
        np.testing.assert_array_equal(d1.te, d2.te)
        np.testing.assert_array_equal(d1.ime, d2.ime)

    def test_summary_quantiles_and_sign_probability(self):
        from caedp.gcomp import EstimandDraws
        v = np.arange(1.0, 101.0)
        signs = np.concatenate([np.full(50, -1.0), np.full(50, 1.0)])
        draws = EstimandDraws(v, signs, v, v, v)
        out = summarize(draws)
        assert out["TE"]["mean"] == pytest.approx(v.mean())
        assert out["TE"]["lo"] == pytest.approx(np.quantile(v, 0.025))
        assert out["TE"]["hi"] == pytest.approx(np.quantile(v, 0.975))
        assert out["TE"]["pp_positive"] == 1.0
        assert out["NDE"]["pp_positive"] == 0.5

    def test_constant_draws_collapse_interval(self):
        from caedp.gcomp import EstimandDraws
        c = np.full(20, 2.5)
        out = summarize(EstimandDraws(c, c, c, c, c))
        assert out["TE"]["lo"] == out["TE"]["hi"] == out["TE"]["mean"] == 2.5


class TestSensitivity:
    def test_full_pass_smoke_and_shapes(self):
        design = DesignSpec(p=1, q=1)
        flat = _tiny_flat(design, [8, 9, 7, 8], treatments=[0, 1, 0, 1])
        hyper = make_hyper(design)
        samples = run_chain(np.random.default_rng(10), flat, hyper,
                            TruncationLevels(2, 2, 2), McmcConfig(30, 4))
        out = run_sensitivity(np.random.SeedSequence(11), samples, flat,
                              design, GcompConfig(n_synthetic=20),
                              n_mh_steps=200, n_mh_burn=50)
        assert set(out) == {"copula", "baseline", "gammas"}
        assert out["gammas"].shape == (4, 2)
        assert ((out["gammas"] > 0) & (out["gammas"] < 1)).all()
        for name, arr in out["copula"].as_dict().items():
            assert np.isfinite(arr).all()
        for name, arr in out["baseline"].as_dict().items():
            assert np.isfinite(arr).all()
