"""Batch command-line front end.

Commands: fit, gcompute, sensitivity, simulate, diagnose. Each reads a flat
key=value config file; --seed overrides the config seed and --out the output
directory. Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from multiprocessing import Pool

import numpy as np

from . import gcomp, io, simbench
from .config import THREADS_ENV_VAR
from .data import DesignSpec, flatten
from .gibbs import McmcConfig, run_chain
from .model import TruncationLevels, empirical_hyperparameters


class ConfigError(ValueError):
    pass


_KNOWN_KEYS = {
    "input", "posterior", "likelihoods", "v_cols", "x_cols", "binary_d",
    "burn", "keep", "thin", "truncation_k", "truncation_l", "truncation_m",
    "synthetic_clusters", "gamma1", "gamma0", "rho", "mh_steps", "mh_burn",
    "scenario", "replicates", "truth_clusters", "seed", "out", "threads",
}


def _validate_keys(cfg: dict) -> None:
    unknown = set(cfg) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")


def _get(cfg, key, cast, default=None, required=False):
    if key not in cfg:
        if required:
            raise ConfigError(f"config key {key!r} is required")
        return default
    try:
        return cast(cfg[key])
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse "
                          f"{cfg[key]!r}") from None


def _schema(cfg) -> io.ColumnSchema:
    v_cols = tuple(_get(cfg, "v_cols", str, "V_1").split(","))
    x_cols = tuple(_get(cfg, "x_cols", str, "X_1,X_2,X_3").split(","))
    return io.ColumnSchema(v_cols=v_cols, x_cols=x_cols,
                           binary_d=bool(_get(cfg, "binary_d", int, 0)))


def _mcmc_config(cfg) -> McmcConfig:
    return McmcConfig(n_burn=_get(cfg, "burn", int, 1000),
                      n_keep=_get(cfg, "keep", int, 500),
                      thin=_get(cfg, "thin", int, 1))


def _truncation(cfg) -> TruncationLevels:
    return TruncationLevels(_get(cfg, "truncation_k", int, 15),
                            _get(cfg, "truncation_l", int, 15),
                            _get(cfg, "truncation_m", int, 15))


def _load_data(cfg):
    path = _get(cfg, "input", str, required=True)
    if not os.path.exists(path):
        raise ConfigError(f"input file {path!r} does not exist")
    schema = _schema(cfg)
    dataset = io.ingest_csv(path, schema)
    design = DesignSpec(p=dataset.p, q=dataset.q)
    return path, dataset, flatten(dataset, design), design


def _fit_samples(cfg, seed):
    path, dataset, flat, design = _load_data(cfg)
    hyper = empirical_hyperparameters(flat, binary_d=dataset.binary_d)
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    samples = run_chain(rng, flat, hyper, _truncation(cfg), _mcmc_config(cfg),
                        binary_d=dataset.binary_d)
    return path, flat, design, samples


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def run_fit(cfg, seed, out):
    start = time.monotonic()
    path, _, _, samples = _fit_samples(cfg, seed)
    io.write_posterior_csv(os.path.join(out, "posterior.csv"), samples)
    io.write_likelihood_csv(os.path.join(out, "likelihoods.csv"), samples)
    io.write_manifest(os.path.join(out, "manifest.txt"), "fit", cfg, seed,
                      path, time.monotonic() - start)


def run_gcompute(cfg, seed, out):
    start = time.monotonic()
    post_path = _get(cfg, "posterior", str)
    if post_path is not None:
        if not os.path.exists(post_path):
            raise ConfigError(f"posterior file {post_path!r} does not exist")
        samples = io.read_posterior_csv(post_path)
        design = DesignSpec(p=samples[0].phi_mean.shape[1],
                            q=samples[0].eta_mean.shape[1])
        input_path = post_path
    else:
        input_path, _, design, samples = _fit_samples(cfg, seed)
    gc_cfg = gcomp.GcompConfig(
        n_synthetic=_get(cfg, "synthetic_clusters", int, 100))
    rho_raw = cfg.get("rho", "0")
    rho = "prior" if rho_raw == "prior" else _get(cfg, "rho", float, 0.0)
    sens = gcomp.SensitivitySpec(gamma1=_get(cfg, "gamma1", float, 0.0),
                                 gamma0=_get(cfg, "gamma0", float, 0.0),
                                 rho=rho)
    seq = np.random.SeedSequence(seed).spawn(2)[1]
    draws = gcomp.aggregate_posterior(seq, samples, design, gc_cfg, sens)
    io.write_estimand_csv(os.path.join(out, "estimands.csv"), draws)
    io.write_summary_table(os.path.join(out, "summary.csv"),
                           gcomp.summarize(draws))
    io.write_manifest(os.path.join(out, "manifest.txt"), "gcompute", cfg,
                      seed, input_path, time.monotonic() - start)


def run_sensitivity(cfg, seed, out):
    start = time.monotonic()
    path, flat, design, samples = _fit_samples(cfg, seed)
    gc_cfg = gcomp.GcompConfig(
        n_synthetic=_get(cfg, "synthetic_clusters", int, 100))
    seq = np.random.SeedSequence(seed).spawn(3)[2]
    result = gcomp.run_sensitivity(
        seq, samples, flat, design, gc_cfg,
        n_mh_steps=_get(cfg, "mh_steps", int, 2000),
        n_mh_burn=_get(cfg, "mh_burn", int, 500))
    io.write_estimand_csv(os.path.join(out, "estimands_rho_prior.csv"),
                          result["copula"])
    io.write_estimand_csv(os.path.join(out, "estimands_rho_zero.csv"),
                          result["baseline"])
    io.write_sensitivity_table(os.path.join(out, "sensitivity.csv"),
                               gcomp.summarize(result["baseline"]),
                               gcomp.summarize(result["copula"]))
    gammas = result["gammas"]
    lines = ["gamma1,gamma0"] + [f"{float(g1)!r},{float(g0)!r}"
                                 for g1, g0 in gammas]
    io.atomic_write(os.path.join(out, "gammas.csv"), "\n".join(lines) + "\n")
    io.write_manifest(os.path.join(out, "manifest.txt"), "sensitivity", cfg,
                      seed, path, time.monotonic() - start)


def _simulate_replicate(args):
    (spec, seed_entropy, rep_key, burn, keep, thin, trunc_kl, t_synth) = args
    child = np.random.SeedSequence(entropy=seed_entropy, spawn_key=(rep_key,))
    data_ss, chain_ss, gc_ss = child.spawn(3)
    spec_obj = simbench.scenario(spec[0], spec[1])
    dataset = simbench.generate_dataset(np.random.default_rng(data_ss), spec_obj)
    design = DesignSpec(p=dataset.p, q=dataset.q)
    flat = flatten(dataset, design)
    hyper = empirical_hyperparameters(flat)
    samples = run_chain(np.random.default_rng(chain_ss), flat, hyper,
                        TruncationLevels(*trunc_kl),
                        McmcConfig(burn, keep, thin))
    draws = gcomp.aggregate_posterior(gc_ss, samples, design,
                                      gcomp.GcompConfig(n_synthetic=t_synth))
    return gcomp.summarize(draws)


def run_simulate(cfg, seed, out, threads):
    start = time.monotonic()
    name = _get(cfg, "scenario", str, required=True)
    n_rep = _get(cfg, "replicates", int, 20)
    spec = simbench.scenario(name)
    mcmc = _mcmc_config(cfg)
    trunc = _truncation(cfg)
    t_synth = _get(cfg, "synthetic_clusters", int, 100)
    jobs = [((spec.name, spec.n_clusters), seed, rep, mcmc.n_burn,
             mcmc.n_keep, mcmc.thin, (trunc.K, trunc.L, trunc.M), t_synth)
            for rep in range(n_rep)]
    if threads > 1:
        with Pool(threads) as pool:
            summaries = pool.map(_simulate_replicate, jobs)
    else:
        summaries = [_simulate_replicate(j) for j in jobs]

    truth_ss = np.random.SeedSequence(entropy=seed, spawn_key=(10 ** 6,))
    truth = simbench.truth_oracle(np.random.default_rng(truth_ss), spec,
                                  _get(cfg, "truth_clusters", int, 100000))
    estimates = {
        name_: {metric: np.array([s[name_][metric] for s in summaries])
                for metric in ("mean", "lo", "hi")}
        for name_ in gcomp.ESTIMAND_NAMES}
    report = simbench.evaluate(estimates, truth)
    io.write_eval_report(os.path.join(out, "eval_report.csv"), report)
    truth_lines = ["estimand,truth"] + \
        [f"{k},{float(v)!r}" for k, v in truth.items()]
    io.atomic_write(os.path.join(out, "truth.csv"), "\n".join(truth_lines) + "\n")
    io.write_manifest(os.path.join(out, "manifest.txt"), "simulate", cfg,
                      seed, None, time.monotonic() - start)


def run_diagnose(cfg, seed, out):
    start = time.monotonic()
    lik_path = _get(cfg, "likelihoods", str, required=True)
    if not os.path.exists(lik_path):
        raise ConfigError(f"likelihood file {lik_path!r} does not exist")
    liks = io.read_likelihood_csv(lik_path)
    value = simbench.compute_lpml(liks)
    io.atomic_write(os.path.join(out, "lpml.txt"), f"lpml={value!r}\n")
    io.write_manifest(os.path.join(out, "manifest.txt"), "diagnose", cfg,
                      seed, lik_path, time.monotonic() - start)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="caedp",
        description="Bayesian nonparametric causal mediation for "
                    "cluster-randomized trials")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in ("fit", "gcompute", "sensitivity", "simulate", "diagnose"):
        p = sub.add_parser(cmd)
        p.add_argument("--config", required=True, help="key=value config file")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (overrides config)")
        p.add_argument("--out", default=None,
                       help="output directory (overrides config)")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker count (default: ${THREADS_ENV_VAR} or 1)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = io.read_config(args.config)
        _validate_keys(cfg)
        seed = args.seed if args.seed is not None else \
            _get(cfg, "seed", int, required=True)
        out = args.out if args.out is not None else _get(cfg, "out", str, ".")
        threads = args.threads if args.threads is not None else \
            _get(cfg, "threads", int,
                 int(os.environ.get(THREADS_ENV_VAR, "1")))
        os.makedirs(out, exist_ok=True)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command == "fit":
            run_fit(cfg, seed, out)
        elif args.command == "gcompute":
            run_gcompute(cfg, seed, out)
        elif args.command == "sensitivity":
            run_sensitivity(cfg, seed, out)
        elif args.command == "simulate":
            run_simulate(cfg, seed, out, threads)
        elif args.command == "diagnose":
            run_diagnose(cfg, seed, out)
    except (ConfigError, io.IngestError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
