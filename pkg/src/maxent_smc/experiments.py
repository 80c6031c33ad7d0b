"""Experiment runners behind the CLI subcommands.

Each runner takes a validated :class:`ExperimentConfig` and an output
directory, writes its files and returns the result dictionary.  Random
streams are derived from the master seed in a fixed order: stream 0 draws
the generating parameters, stream 1 drives the sampler/solver/chain.
"""
from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .config import ExperimentConfig, seed_streams, true_parameters
from .debias import LevelPlan
from .exceptions import ConfigurationError, DivergenceError
from .io import (ObservationFile, dump_json, file_sha256, read_moments, read_observations,
                 write_observations, write_samples, write_trace)
from .model import (PairFeatures, check_moments, oracle_entropy, oracle_log_partition, oracle_partition,
                    oracle_moments, oracle_sample)
from .sgld import chain_diagnostics, make_prior, posterior_summary, run_chain
from .smc import KernelConfig, metropolis_bitflip
from .solver import SMCConfig, StepSchedule, boundary_features, empirical_moments, solve_maxent

log = logging.getLogger(__name__)

MISFIT_TRACK_MAX_D = 12


# --------------------------------------------------------------------------
# config -> library objects
# --------------------------------------------------------------------------

def features_for(cfg):
    return PairFeatures(cfg.d)


def kernel_for(cfg):
    return KernelConfig(cfg.kernel, cfg.beta, cfg.sweeps)


def smc_config_for(cfg):
    return SMCConfig(cfg.N, kernel_for(cfg), cfg.resampling)


def schedule_for(cfg):
    return StepSchedule(cfg.schedule, cfg.epsilon, cfg.n0, cfg.switch_n)


def plan_for(cfg):
    return LevelPlan(cfg.N0, cfg.growth, cfg.L_max)


def provenance(cfg, command, extra_hash=None):
    return {
        "command": command,
        "seed": cfg.seed,
        "config_hash": cfg.hash(extra_hash),
        "version": __version__,
    }


def _diag_coords(features):
    return [j for j, (i, k) in enumerate(features.labels) if i == k]


def _oracle_ok(cfg):
    return cfg.d <= cfg.d_cap


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------

def mcmc_sample(lam, features, M, rng, burn_in=None, n_chains=None, thin=None):
    """Approximate draws from a long bit-flip Metropolis run (for d above the oracle cap).

    ``n_chains`` parallel chains are burned in for ``burn_in`` steps, then
    sampled every ``thin`` steps until M states are collected.
    """
    d = features.d
    burn_in = 200 * d if burn_in is None else burn_in
    thin = d if thin is None else thin
    n_chains = min(M, 256) if n_chains is None else n_chains
    beta = min(0.5, 2.0 / d)
    states = (rng.random((n_chains, d)) < 0.5).astype(np.uint8)

    def logdens(s):
        return features.evaluate(s) @ lam

    log_g = logdens(states)
    for _ in range(burn_in):
        states, log_g = metropolis_bitflip(states, log_g, logdens, beta, rng)
    out = []
    while sum(len(o) for o in out) < M:
        for _ in range(thin):
            states, log_g = metropolis_bitflip(states, log_g, logdens, beta, rng)
        out.append(states.copy())
    return np.vstack(out)[:M]


def run_simulate(cfg: ExperimentConfig, out_dir: str) -> dict:
    features = features_for(cfg)
    rng_truth, rng_data = seed_streams(cfg.seed, 2)
    lam = true_parameters(cfg, features.n_features, rng_truth)
    if lam is None:
        raise ConfigurationError("simulate needs generating parameters")
    prov = provenance(cfg, "simulate")
    if _oracle_ok(cfg):
        states = oracle_sample(lam, features, rng_data, size=cfg.M, d_cap=cfg.d_cap)
        sampler = "exact"
    elif cfg.mcmc_sampling:
        states = mcmc_sample(lam, features, cfg.M, rng_data, cfg.mcmc_burn_in)
        sampler = "mcmc-approximate"
    else:
        from .exceptions import CapacityError
        raise CapacityError(cfg.d, cfg.d_cap)
    obs = ObservationFile(states, cfg.seed, lam, sampler, prov["config_hash"], __version__)
    name = "observations.bin" if cfg.packed else "observations.txt"
    path = os.path.join(out_dir, name)
    write_observations(obs, path, packed=cfg.packed)
    truth = {
        **prov,
        "d": cfg.d,
        "M": cfg.M,
        "sampler": sampler,
        "lambda": lam,
        "Lambda": features.to_matrix(lam),
        "feature_pairs": features.labels,
        "observations": name,
    }
    if _oracle_ok(cfg):
        truth["moments"] = oracle_moments(lam, features, cfg.d_cap)
    truth["empirical_moments"] = empirical_moments(states, features)
    dump_json(truth, os.path.join(out_dir, "truth.json"))
    return truth


# --------------------------------------------------------------------------
# maxent / mle
# --------------------------------------------------------------------------

def _solve(cfg, m, features, rng, out_dir, prov, result):
    track = cfg.track_misfit
    if track is None:
        track = cfg.d <= min(cfg.d_cap, MISFIT_TRACK_MAX_D)
    try:
        lam, trace = solve_maxent(
            m, features, None, schedule_for(cfg), smc_config_for(cfg), cfg.K, rng,
            bound=cfg.bound, track_misfit=track, misfit_every=cfg.misfit_every,
            d_cap=cfg.d_cap)
    except DivergenceError as exc:
        if exc.trace is not None:
            write_trace(exc.trace, os.path.join(out_dir, "trace.csv"), prov)
        result.update(status="diverged", message=str(exc))
        dump_json(result, os.path.join(out_dir, "result.json"))
        raise
    write_trace(trace, os.path.join(out_dir, "trace.csv"), prov)
    result.update(
        status="completed",
        iterations=len(trace),
        **{"lambda": lam, "Lambda": features.to_matrix(lam)},
        total_cost=trace.total_cost,
        log_rescale=trace.log_rescale,
        switch_n=trace.switch_n,
    )
    truth = result.get("truth_lambda")
    if truth is not None:
        result["param_max_error"] = float(np.max(np.abs(lam - np.asarray(truth))))
    if _oracle_ok(cfg):
        fitted = oracle_moments(lam, features, cfg.d_cap)
        result["fitted_moments"] = fitted
        result["misfit_inf"] = float(np.max(np.abs(m - fitted)))
    dump_json(result, os.path.join(out_dir, "result.json"))
    if cfg.plot:
        _plot_fit(out_dir, features, lam, truth, trace, m, result.get("fitted_moments"))
    return result


def _plot_fit(out_dir, features, lam, truth, trace, m, fitted):
    from . import plotting

    plotting.plot_matrices(os.path.join(out_dir, "matrices.png"), features.to_matrix(lam),
                           None if truth is None else features.to_matrix(np.asarray(truth)))
    plotting.plot_convergence(os.path.join(out_dir, "convergence.png"), trace.n,
                              trace.misfits, trace.drift_norms())
    if fitted is not None:
        plotting.plot_moments(os.path.join(out_dir, "moments.png"), m, fitted)


def run_maxent(cfg: ExperimentConfig, out_dir: str) -> dict:
    features = features_for(cfg)
    rng_truth, rng_run = seed_streams(cfg.seed, 2)
    extra = {}
    if cfg.moments:
        m = read_moments(cfg.moments)
        extra["moments_sha256"] = file_sha256(cfg.moments)
        truth = None
    else:
        truth = true_parameters(cfg, features.n_features, rng_truth)
        m = oracle_moments(truth, features, cfg.d_cap)
    m = check_moments(m, features)
    prov = provenance(cfg, "maxent", extra)
    result = {**prov, "d": cfg.d, "J": features.n_features, "K": cfg.K,
              "feature_pairs": features.labels, "target_moments": m}
    if truth is not None:
        result["truth_lambda"] = truth
        result["truth_Lambda"] = features.to_matrix(truth)
    return _solve(cfg, m, features, rng_run, out_dir, prov, result)


def _load_obs(cfg):
    obs = read_observations(cfg.observations)
    if obs.d != cfg.d:
        raise ConfigurationError(f"observations have d={obs.d}, config says d={cfg.d}")
    return obs


def run_mle(cfg: ExperimentConfig, out_dir: str) -> dict:
    features = features_for(cfg)
    obs = _load_obs(cfg)
    _, rng_run = seed_streams(cfg.seed, 2)
    m_hat = empirical_moments(obs.states, features)
    edge = boundary_features(m_hat)
    if edge:
        warnings.warn(f"empirical moments on the boundary at feature indices {edge}; "
                      "the MLE may not exist", RuntimeWarning, stacklevel=2)
    prov = provenance(cfg, "mle", {"observations_sha256": file_sha256(cfg.observations)})
    result = {**prov, "d": cfg.d, "J": features.n_features, "K": cfg.K, "M": obs.M,
              "feature_pairs": features.labels, "target_moments": m_hat,
              "boundary_features": edge}
    if obs.lam is not None:
        result["truth_lambda"] = obs.lam
        result["truth_Lambda"] = features.to_matrix(obs.lam)
    return _solve(cfg, m_hat, features, rng_run, out_dir, prov, result)


# --------------------------------------------------------------------------
# posterior
# --------------------------------------------------------------------------

def run_posterior(cfg: ExperimentConfig, out_dir: str) -> dict:
    features = features_for(cfg)
    obs = _load_obs(cfg)
    _, rng_run = seed_streams(cfg.seed, 2)
    m_hat = empirical_moments(obs.states, features)
    prov = provenance(cfg, "posterior", {"observations_sha256": file_sha256(cfg.observations)})
    plan = plan_for(cfg)
    prior = make_prior(cfg.prior, features.n_features)
    try:
        chain = run_chain(np.zeros(features.n_features), m_hat, obs.M, prior, features, plan,
                          kernel_for(cfg), cfg.K, cfg.delta0, rng_run, cfg.exponent,
                          cfg.bound, drift=cfg.drift)
    except DivergenceError as exc:
        if exc.trace is not None:
            write_samples(exc.trace, os.path.join(out_dir, "samples.csv"), prov)
        dump_json({**prov, "status": "diverged", "message": str(exc)},
                  os.path.join(out_dir, "result.json"))
        raise
    write_samples(chain, os.path.join(out_dir, "samples.csv"), prov)
    diag = _diag_coords(features)
    summary = posterior_summary(chain, burn_in=cfg.burn_in, bins=cfg.bins, coords=diag,
                                rng=np.random.default_rng(cfg.seed))
    hist = {**prov, "coords": "diag(Lambda)", **summary.to_dict()}
    dump_json(hist, os.path.join(out_dir, "histograms.json"))
    full = posterior_summary(chain, burn_in=cfg.burn_in, bins=cfg.bins,
                             rng=np.random.default_rng(cfg.seed))
    result = {
        **prov,
        "status": "completed",
        "d": cfg.d,
        "J": features.n_features,
        "K": cfg.K,
        "M": obs.M,
        "delta0": chain.meta["delta0"],
        "exponent": cfg.exponent,
        "drift": cfg.drift,
        "prior": prior.to_dict(),
        "empirical_moments": m_hat,
        "posterior_mean": full.mean,
        "posterior_std": full.std,
        "posterior_cov": full.cov,
        "interval_level": full.level,
        "intervals": full.intervals,
        "level_plan": {"N0": plan.N0, "growth": plan.growth, "L_max": plan.L_max},
        "diagnostics": chain_diagnostics(chain, plan),
    }
    if obs.lam is not None:
        truth = obs.lam
        result["truth_lambda"] = truth
        result["truth_in_interval"] = [
            bool(lo <= t <= hi) for t, (lo, hi) in zip(truth, full.intervals)]
    dump_json(result, os.path.join(out_dir, "result.json"))
    if cfg.plot:
        from . import plotting

        plotting.plot_pairwise(os.path.join(out_dir, "pairwise.png"), summary, obs.lam)
        plotting.plot_chain(os.path.join(out_dir, "chain.png"), chain.n, chain.lambdas, obs.lam)
    return result


# --------------------------------------------------------------------------
# oracle
# --------------------------------------------------------------------------

def run_oracle(cfg: ExperimentConfig, out_dir: str) -> dict:
    features = features_for(cfg)
    rng_truth, _ = seed_streams(cfg.seed, 2)
    lam = true_parameters(cfg, features.n_features, rng_truth)
    log_z = oracle_log_partition(lam, features, cfg.d_cap)
    result = {
        **provenance(cfg, "oracle"),
        "d": cfg.d,
        "feature_pairs": features.labels,
        "lambda": lam,
        "log_Z": log_z,
        "Z": oracle_partition(lam, features, cfg.d_cap),
        "moments": oracle_moments(lam, features, cfg.d_cap),
        "entropy": oracle_entropy(lam, features, cfg.d_cap),
    }
    dump_json(result, os.path.join(out_dir, "oracle.json"))
    return result


RUNNERS = {
    "simulate": run_simulate,
    "maxent_exact": run_maxent,
    "mle": run_mle,
    "posterior": run_posterior,
    "oracle": run_oracle,
}


def replicate_seeds(seed: int, R: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(R)]


def run(cfg: ExperimentConfig) -> dict:
    """Run the configured mode, fanning replicates out over threads.

    Replicate r uses a seed derived from the master seed and writes into
    ``rep_<r>``; the merged summary lists replicates in index order.
    """
    cfg.validate()
    out_dir = cfg.resolve_out_dir()
    os.makedirs(out_dir, exist_ok=True)
    runner = RUNNERS[cfg.mode]
    if cfg.replicates == 1:
        return runner(cfg, out_dir)

    def one(r_seed):
        r, seed = r_seed
        sub = os.path.join(out_dir, f"rep_{r:03d}")
        os.makedirs(sub, exist_ok=True)
        return runner(replace(cfg, seed=seed, replicates=1, out_dir=sub), sub)

    seeds = list(enumerate(replicate_seeds(cfg.seed, cfg.replicates)))
    with ThreadPoolExecutor(max_workers=min(cfg.replicates, os.cpu_count() or 1)) as pool:
        results = list(pool.map(one, seeds))
    summary = {
        **provenance(cfg, cfg.mode),
        "replicates": [{"index": r, "seed": s, "result": res} for (r, s), res in zip(seeds, results)],
    }
    dump_json(summary, os.path.join(out_dir, "replicates.json"))
    return summary
