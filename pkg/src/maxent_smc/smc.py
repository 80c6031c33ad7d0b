"""SMC sampler and annealed importance sampling over {0,1}^d.

The sampler walks a sequence of unnormalized log-densities
log gamma_0, ..., log gamma_J.  gamma_0 is the uniform *probability*
2^-d, so Gamma_0(1) = 1 and the product of mean incremental weights
estimates Gamma_J(1) = Z(lam) / 2^d without bias.  Pass ``scale_to_q=True``
to the estimators to multiply the 2^d back in.

Each step follows the order weight -> resample -> mutate.  All weight
arithmetic is in log space.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .exceptions import ConfigurationError
from .model import FeatureSet

LOG2 = np.log(2.0)


# --------------------------------------------------------------------------
# annealing schedules
# --------------------------------------------------------------------------

class AnnealingSchedule:
    """Sequence of log-densities log gamma_j, j = 0..n_steps, on bit states."""

    d: int
    n_steps: int

    def log_gamma(self, j: int, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_incr(self, j: int, states: np.ndarray) -> np.ndarray:
        """log G_j = log gamma_{j+1} - log gamma_j."""
        return self.log_gamma(j + 1, states) - self.log_gamma(j, states)


class FeatureAnnealing(AnnealingSchedule):
    """One constraint switched on per step:

        log gamma_j(x) = -d log 2 + sum_{i<j} lam_i phi_i(x)

    so G_j(x) = exp(lam_j phi_j(x)) and gamma_J = 2^-d q(x | lam).
    """

    def __init__(self, features: FeatureSet, lam):
        self.features = features
        self.lam = features.check_params(lam)
        self.d = features.d
        self.n_steps = features.n_features
        self._offset = -self.d * LOG2

    def log_gamma(self, j, states):
        if j == 0:
            return np.full(states.shape[0], self._offset)
        return self._offset + self.features.evaluate_prefix(states, j) @ self.lam[:j]

    def log_incr(self, j, states):
        col = self.features.evaluate_columns(states, slice(j, j + 1))[:, 0]
        return self.lam[j] * col


class CallableAnnealing(AnnealingSchedule):
    """User-supplied schedule: ``funcs[j](states)`` returns log gamma_j.

    ``funcs[0]`` must be the exactly-samplable uniform law, i.e. -d log 2.
    """

    def __init__(self, d: int, funcs: Sequence[Callable]):
        if len(funcs) < 1:
            raise ConfigurationError("a schedule needs at least gamma_0")
        self.d = int(d)
        self.funcs = list(funcs)
        self.n_steps = len(self.funcs) - 1

    def log_gamma(self, j, states):
        return np.asarray(self.funcs[j](states), dtype=float)


# --------------------------------------------------------------------------
# kernels and resampling
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelConfig:
    """Mutation kernel settings.

    ``sweeps=None`` means d kernel applications per SMC step.
    """

    kind: str = "metropolis_bitflip"
    beta: float = 0.6
    sweeps: int | None = None

    def __post_init__(self):
        if self.kind not in ("metropolis_bitflip", "gibbs_sweep"):
            raise ConfigurationError(f"unknown kernel kind {self.kind!r}")
        if not 0.0 < self.beta < 1.0:
            raise ConfigurationError("beta must lie in (0, 1)")
        if self.sweeps is not None and self.sweeps < 0:
            raise ConfigurationError("sweeps must be non-negative")

    def n_sweeps(self, d: int) -> int:
        return d if self.sweeps is None else self.sweeps

    def evals_per_sweep(self, d: int) -> int:
        """Target evaluations per particle for one kernel application."""
        return 1 if self.kind == "metropolis_bitflip" else 2 * d


def metropolis_bitflip(states, log_g, logdens, beta, rng):
    """One Metropolis step with an independent Bernoulli(beta) flip of every bit.

    ``log_g`` caches logdens(states); returns the new states and cache.
    """
    flips = (rng.random(states.shape) < beta).astype(np.uint8)
    proposal = states ^ flips
    log_g_prop = logdens(proposal)
    accept = np.log(rng.random(states.shape[0])) < log_g_prop - log_g
    states = np.where(accept[:, None], proposal, states)
    log_g = np.where(accept, log_g_prop, log_g)
    return states, log_g


def gibbs_sweep(states, logdens, rng):
    """Systematic-scan Gibbs sweep, bit 1 to bit d."""
    states = states.copy()
    for i in range(states.shape[1]):
        states[:, i] = 1
        l1 = logdens(states)
        states[:, i] = 0
        l0 = logdens(states)
        p1 = 1.0 / (1.0 + np.exp(l0 - l1))
        states[:, i] = (rng.random(states.shape[0]) < p1).astype(np.uint8)
    return states


def mutate(states, logdens, kernel: KernelConfig, rng, log_g=None):
    """Apply ``kernel.n_sweeps(d)`` kernel applications that leave exp(logdens) invariant."""
    d = states.shape[1]
    n = kernel.n_sweeps(d)
    if kernel.kind == "gibbs_sweep":
        for _ in range(n):
            states = gibbs_sweep(states, logdens, rng)
        return states
    if n and log_g is None:
        log_g = logdens(states)
    for _ in range(n):
        states, log_g = metropolis_bitflip(states, log_g, logdens, kernel.beta, rng)
    return states


def normalized_weights(log_w: np.ndarray) -> np.ndarray:
    w = np.exp(log_w - log_w.max())
    return w / w.sum()


def multinomial_resample(weights: np.ndarray, rng, n: int | None = None) -> np.ndarray:
    """Inverse-CDF multinomial resampling, one uniform per offspring."""
    n = weights.size if n is None else n
    cdf = np.cumsum(weights)
    u = rng.random(n) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), weights.size - 1)


def systematic_resample(weights: np.ndarray, rng, n: int | None = None) -> np.ndarray:
    n = weights.size if n is None else n
    cdf = np.cumsum(weights)
    u = (np.arange(n) + rng.random()) / n * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), weights.size - 1)


RESAMPLERS = {"multinomial": multinomial_resample, "systematic": systematic_resample}


def ess(log_w: np.ndarray) -> float:
    w = normalized_weights(log_w)
    return float(1.0 / np.sum(w * w))


def _apply(f, states):
    out = np.asarray(f(states), dtype=float)
    if out.ndim == 0:
        out = np.full(states.shape[0], float(out))
    return out


def _check(schedule, N):
    if N < 2:
        raise ConfigurationError("need at least N = 2 particles")
    if schedule.n_steps < 0:
        raise ConfigurationError("schedule must have n_steps >= 0")


def _initial(schedule, N, rng):
    return (rng.random((N, schedule.d)) < 0.5).astype(np.uint8)


def step_cost(schedule: AnnealingSchedule, kernel: KernelConfig) -> int:
    """Target evaluations per particle over a full run (weights plus kernel)."""
    d = schedule.d
    return schedule.n_steps * (1 + kernel.n_sweeps(d) * kernel.evals_per_sweep(d))


# --------------------------------------------------------------------------
# SMC sampler
# --------------------------------------------------------------------------

@dataclass
class ParticlePopulation:
    """Final state of an SMC run.

    ``log_z_increments[j]`` is log eta^N_j(G_j); ``ess_trace[j]`` the ESS of
    the weights used at that resampling step.
    """

    states: np.ndarray
    log_weights: np.ndarray
    log_z_increments: np.ndarray
    ess_trace: np.ndarray
    step: int
    cost: int
    d: int = field(init=False)

    def __post_init__(self):
        self.d = self.states.shape[1]

    @property
    def n_particles(self) -> int:
        return self.states.shape[0]

    def log_normalizer(self, scale_to_q: bool = False) -> float:
        """log Gamma^N_J(1); adds d log 2 when ``scale_to_q``."""
        out = float(np.sum(self.log_z_increments))
        return out + self.d * LOG2 if scale_to_q else out

    def diagnostics(self) -> list[dict]:
        return [
            {"step": j + 1, "log_z_increment": float(z), "ess": float(e)}
            for j, (z, e) in enumerate(zip(self.log_z_increments, self.ess_trace))
        ]


def smc_run(schedule: AnnealingSchedule, N: int, kernel: KernelConfig,
            rng: np.random.Generator, resampling: str = "multinomial") -> ParticlePopulation:
    """Run the SMC sampler for ``schedule.n_steps`` weight/resample/mutate steps."""
    _check(schedule, N)
    try:
        resample = RESAMPLERS[resampling]
    except KeyError:
        raise ConfigurationError(f"unknown resampling scheme {resampling!r}") from None
    J = schedule.n_steps
    states = _initial(schedule, N, rng)
    log_n = np.log(float(N))
    increments = np.empty(J)
    ess_trace = np.empty(J)
    for j in range(1, J + 1):
        log_g = schedule.log_incr(j - 1, states)
        top = log_g.max()
        if not np.isfinite(top):
            raise FloatingPointError(
                f"incremental weights degenerate at step {j}: max log G = {top}"
            )
        w = np.exp(log_g - top)
        total = w.sum()
        increments[j - 1] = top + np.log(total) - log_n
        w /= total
        ess_trace[j - 1] = 1.0 / np.dot(w, w)
        states = states[resample(w, rng)]
        states = mutate(states, lambda s, j=j: schedule.log_gamma(j, s), kernel, rng)
    return ParticlePopulation(
        states=states,
        log_weights=np.zeros(N),
        log_z_increments=increments,
        ess_trace=ess_trace,
        step=J,
        cost=N * step_cost(schedule, kernel),
    )


def estimate_target(pop: ParticlePopulation, f) -> np.ndarray | float:
    """Equally weighted particle average eta^N_J(f)."""
    out = _apply(f, pop.states).mean(axis=0)
    return float(out) if out.ndim == 0 else out


def estimate_unnormalized(pop: ParticlePopulation, f, scale_to_q: bool = False):
    """Gamma^N_J(f) = prod_j eta^N_j(G_j) * eta^N_J(f).

    Unbiased for Q(f | lam) / 2^d, or Q(f | lam) with ``scale_to_q``.
    """
    return np.exp(pop.log_normalizer(scale_to_q)) * estimate_target(pop, f)


# --------------------------------------------------------------------------
# annealed importance sampling
# --------------------------------------------------------------------------

@dataclass
class AISParticles:
    """Independent weighted particles; order is generation order."""

    log_weights: np.ndarray
    states: np.ndarray
    cost: int

    @property
    def n_particles(self) -> int:
        return self.states.shape[0]

    def unnormalized(self, f, scale_to_q: bool = False):
        """(1/N) sum_i W^i f(x^i), unbiased for Gamma_J(f)."""
        d = self.states.shape[1]
        top = self.log_weights.max()
        w = np.exp(self.log_weights - top)
        vals = _apply(f, self.states)
        out = np.exp(top + (d * LOG2 if scale_to_q else 0.0)) * (w @ vals) / w.size
        return float(out) if np.ndim(out) == 0 else out


def ais_run(schedule: AnnealingSchedule, N: int, kernel: KernelConfig,
            rng: np.random.Generator) -> AISParticles:
    """SMC without the resampling step; particles never interact."""
    _check(schedule, N)
    states = _initial(schedule, N, rng)
    log_w = np.zeros(N)
    for j in range(1, schedule.n_steps + 1):
        log_w += schedule.log_incr(j - 1, states)
        states = mutate(states, lambda s, j=j: schedule.log_gamma(j, s), kernel, rng)
    return AISParticles(log_w, states, N * step_cost(schedule, kernel))


def ais_ratio(particles: AISParticles, f, subset_size: int | None = None):
    """Self-normalized estimate over the first ``subset_size`` particles."""
    n = particles.n_particles if subset_size is None else int(subset_size)
    if not 1 <= n <= particles.n_particles:
        raise ConfigurationError(f"subset_size must be in [1, {particles.n_particles}]")
    log_w = particles.log_weights[:n]
    w = np.exp(log_w - log_w.max())
    vals = _apply(f, particles.states[:n])
    # centred on the first value so that constant f is returned exactly
    ref = vals[0]
    out = ref + (w @ (vals - ref)) / w.sum()
    return float(out) if np.ndim(out) == 0 else out


def log_mean_exp(a) -> float:
    a = np.asarray(a, dtype=float)
    return float(logsumexp(a) - np.log(a.size))
