"""Randomized-level debiasing of the AIS ratio estimator.

Level l uses N_l = N_0 * growth**l particles.  The coupled increment

    Delta_0 = ratio(N_0),   Delta_l = ratio(N_l) - ratio(first N_l / growth)

comes from one AIS realization, so sum_l E Delta_l telescopes to the
limit eta_J(f).  Drawing a level L and reweighting by its probability gives
an unbiased estimate of sum_{l <= L_max} E Delta_l; the tail beyond L_max
is a bias that :func:`truncation_remainder` measures.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError
from .smc import AISParticles, AnnealingSchedule, KernelConfig, ais_ratio, ais_run, step_cost


def default_level_weights(N0: int, growth: int, L_max: int) -> np.ndarray:
    """p_l proportional to (l+2) log(l+2) / N_l, l = 0..L_max (not normalized)."""
    levels = np.arange(L_max + 1)
    n_l = N0 * float(growth) ** levels
    return (levels + 2) * np.log(levels + 2) / n_l


@dataclass(frozen=True)
class LevelPlan:
    """Particle counts and level probabilities.

    ``probs`` are the single-term probabilities p_l (summing to 1).  The
    multi-term estimator draws L from ``probs`` as well and divides level l
    by the tail mass P(L >= l), which is ``tail_probs``.
    """

    N0: int = 64
    growth: int = 4
    L_max: int = 6
    weights: tuple | None = None
    probs: np.ndarray = field(init=False, repr=False, compare=False)
    tail_probs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.N0 < 2 or self.growth < 2 or self.L_max < 0:
            raise ConfigurationError("need N0 >= 2, growth >= 2, L_max >= 0")
        if self.weights is None:
            w = default_level_weights(self.N0, self.growth, self.L_max)
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.L_max + 1,):
                raise ConfigurationError(f"need {self.L_max + 1} level weights")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ConfigurationError("every level needs positive probability")
        p = w / w.sum()
        tails = np.cumsum(p[::-1])[::-1]
        tails[0] = 1.0
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "tail_probs", tails)

    @property
    def levels(self) -> np.ndarray:
        return np.arange(self.L_max + 1)

    def n_particles(self, level: int) -> int:
        if not 0 <= level <= self.L_max:
            raise ConfigurationError(f"level {level} outside 0..{self.L_max}")
        return int(self.N0 * self.growth ** level)

    def level_cost(self, level: int, schedule: AnnealingSchedule, kernel: KernelConfig) -> int:
        """C(Delta_l): target evaluations of one AIS run with N_l particles."""
        return self.n_particles(level) * step_cost(schedule, kernel)

    def expected_cost(self, schedule: AnnealingSchedule, kernel: KernelConfig) -> float:
        """sum_l p_l C(Delta_l); the same for single- and multi-term draws."""
        costs = [self.level_cost(l, schedule, kernel) for l in self.levels]
        return float(np.dot(self.probs, costs))

    def draw_level(self, rng: np.random.Generator) -> int:
        return int(rng.choice(self.L_max + 1, p=self.probs))

    @classmethod
    def single_level(cls, N0: int, growth: int = 4) -> "LevelPlan":
        """Degenerate plan with p_0 = 1."""
        return cls(N0=N0, growth=growth, L_max=0, weights=(1.0,))


@dataclass
class Increment:
    level: int
    value: np.ndarray | float
    cost: int


@dataclass
class DebiasedEstimate:
    value: np.ndarray | float
    level: int
    cost: int
    n_particles: int


def _delta(particles: AISParticles, level: int, f, plan: LevelPlan):
    n = plan.n_particles(level)
    full = ais_ratio(particles, f, n)
    if level == 0:
        return full
    return full - ais_ratio(particles, f, n // plan.growth)


def coupled_increment(level: int, schedule: AnnealingSchedule, kernel: KernelConfig, f,
                      plan: LevelPlan, rng: np.random.Generator) -> Increment:
    """One AIS realization with N_l particles, differenced against its own prefix."""
    particles = ais_run(schedule, plan.n_particles(level), kernel, rng)
    return Increment(level, _delta(particles, level, f, plan), particles.cost)


def single_term_estimate(f, schedule: AnnealingSchedule, kernel: KernelConfig,
                         plan: LevelPlan, rng: np.random.Generator) -> DebiasedEstimate:
    """Delta_L / p_L with L drawn from ``plan.probs``."""
    level = plan.draw_level(rng)
    inc = coupled_increment(level, schedule, kernel, f, plan, rng)
    return DebiasedEstimate(inc.value / plan.probs[level], level, inc.cost,
                            plan.n_particles(level))


def multi_term_estimate(f, schedule: AnnealingSchedule, kernel: KernelConfig,
                        plan: LevelPlan, rng: np.random.Generator) -> DebiasedEstimate:
    """sum_{l <= L} Delta_l / P(L >= l).

    All increments are read off nested prefixes of a single N_L-particle AIS
    run; each prefix is distributed as a fresh N_l run, so every term keeps
    its expectation and the cost is that of level L alone.
    """
    level = plan.draw_level(rng)
    particles = ais_run(schedule, plan.n_particles(level), kernel, rng)
    total = 0.0
    for l in range(level + 1):
        total = total + _delta(particles, l, f, plan) / plan.tail_probs[l]
    return DebiasedEstimate(total, level, particles.cost, plan.n_particles(level))


def truncation_remainder(f, schedule: AnnealingSchedule, kernel: KernelConfig,
                         plan: LevelPlan, rng: np.random.Generator,
                         replicates: int = 200) -> np.ndarray | float:
    """Empirical bound on sum_{l > L_max} |E Delta_l|.

    Estimates E Delta_{L_max+1} by replicates, takes |mean| + 2 standard
    errors, and sums the geometric tail assuming |E Delta_l| shrinks like
    1/N_l (ratio-estimator bias), i.e. a factor ``growth`` per level.
    """
    ext = LevelPlan(plan.N0, plan.growth, plan.L_max + 1)
    level = plan.L_max + 1
    vals = np.array([coupled_increment(level, schedule, kernel, f, ext, rng).value
                     for _ in range(replicates)])
    bound = np.abs(vals.mean(axis=0)) + 2.0 * vals.std(axis=0, ddof=1) / np.sqrt(replicates)
    return bound * plan.growth / (plan.growth - 1.0)


def level_diagnostics(estimates, plan: LevelPlan) -> dict:
    """Level histogram and cost summary for a batch of estimates."""
    levels = np.array([e.level for e in estimates], dtype=int)
    costs = np.array([e.cost for e in estimates], dtype=float)
    values = np.array([np.atleast_1d(e.value) for e in estimates], dtype=float)
    return {
        "n": int(levels.size),
        "level_counts": np.bincount(levels, minlength=plan.L_max + 1).tolist(),
        "level_probs": plan.probs.tolist(),
        "mean_cost": float(costs.mean()) if costs.size else float("nan"),
        "total_cost": float(costs.sum()),
        # mean of (Delta_L / p_L)^2 estimates sum_l E Delta_l^2 / p_l
        "second_moment_sum": (values ** 2).mean(axis=0).tolist() if values.size else [],
    }
