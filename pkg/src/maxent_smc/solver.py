"""Robbins-Monro iteration for the moment-matching root Q(m - phi | lam) = 0.

Each iteration draws a fresh SMC estimate of the drift and moves

    lam <- lam + delta_n * drift.

The two-phase schedule uses the normalized misfit m - eta^N_J(phi) for the
first ``switch_n`` iterations and the unbiased unnormalized estimate
Gamma^N_J(m - phi | lam) afterwards, divided by the scalar
Gamma^N_J(1 | lam) captured at the switch.  That division only rescales
the drift, so the root is unchanged; it keeps the step size on the scale of
the normalized misfit.  Note the phase-one direction is a ratio estimate and
therefore slightly biased; no convergence guarantee is claimed for it.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, DivergenceError
from .model import FeatureSet, as_states, check_moments, oracle_moments
from .smc import FeatureAnnealing, KernelConfig, smc_run

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepSchedule:
    """Gain sequence delta_n = epsilon * n0 / (n0 + n).

    ``n0=None`` resolves to 5d and ``switch_n=None`` to 2d.
    """

    kind: str = "two_phase"
    epsilon: float = 1.0
    n0: float | None = None
    switch_n: int | None = None

    def __post_init__(self):
        if self.kind not in ("harmonic", "two_phase"):
            raise ConfigurationError(f"unknown step schedule {self.kind!r}")
        if self.epsilon <= 0:
            raise ConfigurationError("epsilon must be positive")

    def resolve(self, d: int) -> "StepSchedule":
        return StepSchedule(
            self.kind,
            self.epsilon,
            5.0 * d if self.n0 is None else float(self.n0),
            2 * d if self.switch_n is None else int(self.switch_n),
        )

    def gain(self, n: int) -> float:
        if self.n0 is None:
            raise ConfigurationError("resolve() the schedule first")
        return self.epsilon * self.n0 / (self.n0 + n)

    def in_phase_one(self, n: int) -> bool:
        return self.kind == "two_phase" and n <= self.switch_n


@dataclass(frozen=True)
class SMCConfig:
    """Sampler settings for each drift estimate; ``N=None`` means 2d particles."""

    N: int | None = None
    kernel: KernelConfig = field(default_factory=KernelConfig)
    resampling: str = "multinomial"
    scale_to_q: bool = False

    def n_particles(self, d: int) -> int:
        return 2 * d if self.N is None else self.N


@dataclass
class SolverTrace:
    """Per-iteration record.  Row n holds delta_n, the drift evaluated at
    lam^{n-1}, the updated lam^n and the oracle misfit at lam^n (NaN when
    not tracked).

    For the two-phase schedule ``deltas`` are the nominal gains and
    ``drifts`` are already divided by the captured normalizer, whose log is
    kept in ``log_rescale``.
    """

    lam0: np.ndarray
    n: list = field(default_factory=list)
    deltas: list = field(default_factory=list)
    lambdas: list = field(default_factory=list)
    drifts: list = field(default_factory=list)
    misfits: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    log_rescale: float | None = None
    switch_n: int | None = None

    def append(self, n, delta, lam, drift, misfit, cost):
        self.n.append(n)
        self.deltas.append(delta)
        self.lambdas.append(lam.copy())
        self.drifts.append(drift.copy())
        self.misfits.append(misfit)
        self.costs.append(cost)

    def __len__(self):
        return len(self.n)

    @property
    def final(self) -> np.ndarray:
        return self.lambdas[-1] if self.lambdas else self.lam0

    @property
    def total_cost(self) -> int:
        return int(sum(self.costs))

    def lambda_array(self) -> np.ndarray:
        return np.array(self.lambdas).reshape(len(self), -1)

    def drift_norms(self) -> np.ndarray:
        return np.array([np.max(np.abs(v)) for v in self.drifts])

    def rows(self):
        for k in range(len(self)):
            yield (self.n[k], self.deltas[k], *self.lambdas[k],
                   float(np.max(np.abs(self.drifts[k]))), self.misfits[k])

    def header(self) -> list[str]:
        J = self.lam0.size
        return ["n", "delta_n", *[f"lambda_{j + 1}" for j in range(J)], "drift_norm", "misfit_norm"]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            for row in self.rows():
                writer.writerow([row[0], *[format(float(v), ".17g") for v in row[1:]]])


def _misfit(m, lam, features, d_cap):
    return float(np.max(np.abs(m - oracle_moments(lam, features, d_cap))))


def solve_maxent(m, features: FeatureSet, lam0=None, schedule: StepSchedule | None = None,
                 smc_config: SMCConfig | None = None, K: int = 10_000,
                 rng: np.random.Generator | None = None, bound: float = 50.0,
                 track_misfit: bool = False, misfit_every: int = 1,
                 early_stop_tol: float | None = None, early_stop_window: int = 100,
                 d_cap: int | None = None):
    """Find lam with Pi(phi | lam) = m by Robbins-Monro with SMC drift estimates.

    Returns ``(lam_K, trace)``.  Raises :class:`DivergenceError` carrying the
    partial trace if an iterate leaves the box |lam|_inf <= ``bound``.
    """
    d = features.d
    m = check_moments(m, features)
    lam = np.zeros(features.n_features) if lam0 is None else features.check_params(lam0).copy()
    if K < 1:
        raise ConfigurationError("K must be >= 1")
    schedule = (schedule or StepSchedule()).resolve(d)
    smc_config = smc_config or SMCConfig()
    rng = rng if rng is not None else np.random.default_rng()
    N = smc_config.n_particles(d)

    trace = SolverTrace(lam0=lam.copy(), switch_n=schedule.switch_n if schedule.kind == "two_phase" else None)
    window = []
    for n in range(1, K + 1):
        pop = smc_run(FeatureAnnealing(features, lam), N, smc_config.kernel, rng,
                      smc_config.resampling)
        misfit_hat = m - features.evaluate(pop.states).mean(axis=0)
        log_norm = pop.log_normalizer(smc_config.scale_to_q)
        if schedule.in_phase_one(n):
            drift = misfit_hat
            if n == schedule.switch_n:
                trace.log_rescale = log_norm
                log.debug("two-phase switch at n=%d, log rescale %.6g", n, log_norm)
        elif schedule.kind == "two_phase":
            if trace.log_rescale is None:
                trace.log_rescale = log_norm
            drift = np.exp(log_norm - trace.log_rescale) * misfit_hat
        else:
            drift = np.exp(log_norm) * misfit_hat
        delta = schedule.gain(n)
        lam = lam + delta * drift
        misfit = float("nan")
        if track_misfit and (n % misfit_every == 0 or n == K):
            misfit = _misfit(m, lam, features, d_cap)
        trace.append(n, delta, lam, drift, misfit, pop.cost)
        if not np.all(np.isfinite(lam)) or np.max(np.abs(lam)) > bound:
            raise DivergenceError(
                f"|lambda|_inf exceeded {bound} at iteration {n}; the moments may be "
                f"infeasible or the step schedule too aggressive", trace)
        if early_stop_tol is not None:
            window.append(float(np.max(np.abs(drift))))
            if len(window) > early_stop_window:
                window.pop(0)
                if np.mean(window) < early_stop_tol:
                    break
    return lam, trace


def empirical_moments(Y, features: FeatureSet) -> np.ndarray:
    """Arithmetic mean of phi over the observations."""
    Y = as_states(Y, features.d)
    if Y.shape[0] == 0:
        raise ConfigurationError("need at least one observation")
    return features.evaluate(Y).mean(axis=0)


def boundary_features(m_hat) -> list[int]:
    m_hat = np.asarray(m_hat)
    return [int(j) for j in np.flatnonzero((m_hat <= 0.0) | (m_hat >= 1.0))]


def solve_mle(Y, features: FeatureSet, lam0=None, schedule: StepSchedule | None = None,
              smc_config: SMCConfig | None = None, K: int = 10_000,
              rng: np.random.Generator | None = None, **kwargs):
    """Maximum likelihood: moment matching against the empirical moments of Y."""
    m_hat = empirical_moments(Y, features)
    edge = boundary_features(m_hat)
    if edge:
        warnings.warn(
            f"empirical moments on the boundary at feature indices {edge}; "
            "the MLE may not exist and those parameters can drift without bound",
            RuntimeWarning, stacklevel=2)
    return solve_maxent(m_hat, features, lam0, schedule, smc_config, K, rng, **kwargs)
