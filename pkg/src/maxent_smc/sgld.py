"""Stochastic-gradient Langevin dynamics over the natural parameters.

The log-posterior gradient M * Pi(m_hat - phi | lam) + grad log prior is
replaced by the single-term debiased estimate, and the chain

    lam^n = lam^{n-1} + (delta_n / 2) * g_hat(lam^{n-1}) + N(0, delta_n I),
    delta_n = delta_0 * n^(-1/3),

is summarized by delta-weighted averages sum delta_n f(lam^n) / sum delta_n.
The truncation of the level distribution leaves a small gradient bias;
it is reported, not corrected.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .debias import LevelPlan, single_term_estimate
from .exceptions import ConfigurationError, DivergenceError
from .model import FeatureSet
from .smc import FeatureAnnealing, KernelConfig, smc_run


class FlatPrior:
    """Improper prior P(lam) proportional to 1."""

    def grad_log(self, lam):
        return np.zeros_like(np.asarray(lam, dtype=float))

    def log_density(self, lam):
        return 0.0

    def to_dict(self):
        return {"kind": "flat_improper"}


class GaussianPrior:
    """Isotropic normal prior N(mu, sigma2 * I)."""

    def __init__(self, mu, sigma2: float):
        if sigma2 <= 0:
            raise ConfigurationError("sigma2 must be positive")
        self.mu = np.asarray(mu, dtype=float)
        self.sigma2 = float(sigma2)

    def grad_log(self, lam):
        return -(np.asarray(lam, dtype=float) - self.mu) / self.sigma2

    def log_density(self, lam):
        r = np.asarray(lam, dtype=float) - self.mu
        return -0.5 * float(r @ r) / self.sigma2

    def to_dict(self):
        return {"kind": "gaussian", "mu": np.broadcast_to(self.mu, self.mu.shape).tolist(),
                "sigma2": self.sigma2}


def make_prior(cfg: dict | None, J: int):
    if not cfg or cfg.get("kind", "flat_improper") == "flat_improper":
        return FlatPrior()
    if cfg["kind"] == "gaussian":
        mu = np.broadcast_to(np.asarray(cfg.get("mu", 0.0), dtype=float), (J,)).copy()
        return GaussianPrior(mu, cfg.get("sigma2", 1.0))
    raise ConfigurationError(f"unknown prior {cfg['kind']!r}")


def default_delta0(M: int) -> float:
    """0.01, shrunk to 1/M for large data sets.

    The likelihood curvature grows like M, and the Euler step is unstable
    once delta * M * Cov(phi) / 2 approaches 2.
    """
    return 0.01 if M <= 100 else 1.0 / M


def step_sizes(K: int, delta0: float, exponent: float = 1.0 / 3.0) -> np.ndarray:
    n = np.arange(1, K + 1, dtype=float)
    return delta0 * n ** (-exponent)


@dataclass
class GradientEstimate:
    value: np.ndarray
    level: int
    cost: int


def gradient_estimate(lam, m_hat, M: int, prior, features: FeatureSet, plan: LevelPlan,
                      kernel: KernelConfig, rng: np.random.Generator,
                      return_info: bool = False):
    """M * Delta_L(m_hat - phi | lam) / p_L + grad log prior.

    One level draw serves every coordinate.  With M = 0 no sampler is run.
    """
    lam = features.check_params(lam)
    m_hat = np.asarray(m_hat, dtype=float)
    grad = prior.grad_log(lam)
    level, cost = -1, 0
    if M:
        schedule = FeatureAnnealing(features, lam)
        est = single_term_estimate(lambda s: m_hat - features.evaluate(s), schedule,
                                   kernel, plan, rng)
        grad = grad + M * est.value
        level, cost = est.level, est.cost
    if return_info:
        return GradientEstimate(grad, level, cost)
    return grad


def biased_gradient(lam, m_hat, M, prior, features, N, kernel, rng):
    """M * (m_hat - eta^N_J(phi)) + grad log prior from one SMC run.

    Consistent in N but biased; offered for comparison only.
    """
    pop = smc_run(FeatureAnnealing(features, lam), N, kernel, rng)
    g = M * (np.asarray(m_hat) - features.evaluate(pop.states).mean(axis=0))
    return GradientEstimate(g + prior.grad_log(lam), -1, pop.cost)


@dataclass
class WeightedSample:
    n: int
    lam: np.ndarray
    weight: float


@dataclass
class ChainResult:
    """All K states of a chain with their delta_n weights."""

    n: np.ndarray
    deltas: np.ndarray
    lambdas: np.ndarray
    levels: np.ndarray
    costs: np.ndarray
    lam0: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.n.size

    def __iter__(self):
        for k in range(len(self)):
            yield WeightedSample(int(self.n[k]), self.lambdas[k], float(self.deltas[k]))

    def weighted_mean(self, func: Callable | None = None, start: int = 0) -> np.ndarray:
        vals = self.lambdas[start:] if func is None else np.array([func(l) for l in self.lambdas[start:]])
        return weighted_average(vals, self.deltas[start:])

    def level_histogram(self, L_max: int) -> list[int]:
        used = self.levels[self.levels >= 0]
        return np.bincount(used, minlength=L_max + 1).tolist()


def weighted_average(values, weights) -> np.ndarray:
    """sum_n w_n f_n / sum_n w_n along the first axis."""
    w = np.asarray(weights, dtype=float)
    return np.tensordot(w, np.asarray(values, dtype=float), axes=1) / w.sum()


def run_chain(lam0, m_hat, M: int, prior, features: FeatureSet, plan: LevelPlan | None = None,
              kernel: KernelConfig | None = None, K: int = 10_000, delta0: float | None = None,
              rng: np.random.Generator | None = None, exponent: float = 1.0 / 3.0,
              bound: float = 50.0, grad_fn: Callable | None = None, noise_scale: float = 1.0,
              drift: str = "debiased", N_biased: int | None = None) -> ChainResult:
    """Euler-Maruyama SGLD with decreasing steps delta_0 * n^(-exponent).

    ``grad_fn(lam, rng)`` overrides the gradient (e.g. an exact oracle) and
    ``noise_scale=0`` switches the injected noise off; both exist for tests.
    ``drift="biased"`` uses :func:`biased_gradient` instead of the
    debiased estimate and carries no convergence claim.
    """
    lam = features.check_params(lam0).copy()
    if K < 1:
        raise ConfigurationError("K must be >= 1")
    delta0 = default_delta0(M) if delta0 is None else float(delta0)
    if delta0 <= 0:
        raise ConfigurationError("delta0 must be positive")
    if drift not in ("debiased", "biased"):
        raise ConfigurationError(f"unknown drift {drift!r}")
    plan = plan or LevelPlan()
    kernel = kernel or KernelConfig()
    rng = rng if rng is not None else np.random.default_rng()
    J = lam.size
    deltas = step_sizes(K, delta0, exponent)
    lambdas = np.empty((K, J))
    levels = np.full(K, -1, dtype=int)
    costs = np.zeros(K, dtype=np.int64)
    for k in range(K):
        if grad_fn is not None:
            g = np.asarray(grad_fn(lam, rng), dtype=float)
        elif drift == "biased":
            est = biased_gradient(lam, m_hat, M, prior, features,
                                  N_biased or 2 * features.d, kernel, rng)
            g, costs[k] = est.value, est.cost
        else:
            est = gradient_estimate(lam, m_hat, M, prior, features, plan, kernel, rng,
                                    return_info=True)
            g, levels[k], costs[k] = est.value, est.level, est.cost
        delta = deltas[k]
        lam = lam + 0.5 * delta * g + noise_scale * np.sqrt(delta) * rng.standard_normal(J)
        lambdas[k] = lam
        if not np.all(np.isfinite(lam)) or np.max(np.abs(lam)) > bound:
            partial = ChainResult(np.arange(1, k + 2), deltas[:k + 1], lambdas[:k + 1],
                                  levels[:k + 1], costs[:k + 1], np.asarray(lam0, float))
            raise DivergenceError(f"|lambda|_inf exceeded {bound} at step {k + 1}", partial)
    return ChainResult(np.arange(1, K + 1), deltas, lambdas, levels, costs,
                       np.asarray(lam0, dtype=float),
                       {"delta0": delta0, "exponent": exponent, "M": M, "drift": drift})


# --------------------------------------------------------------------------
# post-processing
# --------------------------------------------------------------------------

def weighted_quantile(values, weights, q) -> np.ndarray:
    """Quantiles of a weighted empirical law (midpoint-interpolated CDF)."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    v = values[order]
    w = np.asarray(weights, dtype=float)[order]
    cdf = (np.cumsum(w) - 0.5 * w) / w.sum()
    return np.interp(q, cdf, v)


@dataclass
class PosteriorSummary:
    mean: np.ndarray
    cov: np.ndarray
    std: np.ndarray
    intervals: np.ndarray          # (J, 2) central weighted intervals
    level: float
    marginals: list                # per coordinate: (edges, counts)
    pairwise: dict                 # (i, k) -> (xedges, yedges, counts)
    coords: list
    n_used: int

    def to_dict(self) -> dict:
        return {
            "coords": list(self.coords),
            "n_used": self.n_used,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "cov": self.cov.tolist(),
            "interval_level": self.level,
            "intervals": self.intervals.tolist(),
            "marginals": [
                {"coord": c, "edges": e.tolist(), "counts": h.tolist()}
                for c, (e, h) in zip(self.coords, self.marginals)
            ],
            "pairwise": [
                {"coords": [i, k], "x_edges": xe.tolist(), "y_edges": ye.tolist(),
                 "counts": h.tolist()}
                for (i, k), (xe, ye, h) in sorted(self.pairwise.items())
            ],
        }


def posterior_summary(samples, weights=None, burn_in: float = 0.5, bins: int = 30,
                      coords=None, level: float = 0.99, n_resample: int | None = None,
                      rng: np.random.Generator | None = None) -> PosteriorSummary:
    """Burn-in, weighted moments and resampled histograms.

    ``samples`` is a :class:`ChainResult` or an array of lambda values with
    ``weights``.  Means, covariances and intervals use the weights directly;
    histograms come from a weight-proportional resample of the kept draws.
    """
    if isinstance(samples, ChainResult):
        lams, w = samples.lambdas, samples.deltas
    else:
        lams = np.atleast_2d(np.asarray(samples, dtype=float))
        if lams.shape[0] == 1 and np.ndim(samples) == 1:
            lams = lams.T
        w = np.ones(lams.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    if not 0.0 <= burn_in < 1.0:
        raise ConfigurationError("burn_in must be in [0, 1)")
    start = int(np.floor(burn_in * lams.shape[0]))
    lams, w = lams[start:], w[start:]
    if lams.shape[0] == 0:
        raise ConfigurationError("no samples left after burn-in")
    coords = list(range(lams.shape[1])) if coords is None else list(coords)
    mean = weighted_average(lams, w)
    centred = lams - mean
    cov = (centred * w[:, None]).T @ centred / w.sum()
    alpha = (1.0 - level) / 2.0
    intervals = np.array([weighted_quantile(lams[:, j], w, [alpha, 1.0 - alpha])
                          for j in range(lams.shape[1])])

    rng = rng if rng is not None else np.random.default_rng(0)
    n_res = lams.shape[0] if n_resample is None else n_resample
    idx = rng.choice(lams.shape[0], size=n_res, p=w / w.sum())
    res = lams[idx]
    marginals = [np.histogram(res[:, c], bins=bins) for c in coords]
    marginals = [(e, h) for h, e in marginals]
    pairwise = {}
    for a, i in enumerate(coords):
        for k in coords[a + 1:]:
            h, xe, ye = np.histogram2d(res[:, i], res[:, k], bins=bins)
            pairwise[(i, k)] = (xe, ye, h.astype(int))
    return PosteriorSummary(mean, cov, np.sqrt(np.diag(cov)), intervals, level,
                            marginals, pairwise, coords, int(lams.shape[0]))


def gelman_rubin(chains) -> np.ndarray:
    """Potential scale reduction factor per coordinate (unweighted, equal lengths)."""
    x = np.asarray(chains, dtype=float)
    if x.ndim == 2:
        x = x[:, :, None]
    m, n = x.shape[:2]
    if m < 2 or n < 2:
        raise ConfigurationError("need at least two chains of length two")
    means = x.mean(axis=1)
    b = n * means.var(axis=0, ddof=1)
    wv = x.var(axis=1, ddof=1).mean(axis=0)
    var_hat = (n - 1) / n * wv + b / n
    return np.sqrt(var_hat / wv)


def chain_diagnostics(chain: ChainResult, plan: LevelPlan) -> dict:
    used = chain.levels >= 0
    return {
        "level_counts": chain.level_histogram(plan.L_max),
        "level_probs": plan.probs.tolist(),
        "mean_cost": float(chain.costs[used].mean()) if used.any() else 0.0,
        "total_cost": int(chain.costs.sum()),
    }

