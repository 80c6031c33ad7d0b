"""Experiment configuration: JSON file plus command-line overrides."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .exceptions import ConfigurationError
from .model import D_MAX_ORACLE

OUT_DIR_ENV = "MAXENT_SMC_OUT_DIR"
MODES = ("simulate", "maxent_exact", "mle", "posterior", "oracle")

# keys that name files or directories; they never enter the config hash
_PATH_KEYS = ("observations", "moments", "out_dir")


@dataclass
class ExperimentConfig:
    mode: str = "maxent_exact"
    d: int = 4
    # generating / true parameters: a list, "random" (U[-r, r]^J) or "zero"
    lam: object = "random"
    lambda_range: float = 1.0
    negate: bool = False
    seed: int = 0
    # sampler
    N: int | None = None
    beta: float = 0.6
    kernel: str = "metropolis_bitflip"
    sweeps: int | None = None
    resampling: str = "multinomial"
    # Robbins-Monro
    schedule: str = "two_phase"
    epsilon: float = 1.0
    n0: float | None = None
    switch_n: int | None = None
    K: int = 10_000
    bound: float = 50.0
    track_misfit: bool | None = None
    misfit_every: int = 1
    # data
    M: int = 1000
    observations: str | None = None
    moments: str | None = None
    packed: bool = False
    mcmc_sampling: bool = False
    mcmc_burn_in: int | None = None
    # debiasing / SGLD
    N0: int = 64
    growth: int = 4
    L_max: int = 6
    delta0: float | None = None
    exponent: float = 1.0 / 3.0
    prior: dict = field(default_factory=lambda: {"kind": "flat_improper"})
    drift: str = "debiased"
    burn_in: float = 0.5
    bins: int = 30
    # harness
    d_cap: int = D_MAX_ORACLE
    out_dir: str | None = None
    replicates: int = 1
    plot: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {unknown}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigurationError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigurationError(f"config file {path} must hold a JSON object")
        # input paths are relative to the config file, not the working directory
        base = os.path.dirname(os.path.abspath(path))
        for key in ("observations", "moments"):
            if isinstance(data.get(key), str) and not os.path.isabs(data[key]):
                data[key] = os.path.join(base, data[key])
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out

    def hash(self, extra: dict | None = None) -> str:
        """sha256 over the canonical JSON of everything but path-valued keys."""
        payload = {k: v for k, v in self.to_dict().items() if k not in _PATH_KEYS}
        if extra:
            payload.update(extra)
        blob = json.dumps(payload, sort_keys=True, default=_jsonable)
        return hashlib.sha256(blob.encode()).hexdigest()

    def resolve_out_dir(self) -> str:
        return self.out_dir or os.environ.get(OUT_DIR_ENV) or "maxent_smc_out"

    def validate(self) -> "ExperimentConfig":
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 1 <= int(self.d) <= 64:
            raise ConfigurationError("d must be in [1, 64]")
        if self.K < 1 or self.M < 1:
            raise ConfigurationError("K and M must be positive")
        if self.replicates < 1:
            raise ConfigurationError("replicates must be >= 1")
        if self.mode in ("mle", "posterior") and not self.observations:
            raise ConfigurationError(f"mode {self.mode!r} needs an observations file")
        if self.mode == "maxent_exact" and self.lam is None and not self.moments:
            raise ConfigurationError("maxent_exact needs true parameters or a moments file")
        if not isinstance(self.lam, (list, tuple)) and self.lam not in ("random", "zero", None):
            raise ConfigurationError("lambda must be a list, 'random' or 'zero'")
        if not 0.0 <= self.burn_in < 1.0:
            raise ConfigurationError("burn_in must be in [0, 1)")
        return self


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def seed_streams(seed: int, n: int) -> list[np.random.Generator]:
    """Independent generators derived from one master seed, in a fixed order."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def true_parameters(cfg: ExperimentConfig, J: int, rng: np.random.Generator) -> np.ndarray | None:
    """Resolve the generating parameters; ``negate`` flips the sign (exp(-x^T A x) convention)."""
    if cfg.lam is None:
        return None
    if cfg.lam == "random":
        lam = rng.uniform(-cfg.lambda_range, cfg.lambda_range, size=J)
    elif cfg.lam == "zero":
        lam = np.zeros(J)
    else:
        lam = np.asarray(cfg.lam, dtype=float)
        if lam.shape != (J,):
            raise ConfigurationError(f"lambda has length {lam.size}, expected J = {J}")
    return -lam if cfg.negate else lam
