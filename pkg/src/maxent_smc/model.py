"""Binary states, feature maps and the exponential-family (MaxEnt / Ising) model.

States are rows of a ``uint8`` array with entries in {0, 1}; a batch of ``n``
states has shape ``(n, d)``.  The unnormalized density is

    q(x | lam) = exp(lam . phi(x))

and everything that needs the partition function goes through the
brute-force enumeration oracle below, which is exact but costs 2^d.

Flat feature ordering for the default first/second-moment set is row-major
over pairs (i, k) with i <= k, so for d = 2 it reads [x1, x1*x2, x2].  This
ordering is part of the file formats and must not change.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .exceptions import CapacityError, ConfigurationError

D_MAX_ORACLE = 20
MAX_BITS = 64
_CHUNK = 1 << 14


# --------------------------------------------------------------------------
# states
# --------------------------------------------------------------------------

def as_states(x, d: int | None = None) -> np.ndarray:
    """Validate and return ``x`` as a 2-D ``uint8`` array of bit rows."""
    arr = np.asarray(x)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ConfigurationError(f"states must be 1-D or 2-D, got shape {arr.shape}")
    if d is not None and arr.shape[1] != d:
        raise ConfigurationError(f"state length {arr.shape[1]} != d = {d}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ConfigurationError("states must contain only 0 and 1")
    return arr.astype(np.uint8, copy=False)


def states_from_index(idx, d: int) -> np.ndarray:
    """Decode integer codes into bit rows; bit 1 is the most significant."""
    idx = np.asarray(idx, dtype=np.uint64)
    shifts = np.arange(d - 1, -1, -1, dtype=np.uint64)
    return ((idx[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)


def states_to_index(states) -> np.ndarray:
    states = np.asarray(states, dtype=np.uint64)
    d = states.shape[1]
    weights = np.uint64(1) << np.arange(d - 1, -1, -1, dtype=np.uint64)
    return (states * weights).sum(axis=1, dtype=np.uint64)


def all_states(d: int) -> np.ndarray:
    """Every state of {0,1}^d in lexicographic order, shape ``(2**d, d)``."""
    return states_from_index(np.arange(2 ** d, dtype=np.uint64), d)


def bits_to_string(state) -> str:
    return "".join("1" if b else "0" for b in np.asarray(state).ravel())


def bits_from_string(s: str) -> np.ndarray:
    s = s.strip()
    if not s or set(s) - {"0", "1"}:
        raise ConfigurationError(f"not a bit string: {s!r}")
    return np.frombuffer(s.encode("ascii"), dtype=np.uint8) - ord("0")


# --------------------------------------------------------------------------
# feature maps
# --------------------------------------------------------------------------

class FeatureSet:
    """Base class for feature maps phi: {0,1}^d -> R^J.

    Subclasses implement :meth:`evaluate_columns`.  ``labels`` gives one
    descriptor per flat index.
    """

    d: int
    labels: list

    @property
    def n_features(self) -> int:
        return len(self.labels)

    def evaluate_columns(self, states: np.ndarray, cols) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, states) -> np.ndarray:
        states = as_states(states, self.d)
        return self.evaluate_columns(states, slice(None))

    def evaluate_prefix(self, states: np.ndarray, j: int) -> np.ndarray:
        """The first ``j`` features only (the partial annealing sums need these)."""
        return self.evaluate_columns(states, slice(0, j))

    def check_params(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (self.n_features,):
            raise ConfigurationError(
                f"parameter vector has shape {lam.shape}, expected ({self.n_features},)"
            )
        if not np.all(np.isfinite(lam)):
            raise ConfigurationError("parameter vector must be finite")
        return lam


class PairFeatures(FeatureSet):
    """Products x_i * x_k over a list of index pairs.

    With ``pairs=None`` this is the full first-and-second-moment set, pairs
    (i, k) with i <= k in row-major order, J = d(d+1)/2.  Since bits are
    idempotent the diagonal pair (i, i) is just x_i.
    """

    def __init__(self, d: int, pairs: Sequence[tuple[int, int]] | None = None):
        if not 1 <= d <= MAX_BITS:
            raise ConfigurationError(f"d must be in [1, {MAX_BITS}], got {d}")
        self.d = int(d)
        if pairs is None:
            pairs = [(i, k) for i in range(d) for k in range(i, d)]
        pairs = [(int(i), int(k)) for i, k in pairs]
        for i, k in pairs:
            if not (0 <= i < d and 0 <= k < d):
                raise ConfigurationError(f"pair {(i, k)} out of range for d={d}")
        self.labels = pairs
        arr = np.array(pairs, dtype=np.intp).reshape(-1, 2)
        self._i = arr[:, 0]
        self._k = arr[:, 1]
        self.is_full = pairs == [(i, k) for i in range(d) for k in range(i, d)]

    def __repr__(self):
        return f"PairFeatures(d={self.d}, J={self.n_features})"

    def evaluate_columns(self, states, cols):
        return states[:, self._i[cols]] * states[:, self._k[cols]]

    def to_matrix(self, lam) -> np.ndarray:
        """Symmetric d x d matrix with Lambda_ik = lam_(i,k), mirrored below."""
        lam = self.check_params(lam)
        mat = np.zeros((self.d, self.d))
        mat[self._i, self._k] = lam
        mat[self._k, self._i] = lam
        return mat

    def from_matrix(self, mat) -> np.ndarray:
        mat = np.asarray(mat, dtype=float)
        if mat.shape != (self.d, self.d):
            raise ConfigurationError(f"matrix shape {mat.shape} != ({self.d}, {self.d})")
        return mat[self._i, self._k].copy()

    def quadratic_form(self, states, mat) -> np.ndarray:
        """lam . phi(x) computed as the upper-triangular expansion of x^T Lambda x.

        Only meaningful for the full pair set; used as an independent check
        of :meth:`evaluate`.
        """
        states = as_states(states, self.d).astype(float)
        upper = np.triu(np.asarray(mat, dtype=float))
        return np.einsum("ni,ik,nk->n", states, upper, states)


class CallableFeatures(FeatureSet):
    """User-registered feature map built from per-feature callables.

    Each callable maps a ``(n, d)`` state batch to a length-``n`` vector.
    """

    def __init__(self, d: int, funcs: Sequence[Callable], labels: Sequence | None = None):
        self.d = int(d)
        self.funcs = list(funcs)
        self.labels = list(labels) if labels is not None else list(range(len(self.funcs)))
        if len(self.labels) != len(self.funcs):
            raise ConfigurationError("one label per feature callable")

    def evaluate_columns(self, states, cols):
        funcs = self.funcs[cols]
        if not funcs:
            return np.zeros((states.shape[0], 0))
        return np.stack([np.asarray(f(states), dtype=float) for f in funcs], axis=1)


def default_features(d: int) -> PairFeatures:
    return PairFeatures(d)


def third_moment_features(d: int) -> CallableFeatures:
    """Example of the pluggable interface: all products x_i x_j x_k with i<=j<=k."""
    triples = [(i, j, k) for i in range(d) for j in range(i, d) for k in range(j, d)]

    def make(i, j, k):
        return lambda s: s[:, i] * s[:, j] * s[:, k]

    return CallableFeatures(d, [make(*t) for t in triples], triples)


# --------------------------------------------------------------------------
# densities
# --------------------------------------------------------------------------

def log_q(x, lam, features: FeatureSet):
    """Log of the unnormalized density, lam . phi(x).

    Returns a float for a single state and an array for a batch.
    """
    lam = features.check_params(lam)
    single = np.ndim(x) == 1
    states = as_states(x, features.d)
    out = features.evaluate(states) @ lam
    return float(out[0]) if single else out


# --------------------------------------------------------------------------
# enumeration oracle
# --------------------------------------------------------------------------

def _check_cap(d, d_cap):
    cap = D_MAX_ORACLE if d_cap is None else d_cap
    if d > cap:
        raise CapacityError(d, cap)


def _chunks(d: int):
    total = 2 ** d
    for start in range(0, total, _CHUNK):
        stop = min(start + _CHUNK, total)
        yield states_from_index(np.arange(start, stop, dtype=np.uint64), d)


def _enumerate_stats(lam, features, d_cap):
    """log Z and E[phi] in one streaming pass with a running max shift."""
    lam = features.check_params(lam)
    _check_cap(features.d, d_cap)
    shift = -np.inf
    total = 0.0
    acc = np.zeros(features.n_features)
    for states in _chunks(features.d):
        phi = features.evaluate(states).astype(float)
        lq = phi @ lam
        top = lq.max()
        if top > shift:
            scale = np.exp(shift - top) if np.isfinite(shift) else 0.0
            total *= scale
            acc *= scale
            shift = top
        w = np.exp(lq - shift)
        total += w.sum()
        acc += w @ phi
    return shift, total, acc / total


def oracle_log_partition(lam, features: FeatureSet, d_cap: int | None = None) -> float:
    shift, total, _ = _enumerate_stats(lam, features, d_cap)
    return float(shift + np.log(total))


def oracle_partition(lam, features: FeatureSet, d_cap: int | None = None) -> float:
    """Z(lam) = sum over all 2^d states of exp(lam . phi(x))."""
    shift, total, _ = _enumerate_stats(lam, features, d_cap)
    return float(np.exp(shift) * total)


def oracle_moments(lam, features: FeatureSet, d_cap: int | None = None) -> np.ndarray:
    """Exact E[phi] under pi(. | lam)."""
    return _enumerate_stats(lam, features, d_cap)[2]


def oracle_entropy(lam, features: FeatureSet, d_cap: int | None = None) -> float:
    """Shannon entropy in nats, using H = log Z - lam . E[phi]."""
    lam = features.check_params(lam)
    shift, total, m = _enumerate_stats(lam, features, d_cap)
    h = float(shift + np.log(total) - lam @ m)
    return max(h, 0.0)


def oracle_probabilities(lam, features: FeatureSet, d_cap: int | None = None) -> np.ndarray:
    """Probabilities of all states in :func:`all_states` order."""
    lam = features.check_params(lam)
    _check_cap(features.d, d_cap)
    lq = np.concatenate([features.evaluate(s) @ lam for s in _chunks(features.d)])
    lq -= lq.max()
    p = np.exp(lq)
    return p / p.sum()


def oracle_sample(lam, features: FeatureSet, rng: np.random.Generator, size=None,
                  d_cap: int | None = None) -> np.ndarray:
    """Exact draws from pi(. | lam) by inverse CDF over the enumerated table.

    ``size=None`` returns one state of shape ``(d,)``; otherwise ``(size, d)``.
    """
    cdf = np.cumsum(oracle_probabilities(lam, features, d_cap))
    n = 1 if size is None else int(size)
    u = rng.random(n) * cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)
    states = states_from_index(idx.astype(np.uint64), features.d)
    return states[0] if size is None else states


def oracle_log_likelihood_gradient(lam, m_hat, M: int, features: FeatureSet,
                                   d_cap: int | None = None) -> np.ndarray:
    """M * (m_hat - E[phi]), the exact gradient of the log-likelihood."""
    return M * (np.asarray(m_hat, dtype=float) - oracle_moments(lam, features, d_cap))


def check_moments(m, features: FeatureSet) -> np.ndarray:
    """Validate a moment vector for the pair feature set (range and x_i x_k <= x_i)."""
    m = np.asarray(m, dtype=float)
    if m.shape != (features.n_features,):
        raise ConfigurationError(f"moment vector has shape {m.shape}, expected ({features.n_features},)")
    if not np.all(np.isfinite(m)):
        raise ConfigurationError("moments must be finite")
    if isinstance(features, PairFeatures):
        if np.any(m < 0) or np.any(m > 1):
            raise ConfigurationError("pair-feature moments must lie in [0, 1]")
        diag = {i: m[j] for j, (i, k) in enumerate(features.labels) if i == k}
        for j, (i, k) in enumerate(features.labels):
            if i != k and i in diag and k in diag and m[j] > min(diag[i], diag[k]) + 1e-12:
                raise ConfigurationError(f"moment ({i},{k}) exceeds min of its diagonal moments")
    return m
