"""On-disk formats.

Observation files (text)::

    # maxent-smc observations v1
    # d=4
    # M=3
    # seed=7
    # lambda=[...]             generating parameters, or null
    # sampler=exact            or mcmc-approximate
    # config_hash=<sha256>
    # version=0.1.0
    0110
    1011
    0000

The packed variant starts with the line ``MXSMC-PACKED v1``, then one JSON
header line, then ``np.packbits`` rows of ceil(d/8) bytes each.

CSV outputs carry the same ``# key=value`` provenance lines before the
column header.  Floats are written with 17 significant digits.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError
from .model import bits_from_string, bits_to_string

TEXT_MAGIC = "# maxent-smc observations v1"
PACKED_MAGIC = b"MXSMC-PACKED v1\n"
_HEADER_KEYS = ("d", "M", "seed", "lambda", "sampler", "config_hash", "version")


def fmt(x) -> str:
    return format(float(x), ".17g")


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_default)
        fh.write("\n")


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class ObservationFile:
    states: np.ndarray
    seed: int | None = None
    lam: np.ndarray | None = None
    sampler: str = "exact"
    config_hash: str = ""
    version: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.states.shape[1]

    @property
    def M(self) -> int:
        return self.states.shape[0]

    def header(self) -> dict:
        return {
            "d": self.d,
            "M": self.M,
            "seed": self.seed,
            "lambda": None if self.lam is None else [float(v) for v in self.lam],
            "sampler": self.sampler,
            "config_hash": self.config_hash,
            "version": self.version,
        }


def _header_value(v) -> str:
    if isinstance(v, list):
        return "[" + ", ".join(fmt(x) for x in v) + "]"
    return json.dumps(v) if v is None else str(v)


def write_observations(obs: ObservationFile, path, packed: bool = False) -> None:
    if packed:
        rows = np.packbits(obs.states, axis=1)
        with open(path, "wb") as fh:
            fh.write(PACKED_MAGIC)
            fh.write(json.dumps(obs.header(), sort_keys=True).encode() + b"\n")
            fh.write(rows.tobytes())
        return
    lines = [TEXT_MAGIC]
    for key, value in obs.header().items():
        lines.append(f"# {key}={_header_value(value)}")
    lines.extend(bits_to_string(row) for row in obs.states)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_header_value(key, raw):
    raw = raw.strip()
    if key in ("d", "M"):
        return int(raw)
    if key == "seed":
        return None if raw == "null" else int(raw)
    if key == "lambda":
        return json.loads(raw)
    return raw


def read_observations(path) -> ObservationFile:
    """Read either format and check rows against the header."""
    try:
        with open(path, "rb") as fh:
            head = fh.read(len(PACKED_MAGIC))
    except FileNotFoundError:
        raise ConfigurationError(f"observations file not found: {path}") from None
    if head == PACKED_MAGIC:
        return _read_packed(path)
    header = {}
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, raw = body.split("=", 1)
                    header[key.strip()] = _parse_header_value(key.strip(), raw)
                continue
            try:
                rows.append(bits_from_string(line))
            except ConfigurationError:
                raise ConfigurationError(f"{path}:{lineno}: not a bit string") from None
    if not rows:
        raise ConfigurationError(f"{path}: no observations")
    d = header.get("d", rows[0].size)
    if any(r.size != d for r in rows):
        raise ConfigurationError(f"{path}: every row must have exactly d={d} bits")
    states = np.vstack(rows).astype(np.uint8)
    if "M" in header and header["M"] != states.shape[0]:
        raise ConfigurationError(f"{path}: header says M={header['M']}, found {states.shape[0]} rows")
    return _from_header(states, header)


def _from_header(states, header):
    lam = header.get("lambda")
    return ObservationFile(
        states=states,
        seed=header.get("seed"),
        lam=None if lam is None else np.asarray(lam, dtype=float),
        sampler=header.get("sampler", "exact"),
        config_hash=header.get("config_hash", ""),
        version=header.get("version", ""),
    )


def _read_packed(path):
    with open(path, "rb") as fh:
        fh.readline()
        header = json.loads(fh.readline())
        payload = fh.read()
    d, M = header["d"], header["M"]
    width = (d + 7) // 8
    if len(payload) != width * M:
        raise ConfigurationError(f"{path}: packed payload size does not match d={d}, M={M}")
    rows = np.frombuffer(payload, dtype=np.uint8).reshape(M, width)
    states = np.unpackbits(rows, axis=1, count=d)
    return _from_header(states, header)


def read_moments(path) -> np.ndarray:
    """Moments from JSON (a list or {"moments": [...]}) or whitespace-separated text."""
    try:
        with open(path) as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigurationError(f"moments file not found: {path}") from None
    try:
        data = json.loads(text)
        if isinstance(data, dict):
            data = data["moments"]
        return np.asarray(data, dtype=float)
    except (json.JSONDecodeError, KeyError):
        pass
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    return np.asarray(" ".join(lines).split(), dtype=float)


def write_csv(path, header: list[str], rows, provenance: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for key, value in (provenance or {}).items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, (int, np.integer)) else fmt(v) for v in row])


def read_csv(path) -> tuple[dict, list[str], np.ndarray]:
    """Returns (provenance, header, data array)."""
    prov = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            prov[key] = value
        else:
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    data = np.array([[float(v) for v in row] for row in reader], dtype=float)
    return prov, header, data.reshape(-1, len(header))


def write_trace(trace, path, provenance: dict | None = None) -> None:
    write_csv(path, trace.header(), trace.rows(), provenance)


def write_samples(chain, path, provenance: dict | None = None) -> None:
    J = chain.lambdas.shape[1]
    header = ["n", "delta_n", *[f"lambda_{j + 1}" for j in range(J)]]
    rows = ((int(n), dl, *lam) for n, dl, lam in zip(chain.n, chain.deltas, chain.lambdas))
    write_csv(path, header, rows, provenance)
