"""Random spread-spectrum system instances.

The received vector is ``y = (1/sqrt(N)) S x + w`` where ``S`` is the N x K
matrix of unscaled chips. The ``1/sqrt(N)`` factor is never stored; every
consumer applies it explicitly.

Randomness comes from ``numpy.random.SeedSequence``: each trial seed spawns
independent labelled sub-streams for signatures, symbols and noise, so
changing e.g. sigma leaves the signature and symbol draws untouched.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, ParameterError

# Fixed sub-stream labels; changing these changes every generated instance.
STREAMS = {"signatures": 0, "symbols": 1, "noise": 2}


class SignatureDistribution(enum.Enum):
    BINARY = "binary"
    GAUSSIAN = "gaussian"


def stream(seed: int, label: str) -> np.random.Generator:
    """Return the generator for the named sub-stream of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[label],))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class SignatureMatrix:
    """Unscaled N x K chip matrix; column ``i`` is user ``i``'s signature."""

    entries: np.ndarray
    distribution: SignatureDistribution = SignatureDistribution.BINARY

    def __post_init__(self):
        s = np.asarray(self.entries, dtype=float)
        if s.ndim != 2 or 0 in s.shape:
            raise DimensionError(f"signature matrix must be 2-D and non-empty, got shape {s.shape}")
        s.setflags(write=False)
        object.__setattr__(self, "entries", s)

    @property
    def N(self) -> int:
        return self.entries.shape[0]

    @property
    def K(self) -> int:
        return self.entries.shape[1]

    @property
    def is_binary(self) -> bool:
        return bool(np.all(np.abs(self.entries) == 1.0))

    def scaled(self) -> np.ndarray:
        """The effective model matrix S / sqrt(N)."""
        return self.entries / np.sqrt(self.N)


@dataclass(frozen=True)
class SystemInstance:
    signatures: SignatureMatrix
    symbols: np.ndarray
    noise: np.ndarray
    noise_std: float
    received: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("symbols", "noise", "received"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        K, N = self.signatures.K, self.signatures.N
        if self.symbols.shape != (K,):
            raise DimensionError(f"symbols must have shape ({K},), got {self.symbols.shape}")
        if self.noise.shape != (N,) or self.received.shape != (N,):
            raise DimensionError(f"noise and received must have shape ({N},)")
        if self.noise_std < 0:
            raise ParameterError(f"noise_std must be >= 0, got {self.noise_std}")

    @property
    def K(self) -> int:
        return self.signatures.K

    @property
    def N(self) -> int:
        return self.signatures.N

    @property
    def sigma(self) -> float:
        return self.noise_std

    def alpha(self) -> float:
        return self.K / self.N

    def with_received(self, y) -> "SystemInstance":
        """Copy with a different received vector (noise set to y - Sx/sqrt(N))."""
        y = np.asarray(y, dtype=float)
        w = y - self.signatures.scaled() @ self.symbols
        return SystemInstance(self.signatures, self.symbols, w, self.noise_std, y, self.seed)

    def to_json(self) -> str:
        s = self.signatures.entries
        sig = s.astype(int).ravel().tolist() if self.signatures.is_binary else s.ravel().tolist()
        return json.dumps({
            "K": self.K,
            "N": self.N,
            "sigma": self.noise_std,
            "seed": self.seed,
            "distribution": self.signatures.distribution.value,
            "signatures": sig,
            "x": self.symbols.tolist(),
            "w": self.noise.tolist(),
            "y": self.received.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "SystemInstance":
        d = json.loads(text)
        entries = np.asarray(d["signatures"], dtype=float).reshape(d["N"], d["K"])
        dist = SignatureDistribution(d.get("distribution", "binary"))
        return cls(SignatureMatrix(entries, dist), d["x"], d["w"], float(d["sigma"]), d["y"], d.get("seed"))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "SystemInstance":
        return cls.from_json(Path(path).read_text())


def _check_dims(K, N):
    if int(K) < 1 or int(N) < 1:
        raise DimensionError(f"K and N must be >= 1, got K={K}, N={N}")


def generate_signatures(K: int, N: int, dist=SignatureDistribution.BINARY, seed: int = 0) -> SignatureMatrix:
    _check_dims(K, N)
    dist = SignatureDistribution(dist)
    rng = stream(seed, "signatures")
    if dist is SignatureDistribution.BINARY:
        entries = 2.0 * rng.integers(0, 2, size=(N, K)) - 1.0
    else:
        entries = rng.standard_normal((N, K))
    return SignatureMatrix(entries, dist)


def assemble_instance(signatures: SignatureMatrix, x, sigma: float, w=None, seed=None) -> SystemInstance:
    """Build an instance from explicit parts; ``w`` defaults to zero noise."""
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    x = np.asarray(x, dtype=float)
    w = np.zeros(signatures.N) if w is None else np.asarray(w, dtype=float)
    y = signatures.scaled() @ x + w
    return SystemInstance(signatures, x, w, float(sigma), y, seed)


def generate_instance(K: int, N: int, dist=SignatureDistribution.BINARY, sigma: float = 0.1,
                      seed: int = 0) -> SystemInstance:
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    sig = generate_signatures(K, N, dist, seed)
    x = stream(seed, "symbols").standard_normal(K)
    w = sigma * stream(seed, "noise").standard_normal(N)
    return assemble_instance(sig, x, sigma, w, seed)


def matched_filter(instance: SystemInstance) -> np.ndarray:
    """Raw matched-filter statistic (1/sqrt(N)) S^T y."""
    return instance.signatures.scaled().T @ instance.received
