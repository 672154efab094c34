"""Counter-based, splittable random streams.

A stream is keyed by ``(seed, stream_id)``; both words go into the 128-bit
Philox key, so distinct ids give non-overlapping sequences while the counter
provides 2**256 draws per key.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ParameterError

_MASK64 = (1 << 64) - 1


def _mix64(z: int) -> int:
    # splitmix64 finaliser
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class Uniform:
    low: float = 0.0
    high: float = 1.0


@dataclass(frozen=True)
class Normal:
    mean: float = 0.0
    sd: float = 1.0


@dataclass(frozen=True)
class Bernoulli:
    p: float = 0.5


Law = Union[Uniform, Normal, Bernoulli]


class RngStream:
    """Deterministic draw sequence for one ``(seed, stream_id)`` pair."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        key = self.seed | (self.stream_id << 64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def child(self, *keys: int) -> "RngStream":
        """Independent sub-stream; the same keys always give the same child."""
        sid = self.stream_id
        for k in keys:
            sid = _mix64(sid ^ _mix64(int(k) & _MASK64))
        return RngStream(self.seed, sid)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def get_state(self) -> dict:
        st = self._gen.bit_generator.state
        return {
            "seed": self.seed,
            "stream_id": self.stream_id,
            "counter": [int(v) for v in st["state"]["counter"]],
            "buffer": [int(v) for v in st["buffer"]],
            "buffer_pos": int(st["buffer_pos"]),
            "has_uint32": int(st["has_uint32"]),
            "uinteger": int(st["uinteger"]),
        }

    @classmethod
    def from_state(cls, state: dict) -> "RngStream":
        stream = cls(state["seed"], state["stream_id"])
        st = stream._gen.bit_generator.state
        st["state"]["counter"] = np.array(state["counter"], dtype=np.uint64)
        st["buffer"] = np.array(state["buffer"], dtype=np.uint64)
        st["buffer_pos"] = state["buffer_pos"]
        st["has_uint32"] = state["has_uint32"]
        st["uinteger"] = state["uinteger"]
        stream._gen.bit_generator.state = st
        return stream

    # convenience draws
    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, mean=0.0, sd=1.0, size=None):
        return self._gen.normal(mean, sd, size)

    def bernoulli(self, p, size=None):
        return (self._gen.random(size) < p).astype(np.float64)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def choice(self, a, size=None, replace=True, p=None):
        return self._gen.choice(a, size=size, replace=replace, p=p)

    def permutation(self, n):
        return self._gen.permutation(n)


def draw(stream: RngStream, law: Law, shape=()) -> np.ndarray:
    """Draw an array of ``shape`` from ``law``, advancing ``stream``."""
    if isinstance(law, Uniform):
        if not law.low < law.high:
            raise ParameterError(f"uniform needs low < high, got {law}")
        return np.asarray(stream.uniform(law.low, law.high, shape), dtype=np.float64)
    if isinstance(law, Normal):
        if not law.sd > 0:
            raise ParameterError(f"normal needs sd > 0, got {law}")
        return np.asarray(stream.normal(law.mean, law.sd, shape), dtype=np.float64)
    if isinstance(law, Bernoulli):
        if not 0.0 <= law.p <= 1.0:
            raise ParameterError(f"bernoulli needs 0 <= p <= 1, got {law}")
        return np.asarray(stream.bernoulli(law.p, shape), dtype=np.float64)
    raise ParameterError(f"unknown law {law!r}")
