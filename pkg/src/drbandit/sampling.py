"""Seeded randomness for the learners.

Streams wrap numpy's counter-based Philox generator keyed by a SeedSequence,
so a stream derived from ``(seed, run_index)`` is reproducible no matter the
order in which runs execute.
"""
from __future__ import annotations

import math

import numpy as np

_E_INV = math.exp(-1.0)
_ONE_MINUS_E_INV = 1.0 - _E_INV

#: mean of the exploration scale Z, 1/(e - 1)
Z_MEAN = 1.0 / (math.e - 1.0)


class RandomStream:
    """Deterministic draw source owned by a single run.

    Parameters
    ----------
    seed : int
        Non-negative 64-bit seed.
    run_index : int or tuple of int
        Path of child indices; distinct paths give unrelated streams.
    """

    def __init__(self, seed: int, run_index: int | tuple[int, ...] = ()):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
        key = (run_index,) if isinstance(run_index, (int, np.integer)) else tuple(run_index)
        self.seed = seed
        self.path = tuple(int(k) for k in key)
        self._seq = np.random.SeedSequence(entropy=seed, spawn_key=self.path)
        self.generator = np.random.Generator(np.random.Philox(self._seq))

    def child(self, index: int) -> "RandomStream":
        """Independent sub-stream; does not consume draws from this one."""
        return RandomStream(self.seed, self.path + (int(index),))

    @property
    def counter(self) -> int:
        """Number of 256-bit Philox blocks produced so far."""
        state = self.generator.bit_generator.state["state"]["counter"]
        return int(state[0]) | (int(state[1]) << 64)

    def uniform(self, size=None):
        return self.generator.random(size)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, path={self.path})"


def as_stream(seed_or_stream) -> RandomStream:
    if isinstance(seed_or_stream, RandomStream):
        return seed_or_stream
    if seed_or_stream is None:
        return RandomStream(0)
    return RandomStream(int(seed_or_stream))


def z_cdf(z):
    """P(Z <= z) for the density e^{z-1}/(1 - 1/e) on [0, 1]."""
    z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
    return (np.exp(z - 1.0) - _E_INV) / _ONE_MINUS_E_INV


def z_quantile(p):
    """Inverse of :func:`z_cdf`."""
    p = np.asarray(p, dtype=float)
    z = 1.0 + np.log(_E_INV + p * _ONE_MINUS_E_INV)
    return np.clip(z, 0.0, 1.0)


def sample_z(stream: RandomStream, size=None):
    p = stream.uniform(size)
    z = z_quantile(p)
    return float(z) if size is None else z


def sample_unit_sphere(stream: RandomStream, d: int) -> np.ndarray:
    if d < 1:
        raise ValueError("dimension must be >= 1")
    while True:
        g = stream.normal(d)
        nrm = float(np.linalg.norm(g))
        if nrm > 0.0:
            return g / nrm


def sample_exploration_index(stream: RandomStream, d: int) -> int:
    """-1 with probability 1/2, otherwise a uniform coordinate in [0, d)."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    p = float(stream.uniform())
    if p < 0.5:
        return -1
    return min(int((p - 0.5) * 2.0 * d), d - 1)


def sample_exploration_coordinate(stream: RandomStream, d: int) -> np.ndarray:
    """Zero vector with probability 1/2, else e_i with probability 1/(2d) each."""
    i = sample_exploration_index(stream, d)
    u = np.zeros(d)
    if i >= 0:
        u[i] = 1.0
    return u


def sample_block_round(stream: RandomStream, block_start: int, block_len: int) -> int:
    if block_len < 1:
        raise ValueError("block_len must be >= 1")
    return int(block_start) + int(stream.integers(0, block_len))


def sample_unit_ball(stream: RandomStream, d: int, n: int) -> np.ndarray:
    """``n`` uniform points of the d-dimensional unit ball."""
    g = stream.normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = stream.uniform(n) ** (1.0 / d)
    return g * r[:, None]
