"""Numerically stable probability primitives and seeded random streams.

Everything here is a pure function of its inputs except :class:`RngStream`,
which owns explicit counter-based random state so that any computation in the
package can be replayed bit-exactly from a seed.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError


class RngStream:
    """Deterministic random stream backed by the counter-based Philox engine.

    Identical ``(seed, spawn_key)`` pairs produce bit-identical sample
    sequences across runs and platforms. Streams are single-owner: derive an
    independent child with :meth:`child` instead of sharing one stream between
    workers.
    """

    def __init__(self, seed: int, spawn_key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.spawn_key = tuple(int(k) for k in spawn_key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def child(self, index: int) -> "RngStream":
        """Independent stream keyed by (seed, ..., index), e.g. one per input."""
        return RngStream(self.seed, self.spawn_key + (int(index),))

    def standard_normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def bernoulli(self, keep_prob: float, shape) -> np.ndarray:
        """0/1 draws with P(1) = keep_prob."""
        return (self._gen.random(shape) < keep_prob).astype(np.float64)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def random(self, size=None):
        return self._gen.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, spawn_key={self.spawn_key})"


def softmax(z: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, stabilized by max-subtraction.

    Accepts a single logit vector or any batch shape ``(..., C)``. Raises
    :class:`InvalidInputError` on non-finite input.
    """
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("softmax input contains NaN or Inf")
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def normalized_entropy(p: np.ndarray) -> np.ndarray | float:
    """Shannon entropy over the last axis divided by log(C), in [0, 1].

    The 0*log(0) terms are taken as 0. Requires C >= 2 (log C = 0 otherwise).
    """
    p = np.asarray(p, dtype=np.float64)
    c = p.shape[-1]
    if c < 2:
        raise InvalidInputError("normalized entropy needs at least 2 classes")
    if not np.all(np.isfinite(p)):
        raise InvalidInputError("probability vector contains NaN or Inf")
    terms = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    h = -np.sum(terms, axis=-1) / np.log(c)
    # clip fp dust so callers can rely on the [0, 1] contract
    h = np.clip(h, 0.0, 1.0)
    return float(h) if h.ndim == 0 else h


def standard_normal(rng: RngStream, n: int) -> np.ndarray:
    """n i.i.d. N(0,1) draws from the given stream."""
    return rng.standard_normal(int(n))
