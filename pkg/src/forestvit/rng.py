"""Counter-based random streams (Philox): the same key yields the same draw
sequence on every platform, which keeps augmentation and initialization
reproducible bit for bit."""

from __future__ import annotations

import numpy as np


class SeededRng:
    """Thin wrapper over a Philox generator with scalar-draw helpers."""

    def __init__(self, seed: int, stream: int = 0):
        key = np.array([seed, stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size=size)

    def integers(self, low: int, high: int) -> int:
        """One integer uniform over [low, high)."""
        return int(self._gen.integers(low, high))

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self._gen.normal(loc, scale, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def sample_rng(seed: int, sample_index: int) -> SeededRng:
    """Per-sample stream: the run seed xor the global sample index."""
    return SeededRng((int(seed) ^ int(sample_index)) & 0xFFFFFFFFFFFFFFFF)
