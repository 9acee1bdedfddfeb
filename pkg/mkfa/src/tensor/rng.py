"""Seeded counter-based random streams"""
import zlib
from typing import Sequence, Tuple, Union

import numpy as np
from scipy.stats import truncnorm

Key = Union[int, str]


def _key_to_int(key: Key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode('utf-8'))
    if key < 0:
        raise ValueError(f"stream keys must be non-negative, got {key}")
    return int(key)


class SeededRng:
    """
    Philox stream addressed by (seed, path)

    `split(*keys)` derives an independent substream; a sample's stream depends
    only on its (seed, index) path, never on the order streams were created.
    """

    def __init__(self, seed: int, path: Sequence[Key] = ()):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self.path: Tuple[int, ...] = tuple(_key_to_int(k) for k in path)
        sequence = np.random.SeedSequence([self.seed, *self.path])
        self.generator = np.random.Generator(np.random.Philox(sequence))

    def split(self, *keys: Key) -> "SeededRng":
        return SeededRng(self.seed, self.path + tuple(_key_to_int(k) for k in keys))

    def normal(self, size=None, loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
        return self.generator.normal(loc, scale, size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None):
        return self.generator.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def truncated_normal(self, shape: Tuple[int, ...], std: float) -> np.ndarray:
        """Normal samples truncated at two standard deviations"""
        return truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=std, size=shape, random_state=self.generator)

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, path={self.path})"
