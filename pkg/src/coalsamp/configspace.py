"""The lattice of sample configurations.

Configurations of one total size ``m`` over ``K`` alleles form a level of
``C(m+K-1, K-1)`` states.  Within a level they are ordered
lexicographically with the first coordinate descending, so ``(m, 0, ..., 0)``
has rank 0 and ``(0, ..., 0, m)`` is last.  The ordering is frozen: ranks
appear in CSV output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ValidationError

__all__ = [
    "SampleConfig",
    "ConfigRank",
    "count_configs",
    "rank",
    "unrank",
    "level_configs",
    "rank_rows",
    "neighbors",
    "parse_config",
    "format_config",
]


class SampleConfig(tuple):
    """Per-allele counts ``(n_1, ..., n_K)``; a tuple with cached extras."""

    def __new__(cls, counts: Iterable[int]):
        counts = tuple(int(c) for c in counts)
        if not counts:
            raise ValidationError("a configuration needs at least one allele")
        if any(c < 0 for c in counts):
            raise ValidationError(f"negative count in {counts}")
        return super().__new__(cls, counts)

    @property
    def K(self) -> int:
        return len(self)

    @property
    def total(self) -> int:
        return sum(self)

    @property
    def support(self) -> tuple[int, ...]:
        """Observed alleles, in increasing order."""
        return tuple(i for i, c in enumerate(self) if c > 0)

    @property
    def n_observed(self) -> int:
        return sum(1 for c in self if c > 0)

    @classmethod
    def unit(cls, K: int, i: int, m: int = 1) -> "SampleConfig":
        counts = [0] * K
        counts[i] = m
        return cls(counts)

    def add(self, i: int, delta: int = 1) -> "SampleConfig":
        counts = list(self)
        counts[i] += delta
        return SampleConfig(counts)

    def move(self, i: int, j: int) -> "SampleConfig":
        """n - e_i + e_j."""
        counts = list(self)
        counts[i] -= 1
        counts[j] += 1
        return SampleConfig(counts)

    def __repr__(self):
        return f"SampleConfig({list(self)})"


@dataclass(frozen=True)
class ConfigRank:
    size: int
    index: int


def count_configs(K: int, m: int) -> int:
    """Number of configurations of total size m over K alleles."""
    if K < 1 or m < 0:
        return 0
    return math.comb(m + K - 1, K - 1)


def rank(config: Sequence[int]) -> ConfigRank:
    counts = list(config)
    K = len(counts)
    m = sum(counts)
    remaining = m
    index = 0
    for p in range(K - 1):
        c = counts[p]
        # configurations with a larger value at position p and the same prefix
        index += count_configs(K - p, remaining - c - 1)
        remaining -= c
    return ConfigRank(m, index)


def unrank(K: int, size: int, index: int) -> SampleConfig:
    n_level = count_configs(K, size)
    if not 0 <= index < n_level:
        raise DomainError(f"index {index} out of range for level K={K}, m={size} ({n_level} states)")
    counts = []
    remaining = size
    for p in range(K - 1):
        c = remaining
        # walk down from the largest value; each step skips a block of states
        while True:
            block = count_configs(K - p - 1, remaining - c)
            if index < block:
                break
            index -= block
            c -= 1
        counts.append(c)
        remaining -= c
    counts.append(remaining)
    return SampleConfig(counts)


@lru_cache(maxsize=256)
def _level(K: int, m: int) -> np.ndarray:
    if K == 1:
        return np.array([[m]], dtype=np.int64)
    blocks = []
    for c in range(m, -1, -1):
        rest = _level(K - 1, m - c)
        blocks.append(np.column_stack([np.full(len(rest), c, dtype=np.int64), rest]))
    out = np.concatenate(blocks)
    out.flags.writeable = False
    return out


def level_configs(K: int, m: int) -> np.ndarray:
    """All configurations of size m as an (N, K) int array in rank order."""
    if m < 0:
        raise DomainError(f"negative level size {m}")
    return _level(K, m)


@lru_cache(maxsize=32)
def _count_table(K: int, m_max: int) -> np.ndarray:
    # table[k, s + 1] = count_configs(k, s); column 0 stands for s = -1
    t = np.zeros((K + 1, m_max + 2), dtype=np.int64)
    for k in range(1, K + 1):
        for s in range(m_max + 1):
            t[k, s + 1] = count_configs(k, s)
    return t


def rank_rows(configs: np.ndarray) -> np.ndarray:
    """Vectorised rank of each row (all rows must share one total)."""
    configs = np.asarray(configs, dtype=np.int64)
    N, K = configs.shape
    if N == 0:
        return np.zeros(0, dtype=np.int64)
    m = int(configs[0].sum())
    table = _count_table(K, m)
    remaining = np.full(N, m, dtype=np.int64)
    index = np.zeros(N, dtype=np.int64)
    for p in range(K - 1):
        c = configs[:, p]
        index += table[K - p, np.maximum(remaining - c - 1, -1) + 1]
        remaining = remaining - c
    return index


def neighbors(config: Sequence[int]):
    """Configurations adjacent to ``config`` in the exact recursion.

    Returns ``(coalescence, mutation)``.  ``coalescence`` lists
    ``(i, n - e_i, n_i (n_i - 1))`` for every observed i; only ``n_i >= 2``
    gives a non-zero weight.  ``mutation`` lists ``(i, j, n - e_i + e_j)`` for
    every observed i and every j != i.
    """
    config = SampleConfig(config)
    coal, mut = [], []
    if config.total >= 2:
        for i in config.support:
            coal.append((i, config.add(i, -1), config[i] * (config[i] - 1)))
    for i in config.support:
        for j in range(config.K):
            if j != i:
                mut.append((i, j, config.move(i, j)))
    return coal, mut


def parse_config(text: str, K: int | None = None) -> SampleConfig:
    """Parse ``"2,1,1,0"``."""
    try:
        counts = [int(x) for x in text.replace(" ", "").split(",") if x != ""]
    except ValueError:
        raise ValidationError(f"cannot parse configuration {text!r}") from None
    config = SampleConfig(counts)
    if K is not None and len(config) != K:
        raise ValidationError(f"configuration {text!r} has {len(config)} entries, model has K={K}")
    if config.total < 1:
        raise ValidationError("configuration must contain at least one individual")
    return config


def format_config(config: Sequence[int]) -> str:
    return ",".join(str(int(c)) for c in config)
