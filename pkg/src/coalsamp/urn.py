"""The urn process on observed alleles and Monte Carlo estimates of R(n).

An urn holds n_i balls of colour i.  Balls are removed uniformly at random.
When the last ball of a colour is removed ("killed") while other colours
remain, another ball is picked uniformly from the urn and returned together
with a copy; the copied colour becomes the parent of the killed one.  The
last surviving colour is the root.  R(n) is the expectation, over the trees
this produces, of

    f_P(T) = pi_root * prod over edges (parent j -> child i) of P_ji.

Viewed without ball order, the process has the same transitions as a
coalescent restricted to histories with one mutation per lost allele, so it
is the only genealogy simulator in the package.

Random numbers come from counter-based Philox streams, one per block of
``BLOCK`` consecutive sample indices, so a run is fixed by (seed, samples)
regardless of how many workers share the blocks.
"""
from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .configspace import SampleConfig
from .errors import DomainError, UnsupportedError
from .model import MutationModel

__all__ = [
    "RootedTree",
    "McEstimate",
    "simulate_urn",
    "simulate_urn_batch",
    "f_P",
    "f_P_batch",
    "mc_estimate_R",
    "tree_distribution",
    "block_rng",
    "BLOCK",
]

BLOCK = 1 << 14
MAX_TREE_VERTICES = 6


@dataclass(frozen=True)
class RootedTree:
    """A rooted tree on observed alleles; ``parent`` maps child -> parent."""

    vertices: tuple[int, ...]
    parent: tuple[tuple[int, int], ...]
    root: int

    @classmethod
    def from_parents(cls, parent: dict[int, int], root: int, vertices=None) -> "RootedTree":
        verts = tuple(sorted(set(vertices or ()) | set(parent) | set(parent.values()) | {root}))
        tree = cls(verts, tuple(sorted(parent.items())), root)
        tree._validate()
        return tree

    def _validate(self):
        if len(self.parent) != len(self.vertices) - 1:
            raise DomainError("a rooted tree on v vertices has v - 1 edges")
        par = dict(self.parent)
        if self.root in par:
            raise DomainError("the root has no parent")
        for v in self.vertices:
            seen = set()
            while v != self.root:
                if v in seen or v not in par:
                    raise DomainError("parent map is cyclic or disconnected")
                seen.add(v)
                v = par[v]

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        """(parent, child) pairs."""
        return tuple((p, c) for c, p in self.parent)

    def undirected(self) -> frozenset:
        return frozenset(frozenset(e) for e in self.edges)

    def degree(self, v: int) -> int:
        return sum(v in e for e in self.edges)

    def __str__(self):
        if not self.parent:
            return f"({self.root})"
        return f"root {self.root}: " + " ".join(f"{p}->{c}" for p, c in self.edges)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    samples: int
    seed: int


def simulate_urn(config: Sequence[int], rng: np.random.Generator) -> RootedTree:
    """One run of the urn, ball by ball."""
    counts = list(SampleConfig(config))
    if sum(counts) < 1:
        raise DomainError("the urn needs at least one ball")
    alive = [c for c in range(len(counts)) if counts[c] > 0]
    vertices = tuple(alive)
    parent: dict[int, int] = {}
    while len(alive) > 1:
        balls = sum(counts)
        colour = _pick(counts, rng.random() * balls)
        counts[colour] -= 1
        if counts[colour] == 0:
            alive.remove(colour)
            src = _pick(counts, rng.random() * (balls - 1))
            counts[src] += 1
            parent[colour] = src
    return RootedTree.from_parents(parent, alive[0], vertices)


def _pick(counts, x):
    acc = 0
    for c, k in enumerate(counts):
        acc += k
        if x < acc:
            return c
    raise AssertionError("uniform draw outside the urn")


def simulate_urn_batch(config: Sequence[int], size: int, rng: np.random.Generator):
    """``size`` independent runs at once.

    Returns ``(parent, root)``: parent is an (size, K) array with the parent
    colour of each killed colour and -1 elsewhere; root is a (size,) array.
    """
    config = SampleConfig(config)
    if config.total < 1:
        raise DomainError("the urn needs at least one ball")
    K = len(config)
    counts = np.tile(np.asarray(config, dtype=np.int64), (size, 1))
    parent = np.full((size, K), -1, dtype=np.int64)
    root = np.full(size, -1, dtype=np.int64)
    n_alive = np.full(size, config.n_observed, dtype=np.int64)
    if config.n_observed == 1:
        root[:] = config.support[0]
        return parent, root
    active = np.arange(size)
    while active.size:
        cnt = counts[active]
        balls = cnt.sum(axis=1)
        cum = np.cumsum(cnt, axis=1)
        colour = (cum <= (rng.random(active.size) * balls)[:, None]).sum(axis=1)
        counts[active, colour] -= 1
        killed = counts[active, colour] == 0
        if killed.any():
            rows = active[killed]
            dead = colour[killed]
            cnt = counts[rows]
            cum = np.cumsum(cnt, axis=1)
            src = (cum <= (rng.random(rows.size) * (balls[killed] - 1))[:, None]).sum(axis=1)
            counts[rows, src] += 1
            parent[rows, dead] = src
            n_alive[rows] -= 1
            done = rows[n_alive[rows] == 1]
            if done.size:
                root[done] = np.argmax(counts[done] > 0, axis=1)
        active = active[n_alive[active] > 1]
    return parent, root


def f_P(tree: RootedTree, model: MutationModel) -> float:
    out = float(model.pi[tree.root])
    for p, c in tree.edges:
        out *= model.P[p, c]
    return out


def f_P_batch(parent: np.ndarray, root: np.ndarray, model: MutationModel) -> np.ndarray:
    w = model.pi[root].astype(float)
    for c in range(parent.shape[1]):
        has = parent[:, c] >= 0
        if has.any():
            w[has] *= model.P[parent[has, c], c]
    return w


def block_rng(seed: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(block,))
    return np.random.Generator(np.random.Philox(ss))


def _blocks(samples: int):
    return [(b, b * BLOCK, min(samples, (b + 1) * BLOCK)) for b in range(-(-samples // BLOCK))]


def _run_blocks(config, samples, seed, workers, fn):
    blocks = _blocks(samples)

    def work(block):
        b, lo, hi = block
        parent, root = simulate_urn_batch(config, hi - lo, block_rng(seed, b))
        fn(lo, hi, parent, root)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(work, blocks))
    else:
        for block in blocks:
            work(block)


def mc_estimate_R(model: MutationModel, config: Sequence[int], samples: int, seed: int,
                  workers: int = 1) -> McEstimate:
    """Sample mean and standard error of f_P over independent urn runs."""
    if samples < 1:
        raise DomainError("samples must be at least 1")
    config = SampleConfig(config)
    if len(config) != model.K:
        raise DomainError(f"configuration has {len(config)} entries, model has K={model.K}")
    values = np.empty(samples)

    def store(lo, hi, parent, root):
        values[lo:hi] = f_P_batch(parent, root, model)

    _run_blocks(config, samples, seed, workers, store)
    # fixed-order pairwise reductions keep the result independent of workers;
    # shifting by the first draw makes a constant f_P give exact moments
    shift = values[0]
    dev = values - shift
    mean = float(shift + np.mean(dev))
    stderr = float(np.std(dev, ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf
    return McEstimate(mean, stderr, samples, seed)


def tree_distribution(model: MutationModel, config: Sequence[int], samples: int, seed: int,
                      workers: int = 1) -> dict[RootedTree, float]:
    """Empirical probability of each rooted tree produced by the urn."""
    config = SampleConfig(config)
    if config.n_observed > MAX_TREE_VERTICES:
        raise UnsupportedError(f"tree tables are limited to {MAX_TREE_VERTICES} observed alleles")
    if samples < 1:
        raise DomainError("samples must be at least 1")
    parents = np.empty((samples, len(config)), dtype=np.int64)
    roots = np.empty(samples, dtype=np.int64)

    def store(lo, hi, parent, root):
        parents[lo:hi] = parent
        roots[lo:hi] = root

    _run_blocks(config, samples, seed, workers, store)
    keys = np.column_stack([parents, roots])
    uniq, freq = np.unique(keys, axis=0, return_counts=True)
    out = {}
    verts = config.support
    for row, k in zip(uniq, freq):
        par = {c: int(p) for c, p in enumerate(row[:-1]) if p >= 0}
        out[RootedTree.from_parents(par, int(row[-1]), verts)] = k / samples
    return out
