"""Random-walk corpora, co-occurrence weights, PPMI and the negative-sampling noise."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError
from .graph import Graph


@dataclass(frozen=True, eq=False)
class WalkSet:
    walks: np.ndarray  # (num_walks, walk_length) node ids
    walk_length: int
    walks_per_node: int
    seed: int | None
    node_count: int

    def __len__(self):
        return len(self.walks)

    def write(self, stream, labels=None) -> None:
        """One walk per line, space-separated node labels."""
        for walk in self.walks:
            if labels is None:
                stream.write(" ".join(map(str, walk)) + "\n")
            else:
                stream.write(" ".join(labels[v] for v in walk) + "\n")


def _walk_from(graph: Graph, starts: np.ndarray, walk_length: int, rng) -> np.ndarray:
    indptr, _, w = graph._csr
    indices = graph.indices
    cum = np.cumsum(w)
    cum_before = np.concatenate([[0.0], cum])
    rowsum = graph.degrees
    walks = np.empty((len(starts), walk_length), dtype=np.int64)
    walks[:, 0] = cur = starts
    for step in range(1, walk_length):
        target = cum_before[indptr[cur]] + rng.random(len(cur)) * rowsum[cur]
        pos = np.searchsorted(cum, target, side="right")
        pos = np.clip(pos, indptr[cur], indptr[cur + 1] - 1)
        walks[:, step] = cur = indices[pos]
    return walks


def random_walks(graph: Graph, walk_length: int = 40, walks_per_node: int = 1,
                 seed: int | None = 0, workers: int = 1) -> WalkSet:
    """DeepWalk-style truncated random walks.

    Every pass visits each node once as a start node, in a freshly shuffled
    order.  The next hop is drawn proportionally to edge weight.  With
    ``workers > 1`` the start schedule is split into chunks walked on
    independent RNG streams spawned from ``seed``; output is still
    reproducible for a fixed worker count but differs from sequential mode.
    """
    if walk_length < 2:
        raise DomainError(f"walk_length must be >= 2, got {walk_length}")
    if walks_per_node < 1:
        raise DomainError(f"walks_per_node must be >= 1, got {walks_per_node}")
    ss = np.random.SeedSequence(seed)
    rng = np.random.default_rng(ss)
    starts = np.concatenate([rng.permutation(graph.node_count)
                             for _ in range(walks_per_node)])
    if workers <= 1:
        walks = _walk_from(graph, starts, walk_length, rng)
    else:
        chunks = np.array_split(starts, workers)
        rngs = [np.random.default_rng(s) for s in ss.spawn(workers)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda cr: _walk_from(graph, cr[0], walk_length, cr[1]),
                                  zip(chunks, rngs)))
        walks = np.concatenate(parts)
    return WalkSet(walks, walk_length, walks_per_node, seed, graph.node_count)


@dataclass(frozen=True, eq=False)
class CooccurrenceTable:
    """Symmetric sparse pair weights ``w_ij`` sorted by ``(i, j)``.

    ``node_counts`` are the marginal counts of each node in the pair corpus
    and ``total_pairs`` the size of that corpus; with symmetric accumulation
    these coincide with ``row_sums`` and ``total``.
    """

    node_count: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_pairs(cls, node_count: int, pairs: dict, symmetric: bool = True):
        acc: dict = {}
        for (i, j), w in pairs.items():
            acc[(i, j)] = acc.get((i, j), 0.0) + w
            if symmetric and i != j:
                acc[(j, i)] = acc.get((j, i), 0.0) + w
        keys = sorted(acc)
        rows = np.array([k[0] for k in keys], dtype=np.int64)
        cols = np.array([k[1] for k in keys], dtype=np.int64)
        return cls(node_count, rows, cols, np.array([acc[k] for k in keys], dtype=float))

    def __len__(self):
        return len(self.rows)

    @cached_property
    def row_sums(self) -> np.ndarray:
        return np.bincount(self.rows, weights=self.weights, minlength=self.node_count)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @property
    def node_counts(self) -> np.ndarray:
        return self.row_sums

    @property
    def total_pairs(self) -> float:
        return self.total

    def weight(self, i: int, j: int) -> float:
        key = i * self.node_count + j
        keys = self.rows * self.node_count + self.cols
        pos = np.searchsorted(keys, key)
        if pos < len(keys) and keys[pos] == key:
            return float(self.weights[pos])
        return 0.0


def cooccurrence(walks: WalkSet, window: int = 5) -> CooccurrenceTable:
    """Count every (center, context) pair within ``window`` hops, both directions."""
    if window < 1:
        raise DomainError(f"window must be >= 1, got {window}")
    n = walks.node_count
    seqs = walks.walks
    keys = []
    for offset in range(1, min(window, seqs.shape[1] - 1) + 1):
        left = seqs[:, :-offset].ravel()
        right = seqs[:, offset:].ravel()
        keys.append(left * n + right)
        keys.append(right * n + left)
    if not keys or seqs.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return CooccurrenceTable(n, empty, empty, np.zeros(0))
    uniq, counts = np.unique(np.concatenate(keys), return_counts=True)
    return CooccurrenceTable(n, uniq // n, uniq % n, counts.astype(np.float64))


@dataclass(frozen=True, eq=False)
class PairScores:
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __len__(self):
        return len(self.values)

    def as_dict(self) -> dict:
        return {(int(i), int(j)): float(v)
                for i, j, v in zip(self.rows, self.cols, self.values)}

    def write_csv(self, stream, labels=None) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["src", "dst", "ppmi"])
        for i, j, v in zip(self.rows, self.cols, self.values):
            a, b = (labels[i], labels[j]) if labels is not None else (i, j)
            writer.writerow([a, b, f"{v:.9g}"])


def ppmi(table: CooccurrenceTable) -> PairScores:
    """``max(0, ln(w_ij * |D| / (#i * #j)))`` with non-positive entries dropped."""
    if len(table) == 0:
        raise DomainError("PPMI of an empty co-occurrence table")
    counts = table.node_counts
    pmi = np.log(table.weights * table.total_pairs
                 / (counts[table.rows] * counts[table.cols]))
    keep = pmi > 0
    return PairScores(table.rows[keep], table.cols[keep], pmi[keep])


@dataclass(frozen=True, eq=False)
class NoiseDistribution:
    """``P_n(v) ∝ d_v^alpha`` with Vose alias tables for O(1) draws."""

    probabilities: np.ndarray
    accept: np.ndarray
    alias: np.ndarray
    alpha: float

    def sample(self, rng, size=None):
        n = len(self.probabilities)
        slot = rng.integers(n, size=size)
        coin = rng.random(size)
        return np.where(coin < self.accept[slot], slot, self.alias[slot])


def _alias_tables(probabilities: np.ndarray):
    n = len(probabilities)
    scaled = probabilities * n
    accept = np.ones(n)
    alias = np.arange(n)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s, g = small.pop(), large.pop()
        accept[s] = scaled[s]
        alias[s] = g
        scaled[g] = scaled[g] + scaled[s] - 1.0
        (small if scaled[g] < 1.0 else large).append(g)
    # leftovers are 1 up to rounding
    return accept, alias


def build_noise_distribution(source, alpha: float = 1.0) -> NoiseDistribution:
    """Noise distribution from a :class:`Graph`, a table's row sums, or raw degrees."""
    if isinstance(source, Graph):
        degrees = source.degrees
    elif isinstance(source, CooccurrenceTable):
        degrees = source.row_sums
    else:
        degrees = np.asarray(source, dtype=np.float64)
    if degrees.size == 0 or np.any(degrees <= 0):
        raise DomainError("noise distribution needs strictly positive degrees")
    with np.errstate(over="ignore"):
        powered = degrees ** alpha
        total = powered.sum()
    if not np.all(np.isfinite(powered)) or not np.isfinite(total) or total <= 0:
        raise DomainError(f"degrees**{alpha} is not finite")
    probabilities = powered / total
    accept, alias = _alias_tables(probabilities)
    return NoiseDistribution(probabilities, accept, alias, float(alpha))
