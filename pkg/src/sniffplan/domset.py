"""Per-channel coverage relations and dominating-set solvers.

Coverage sets are kept as integer bitmasks (bit ``u`` set in ``masks[v]``
means sniffer ``v`` hears node ``u``), which makes the domination test a
handful of ORs.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .model import ConnectivityMatrix, SnifferSet, UsageError, check_channel

EXACT_MAX_NODES = 20


@dataclass(frozen=True)
class CoverageRelation:
    n_nodes: int
    masks: tuple[int, ...]

    def __post_init__(self):
        if len(self.masks) != self.n_nodes:
            raise UsageError(f"{len(self.masks)} coverage masks for n_nodes={self.n_nodes}")
        full = (1 << self.n_nodes) - 1
        for v, mask in enumerate(self.masks):
            if not mask >> v & 1:
                raise UsageError(f"node {v} does not cover itself")
            if mask & ~full:
                raise UsageError(f"coverage of node {v} references nodes >= {self.n_nodes}")

    @classmethod
    def from_sets(cls, n_nodes: int, covers: Sequence[Iterable[int]]) -> "CoverageRelation":
        """Build from explicit sets; self-coverage is added if missing."""
        masks = []
        for v, members in enumerate(covers):
            mask = 1 << v
            for u in members:
                mask |= 1 << int(u)
            masks.append(mask)
        return cls(n_nodes, tuple(masks))

    @classmethod
    def from_adjacency(cls, adj: np.ndarray) -> "CoverageRelation":
        """``adj[u, v]`` true means sniffer ``v`` hears node ``u``."""
        adj = np.asarray(adj, dtype=bool)
        n = adj.shape[0]
        weights = [1 << u for u in range(n)]
        masks = tuple((1 << v) | sum(w for w, hit in zip(weights, adj[:, v]) if hit) for v in range(n))
        return cls(n, masks)

    def covers(self, v: int) -> set[int]:
        mask = self.masks[v]
        return {u for u in range(self.n_nodes) if mask >> u & 1}

    @property
    def full_mask(self) -> int:
        return (1 << self.n_nodes) - 1

    def max_degree(self) -> int:
        """Largest ``|covers(v)| - 1``."""
        return max(bin(m).count("1") for m in self.masks) - 1


@dataclass(frozen=True)
class DomSetResult:
    members: SnifferSet
    method: str


def build_coverage(m: ConnectivityMatrix, ch: int, sniffer_link_pdr: float) -> CoverageRelation:
    """Sniffer ``v`` covers itself and every ``u`` with PDR(u -> v, ch) strictly above the threshold."""
    if not 0.0 <= sniffer_link_pdr <= 1.0:
        raise UsageError(f"sniffer_link_pdr must lie in [0, 1], got {sniffer_link_pdr}")
    check_channel(ch)
    return CoverageRelation.from_adjacency(m.pdr[:, :, ch] > sniffer_link_pdr)


def covered_mask(members: Iterable[int], cov: CoverageRelation) -> int:
    mask = 0
    for v in members:
        mask |= cov.masks[v]
    return mask


def is_dominating(s: Iterable[int], cov: CoverageRelation) -> bool:
    return covered_mask(s, cov) == cov.full_mask


def first_uncovered(s: Iterable[int], cov: CoverageRelation):
    """Lowest node id not covered by ``s``, or None."""
    missing = cov.full_mask & ~covered_mask(s, cov)
    if not missing:
        return None
    return (missing & -missing).bit_length() - 1


def greedy_min_dominating_set(cov: CoverageRelation) -> DomSetResult:
    """Greedy set cover over closed coverage sets; ties go to the lowest node id."""
    uncovered = cov.full_mask
    picked = []
    while uncovered:
        best, best_gain = -1, 0
        for v, mask in enumerate(cov.masks):
            gain = bin(mask & uncovered).count("1")
            if gain > best_gain:
                best, best_gain = v, gain
        picked.append(best)
        uncovered &= ~cov.masks[best]
    return DomSetResult(SnifferSet(tuple(picked)), "greedy")


def exact_min_dominating_set(cov: CoverageRelation) -> DomSetResult:
    """Minimum dominating set by enumerating subsets in increasing size.

    Within one size, subsets come in lexicographic order, so the first hit
    is the lexicographically smallest optimum.
    """
    n = cov.n_nodes
    if n > EXACT_MAX_NODES:
        raise UsageError(f"exact solver limited to {EXACT_MAX_NODES} nodes, got {n}")
    full = cov.full_mask
    for k in range(1, n + 1):
        for subset in combinations(range(n), k):
            mask = 0
            for v in subset:
                mask |= cov.masks[v]
            if mask == full:
                return DomSetResult(SnifferSet(subset), "exact")
    raise AssertionError("the full node set always dominates")


def read_relation(path) -> CoverageRelation:
    """Parse a small relation file: first line ``n``, then ``v: u1 u2 ...`` lines.

    Blank lines and ``#`` comments are skipped. Nodes without a line cover
    only themselves.
    """
    n = None
    covers: dict[int, list[int]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                if n is None:
                    n = int(line)
                    continue
                head, _, tail = line.partition(":")
                covers.setdefault(int(head), []).extend(int(u) for u in tail.split())
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if n is None:
        raise ValueError(f"{path}: empty relation file")
    for v, us in covers.items():
        if not 0 <= v < n or any(not 0 <= u < n for u in us):
            raise ValueError(f"{path}: node id out of range for n={n}")
    return CoverageRelation.from_sets(n, [covers.get(v, ()) for v in range(n)])
