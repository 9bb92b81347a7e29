"""Slotted channel-hopping convergecast simulation with passive multi-channel sniffers.

A run has two stages. ``simulate_traffic`` produces every on-air frame
(sender, slotframe, slot, channel, origin) and decides, for each frame and
each node position, whether a sniffer placed there would have captured it.
``DetectionTrace.stats`` then scores any sniffer set against that record.
Traffic never depends on where sniffers are, so one trace can score many
sniffer sets with common random numbers.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import N_CHANNELS, ConnectivityMatrix, SnifferSet, UsageError, node_quality

log = logging.getLogger(__name__)

METRICS_COLUMNS = (
    "sniffer_link_pdr", "removal_load", "seed", "n_sniffers", "tx_frames", "detected",
    "unique", "multiple", "detection_pct", "unique_pct", "multiple_pct", "collisions_at_sniffers",
)

_CHUNK = 16384


class TopologyError(ValueError):
    """The network cannot carry convergecast traffic (e.g. a node cannot reach the root)."""


@dataclass(frozen=True)
class SimConfig:
    slotframes: int = 1000
    slotframe_length: int = 101
    max_link_attempts: int = 3
    collisions_enabled: bool = True
    root: Optional[int] = None

    def __post_init__(self):
        if self.slotframes < 1 or self.slotframe_length < 1 or self.max_link_attempts < 1:
            raise UsageError("slotframes, slotframe_length and max_link_attempts must all be >= 1")


@dataclass(frozen=True)
class RoutingTree:
    parent: tuple[int, ...]
    root: int

    def depth(self, v: int) -> int:
        d = 0
        while v != self.root:
            v = self.parent[v]
            d += 1
        return d


@dataclass(frozen=True)
class FrameTx:
    sender: int
    slotframe_idx: int
    slot: int
    channel: int
    origin: int


@dataclass
class DetectionStats:
    tx_frames: int = 0
    detected: int = 0
    unique: int = 0
    multiple: int = 0
    per_sniffer_rx: dict[int, int] = field(default_factory=dict)
    collisions_at_sniffers: int = 0

    @property
    def detection_pct(self) -> float:
        return 100.0 * self.detected / self.tx_frames if self.tx_frames else 0.0

    @property
    def unique_pct(self) -> float:
        return 100.0 * self.unique / self.tx_frames if self.tx_frames else 0.0

    @property
    def multiple_pct(self) -> float:
        return 100.0 * self.multiple / self.tx_frames if self.tx_frames else 0.0


def default_root(m: ConnectivityMatrix) -> int:
    """Node with the highest total received PDR; ``np.argmax`` takes the lowest id on ties."""
    return int(np.argmax(node_quality(m)))


def build_tree(m: ConnectivityMatrix, root: int) -> RoutingTree:
    """Breadth-first tree toward ``root`` over links usable on at least one channel.

    A node's parent is the next-hop neighbour one level closer to the root
    with the best mean PDR toward it (lowest id on ties).
    """
    n = m.n_nodes
    if not 0 <= root < n:
        raise UsageError(f"root {root} out of range for n_nodes={n}")
    # usable[u, v]: u can transmit to v on some channel
    usable = (m.pdr > 0).any(axis=2)
    np.fill_diagonal(usable, False)
    mean_pdr = m.pdr.mean(axis=2)
    depth = np.full(n, -1)
    depth[root] = 0
    parent = [-1] * n
    parent[root] = root
    frontier = [root]
    while frontier:
        level = depth[frontier[0]] + 1
        nxt = []
        for u in np.nonzero((depth < 0) & usable[:, frontier].any(axis=1))[0]:
            ups = [v for v in frontier if usable[u, v]]
            parent[u] = min(ups, key=lambda v: (-mean_pdr[u, v], v))
            depth[u] = level
            nxt.append(int(u))
        frontier = sorted(nxt)
    unreachable = [v for v in range(n) if depth[v] < 0]
    if unreachable:
        raise TopologyError(f"node {unreachable[0]} cannot reach root {root} "
                            f"({len(unreachable)} unreachable in total)")
    return RoutingTree(tuple(int(p) for p in parent), root)


@dataclass
class DetectionTrace:
    """Every on-air frame of one run plus per-node capture outcomes.

    ``heard[f, s]`` is true when a sniffer at node ``s`` captures frame ``f``;
    ``collided[f, s]`` marks captures lost to overlapping transmissions.
    """

    sender: np.ndarray
    slotframe: np.ndarray
    slot: np.ndarray
    channel: np.ndarray
    origin: np.ndarray
    heard: np.ndarray
    collided: np.ndarray
    tree: RoutingTree
    delivered_to_root: int = 0

    @property
    def n_frames(self) -> int:
        return len(self.sender)

    def frames(self):
        for row in zip(self.sender, self.slotframe, self.slot, self.channel, self.origin):
            yield FrameTx(*(int(x) for x in row))

    def stats(self, sniffers) -> DetectionStats:
        members = list(sniffers)
        n = self.heard.shape[1]
        if any(not 0 <= v < n for v in members):
            raise UsageError(f"sniffer ids must lie in [0, {n})")
        if not members:
            return DetectionStats(tx_frames=self.n_frames)
        rx = self.heard[:, members]
        count = rx.sum(axis=1)
        unique = int((count == 1).sum())
        multiple = int((count >= 2).sum())
        per = rx.sum(axis=0)
        return DetectionStats(
            tx_frames=self.n_frames,
            detected=unique + multiple,
            unique=unique,
            multiple=multiple,
            per_sniffer_rx={v: int(c) for v, c in zip(members, per)},
            collisions_at_sniffers=int(self.collided[:, members].sum()),
        )


def _generate_frames(m, tree, cfg, rng):
    n, L, attempts = m.n_nodes, cfg.slotframe_length, cfg.max_link_attempts
    pdr = m.pdr
    queues = [deque() for _ in range(n)]
    senders = [v for v in range(n) if v != tree.root]
    out_sender, out_sf, out_slot, out_ch, out_origin = [], [], [], [], []
    delivered = 0
    for sf in range(cfg.slotframes):
        base = sf * L
        for v in senders:
            queues[v].append(v)
        arrivals = []
        for u in senders:
            q = queues[u]
            if not q:
                continue
            parent = tree.parent[u]
            slots = rng.permutation(L)
            # at most len(q) frames and min(L, len(q) * attempts) attempts this slotframe
            offsets = rng.integers(0, N_CHANNELS, size=len(q))
            draws = rng.random(min(L, len(q) * attempts))
            used = 0
            fi = 0
            while q and used < L:
                origin = q[0]
                offset = int(offsets[fi])
                fi += 1
                ok = False
                tries = 0
                while tries < attempts and used < L:
                    slot = int(slots[used])
                    ch = (base + slot + offset) % N_CHANNELS
                    out_sender.append(u)
                    out_sf.append(sf)
                    out_slot.append(slot)
                    out_ch.append(ch)
                    out_origin.append(origin)
                    draw = draws[used]
                    used += 1
                    tries += 1
                    if draw < pdr[u, parent, ch]:
                        ok = True
                        break
                if ok or tries == attempts:
                    q.popleft()
                    if ok:
                        if parent == tree.root:
                            delivered += 1
                        else:
                            arrivals.append((parent, origin))
        # relayed frames are forwarded from the next slotframe on
        for p, origin in arrivals:
            queues[p].append(origin)
    as_arr = lambda xs: np.asarray(xs, dtype=np.int64)
    return (as_arr(out_sender), as_arr(out_sf), as_arr(out_slot), as_arr(out_ch),
            as_arr(out_origin), delivered)


def _collisions(m, sender, slotframe, slot, channel, L):
    n = m.n_nodes
    collided = np.zeros((len(sender), n), dtype=bool)
    if len(sender) < 2:
        return collided
    audible = (m.pdr > 0).transpose(2, 0, 1).copy()  # [ch, sender, listener]
    audible[:, np.arange(n), np.arange(n)] = True
    cell = (slotframe * L + slot) * N_CHANNELS + channel
    order = np.argsort(cell, kind="stable")
    sorted_cells = cell[order]
    starts = np.flatnonzero(np.r_[True, sorted_cells[1:] != sorted_cells[:-1]])
    ends = np.r_[starts[1:], len(order)]
    for a, b in zip(starts, ends):
        if b - a < 2:
            continue
        idx = order[a:b]
        ch = int(channel[idx[0]])
        loud = audible[ch][sender[idx]]  # (k, n)
        total = loud.sum(axis=0)
        collided[idx] = (total[None, :] - loud) >= 1
    return collided


def simulate_traffic(m: ConnectivityMatrix, cfg: SimConfig = SimConfig(), seed: int = 0) -> DetectionTrace:
    root = default_root(m) if cfg.root is None else cfg.root
    tree = build_tree(m, root)
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    traffic_ss, capture_ss = ss.spawn(2)
    sender, sf, slot, ch, origin, delivered = _generate_frames(m, tree, cfg, np.random.default_rng(traffic_ss))
    n = m.n_nodes
    if cfg.collisions_enabled:
        collided = _collisions(m, sender, sf, slot, ch, cfg.slotframe_length)
    else:
        collided = np.zeros((len(sender), n), dtype=bool)
    heard = np.zeros((len(sender), n), dtype=bool)
    rng = np.random.default_rng(capture_ss)
    for a in range(0, len(sender), _CHUNK):
        s, c = sender[a:a + _CHUNK], ch[a:a + _CHUNK]
        p = m.pdr[s, :, c]  # (k, n): PDR from each frame's sender toward every node
        p[np.arange(len(s)), s] = 1.0  # co-located sniffer
        heard[a:a + _CHUNK] = rng.random(p.shape) < p
    heard &= ~collided
    return DetectionTrace(sender, sf, slot, ch, origin, heard, collided, tree, delivered)


def run_simulation(m: ConnectivityMatrix, sniffers, cfg: SimConfig = SimConfig(), seed: int = 0) -> DetectionStats:
    """Simulate ``cfg.slotframes`` slotframes of convergecast and count captures by ``sniffers``."""
    sniffers = SnifferSet.from_iterable(sniffers)
    sniffers.check_range(m.n_nodes)
    return simulate_traffic(m, cfg, seed).stats(sniffers)


def metrics_row(stats: DetectionStats, sniffer_link_pdr, removal_load, seed, n_sniffers) -> dict:
    return {
        "sniffer_link_pdr": sniffer_link_pdr,
        "removal_load": removal_load,
        "seed": seed,
        "n_sniffers": n_sniffers,
        "tx_frames": stats.tx_frames,
        "detected": stats.detected,
        "unique": stats.unique,
        "multiple": stats.multiple,
        "detection_pct": round(stats.detection_pct, 6),
        "unique_pct": round(stats.unique_pct, 6),
        "multiple_pct": round(stats.multiple_pct, 6),
        "collisions_at_sniffers": stats.collisions_at_sniffers,
    }
