"""Connectivity matrices from trace files or from a random-placement generator.

The generator places nodes uniformly in a square, derives per-channel RSSI
from log-distance path loss plus a frozen Gaussian fading offset per
(link, channel), and maps RSSI to PDR with a linear waterfall. Nodes that
lack enough good neighbours are moved next to a well-connected node until
every node has ``min_neighbors`` neighbours whose worst-channel PDR exceeds
``neighbor_min_pdr`` and all nodes form one cluster over such links.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.sparse.csgraph import connected_components

from .model import (
    IEEE_FIRST_CHANNEL,
    N_CHANNELS,
    ConnectivityMatrix,
    MatrixError,
    UsageError,
)

log = logging.getLogger(__name__)

TRACE_HEADER = ("src", "dst", "channel", "pdr", "rssi_dbm")
TOPOLOGY_FORMAT = "sniffplan-topology/1"

WATERFALL_LOW_DBM = -97.0
WATERFALL_HIGH_DBM = -87.0
REPAIR_RADIUS_M = 300.0
MAX_RESTARTS = 100


class GenerationError(RuntimeError):
    pass


class TraceParseError(ValueError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True)
class Position:
    x: float
    y: float


@dataclass(frozen=True)
class TopologyConfig:
    n_nodes: int = 50
    area_side_m: float = 2000.0
    min_neighbors: int = 3
    neighbor_min_pdr: float = 0.5
    tx_power_dbm: float = 0.0
    path_loss_exponent: float = 2.0
    ref_loss_db_at_1m: float = 40.0
    fading_sigma_db: float = 3.0
    max_regen_attempts: int = 1000

    def check(self) -> None:
        if self.n_nodes < 2:
            raise UsageError(f"n_nodes must be >= 2, got {self.n_nodes}")
        if not 0 < self.neighbor_min_pdr < 1:
            raise UsageError(f"neighbor_min_pdr must lie in (0, 1), got {self.neighbor_min_pdr}")
        if not self.area_side_m > 0:
            raise UsageError(f"area_side_m must be > 0, got {self.area_side_m}")
        if self.min_neighbors < 0 or self.max_regen_attempts < 1 or self.fading_sigma_db < 0:
            raise UsageError("min_neighbors >= 0, max_regen_attempts >= 1, fading_sigma_db >= 0 required")


@dataclass
class Topology:
    positions: list[Position]
    matrix: ConnectivityMatrix
    config: TopologyConfig = field(default_factory=TopologyConfig)

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return (self.positions == other.positions and self.matrix == other.matrix
                and self.config == other.config)


def path_loss_db(d_m, cfg: TopologyConfig = TopologyConfig()):
    """Log-distance path loss in dB. Accepts scalars or arrays."""
    d = np.asarray(d_m, dtype=float)
    if np.any(d <= 0):
        raise UsageError("distance must be > 0")
    loss = cfg.ref_loss_db_at_1m + 10.0 * cfg.path_loss_exponent * np.log10(d)
    return float(loss) if loss.ndim == 0 else loss


def rssi_to_pdr(rssi_dbm):
    """Linear waterfall from 0 at -97 dBm to 1 at -87 dBm. Accepts scalars or arrays."""
    r = np.asarray(rssi_dbm, dtype=float)
    pdr = np.clip((r - WATERFALL_LOW_DBM) / (WATERFALL_HIGH_DBM - WATERFALL_LOW_DBM), 0.0, 1.0)
    return float(pdr) if pdr.ndim == 0 else pdr


def _link_arrays(xy: np.ndarray, fading: np.ndarray, cfg: TopologyConfig):
    diff = xy[:, None, :] - xy[None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    # coincident nodes sit at the 1 m reference distance
    d = np.maximum(d, 1.0)
    rssi = cfg.tx_power_dbm - path_loss_db(d, cfg)[:, :, None] + fading
    pdr = rssi_to_pdr(rssi)
    idx = np.arange(len(xy))
    pdr[idx, idx, :] = 0.0
    return rssi, pdr


def good_links(pdr: np.ndarray, neighbor_min_pdr: float) -> np.ndarray:
    """Boolean ``(n, n)``: PDR exceeds the threshold on every channel in both directions."""
    worst = np.minimum(pdr, pdr.transpose(1, 0, 2)).min(axis=2)
    good = worst > neighbor_min_pdr
    np.fill_diagonal(good, False)
    return good


def good_neighbor_counts(pdr: np.ndarray, neighbor_min_pdr: float) -> np.ndarray:
    return good_links(pdr, neighbor_min_pdr).sum(axis=1)


def satisfied_nodes(pdr: np.ndarray, cfg: TopologyConfig) -> np.ndarray:
    """Nodes with enough good neighbours that also belong to the largest good-link component."""
    good = good_links(pdr, cfg.neighbor_min_pdr)
    _, labels = connected_components(good, directed=False)
    sizes = np.bincount(labels)
    # np.argmax picks the lowest label among equal sizes, i.e. the component of the lowest id
    main = labels == np.argmax(sizes)
    return main & (good.sum(axis=1) >= cfg.min_neighbors)


def _sample_in_disc(rng: np.random.Generator, center: np.ndarray, side: float) -> np.ndarray:
    # rejection sampling keeps the point uniform over disc ∩ square
    while True:
        r = REPAIR_RADIUS_M * math.sqrt(rng.random())
        theta = 2 * math.pi * rng.random()
        p = center + r * np.array([math.cos(theta), math.sin(theta)])
        if 0 <= p[0] <= side and 0 <= p[1] <= side:
            return p


def _fading(rng: np.random.Generator, n: int, sigma: float) -> np.ndarray:
    upper = rng.normal(0.0, sigma, size=(n, n, N_CHANNELS)) if sigma > 0 else np.zeros((n, n, N_CHANNELS))
    iu = np.triu_indices(n, k=1)
    fading = np.zeros_like(upper)
    fading[iu] = upper[iu]
    return fading + fading.transpose(1, 0, 2)


def _attempt(cfg: TopologyConfig, rng: np.random.Generator):
    n, side = cfg.n_nodes, cfg.area_side_m
    xy = rng.uniform(0.0, side, size=(n, 2))
    fading = _fading(rng, n, cfg.fading_sigma_db)
    rssi, pdr = _link_arrays(xy, fading, cfg)
    for _ in range(cfg.max_regen_attempts + 1):
        sat = satisfied_nodes(pdr, cfg)
        bad = np.nonzero(~sat)[0]
        if len(bad) == 0:
            return xy, rssi, pdr
        ok = np.nonzero(sat)[0]
        node = int(rng.choice(bad))
        center = xy[int(rng.choice(ok))] if len(ok) else np.array([side / 2, side / 2])
        xy[node] = _sample_in_disc(rng, center, side)
        # links are symmetric, so only the moved node's row and column change
        d = np.maximum(np.hypot(*(xy - xy[node]).T), 1.0)
        row = cfg.tx_power_dbm - path_loss_db(d, cfg)[:, None] + fading[node]
        row_pdr = rssi_to_pdr(row)
        row_pdr[node] = 0.0
        rssi[node, :], rssi[:, node] = row, row
        pdr[node, :], pdr[:, node] = row_pdr, row_pdr
    return None


def generate(cfg: TopologyConfig, seed: int) -> Topology:
    """Random topology satisfying the neighbour-density constraint; deterministic in ``(cfg, seed)``."""
    cfg.check()
    if cfg.n_nodes - 1 < cfg.min_neighbors:
        raise GenerationError(f"config is infeasible: {cfg.n_nodes} nodes cannot each have "
                              f"{cfg.min_neighbors} neighbours")
    for restart in range(MAX_RESTARTS):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, restart]))
        result = _attempt(cfg, rng)
        if result is None:
            log.debug("generate: seed %d restart %d exhausted repairs", seed, restart)
            continue
        xy, rssi, pdr = result
        rssi = np.where(pdr > 0, rssi, np.nan)
        positions = [Position(float(x), float(y)) for x, y in xy]
        return Topology(positions, ConnectivityMatrix(pdr, rssi), cfg)
    raise GenerationError(
        f"could not satisfy min_neighbors={cfg.min_neighbors} at PDR>{cfg.neighbor_min_pdr} "
        f"after {MAX_RESTARTS} restarts; config is infeasible: {cfg}")


def audit(t: Topology) -> np.ndarray:
    """Good-neighbour count per node under the topology's own config."""
    return good_neighbor_counts(t.matrix.pdr, t.config.neighbor_min_pdr)


def load_trace(path) -> ConnectivityMatrix:
    """Read a ``src,dst,channel,pdr,rssi_dbm`` CSV trace.

    Channels 11..26 are taken as IEEE numbers when every row uses that
    range; otherwise channels must be 0..15.
    """
    path = Path(path)
    rows = []
    with path.open(encoding="utf-8", newline="") as fh:
        header_seen = False
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = next(csv.reader([stripped]))
            if not header_seen and fields and fields[0].strip() == "src":
                if tuple(f.strip() for f in fields) != TRACE_HEADER:
                    raise TraceParseError(path, lineno, f"bad header {fields!r}")
                header_seen = True
                continue
            header_seen = True
            if len(fields) not in (4, 5):
                raise TraceParseError(path, lineno, f"expected 4 or 5 fields, got {len(fields)}")
            try:
                src, dst, ch = (int(f) for f in fields[:3])
                pdr = float(fields[3])
                rssi = float(fields[4]) if len(fields) == 5 and fields[4].strip() else None
            except ValueError as exc:
                raise TraceParseError(path, lineno, f"malformed row: {exc}") from None
            if src < 0 or dst < 0:
                raise TraceParseError(path, lineno, "negative node id")
            if src == dst:
                raise TraceParseError(path, lineno, f"self-link {src}->{dst}")
            if not 0.0 <= pdr <= 1.0:
                raise TraceParseError(path, lineno, f"pdr {pdr} outside [0,1]")
            rows.append((lineno, src, dst, ch, pdr, rssi))
    if not rows:
        raise MatrixError(f"{path}: no data rows; a matrix needs at least 2 nodes")
    ieee = all(IEEE_FIRST_CHANNEL <= r[3] < IEEE_FIRST_CHANNEL + N_CHANNELS for r in rows)
    entries = {}
    for lineno, src, dst, ch, pdr, rssi in rows:
        if ieee:
            ch -= IEEE_FIRST_CHANNEL
        elif not 0 <= ch < N_CHANNELS:
            raise TraceParseError(path, lineno, f"unknown channel {ch}")
        key = (src, dst, ch)
        if key in entries:
            log.warning("%s:%d: duplicate entry %s, last row wins", path, lineno, key)
        entries[key] = (pdr, rssi)
    n = max(max(s, d) for s, d, _ in entries) + 1
    if n < 2:
        raise MatrixError(f"{path}: fewer than 2 nodes")
    return ConnectivityMatrix.from_links(n, [(s, d, c, p, r) for (s, d, c), (p, r) in entries.items()])


def save_trace(m: ConnectivityMatrix, path) -> None:
    """Write a trace CSV; channels are written as IEEE numbers 11..26 so they reload unambiguously."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for link in m.links():
            w.writerow([link.src, link.dst, link.channel + IEEE_FIRST_CHANNEL, repr(link.pdr),
                        "" if link.rssi_dbm is None else repr(link.rssi_dbm)])


def topology_to_dict(t: Topology) -> dict:
    return {
        "format": TOPOLOGY_FORMAT,
        "config": asdict(t.config),
        "n_nodes": t.matrix.n_nodes,
        "positions": [[p.x, p.y] for p in t.positions],
        "links": [[l.src, l.dst, l.channel, l.pdr, l.rssi_dbm] for l in t.matrix.links()],
    }


def topology_from_dict(doc: dict) -> Topology:
    if doc.get("format") != TOPOLOGY_FORMAT:
        raise ValueError(f"not a topology document (format={doc.get('format')!r})")
    cfg = TopologyConfig(**doc["config"])
    n = int(doc["n_nodes"])
    positions = [Position(float(x), float(y)) for x, y in doc["positions"]]
    if len(positions) != n:
        raise ValueError(f"{len(positions)} positions for n_nodes={n}")
    for i, p in enumerate(positions):
        if not (0 <= p.x <= cfg.area_side_m and 0 <= p.y <= cfg.area_side_m):
            log.warning("node %d at (%g, %g) lies outside the %g m deployment area",
                        i, p.x, p.y, cfg.area_side_m)
    matrix = ConnectivityMatrix.from_links(n, [tuple(l) for l in doc["links"]])
    return Topology(positions, matrix, cfg)


def save_topology(t: Topology, path) -> None:
    Path(path).write_text(json.dumps(topology_to_dict(t), indent=1) + "\n", encoding="utf-8")


def load_topology(path) -> Topology:
    return topology_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
