"""Core domain types: node/channel indices, link statistics and the connectivity matrix."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Optional

import numpy as np

N_CHANNELS = 16
# IEEE 802.15.4 2.4 GHz channels 11..26 map onto internal indices 0..15
IEEE_FIRST_CHANNEL = 11
RSSI_MIN_DBM = -130.0
RSSI_MAX_DBM = 0.0


class UsageError(ValueError):
    """Raised when an operation is called with arguments outside its contract."""


class MatrixError(ValueError):
    """Raised when a connectivity matrix cannot be built from the given data."""


class LinkStat(NamedTuple):
    pdr: float
    rssi_dbm: Optional[float] = None


class Link(NamedTuple):
    src: int
    dst: int
    channel: int
    pdr: float
    rssi_dbm: Optional[float]


def check_channel(ch: int) -> int:
    if not 0 <= ch < N_CHANNELS:
        raise UsageError(f"channel {ch} out of range [0, {N_CHANNELS})")
    return int(ch)


class ConnectivityMatrix:
    """Directed per-channel link table for ``n_nodes`` nodes.

    Stored densely as ``pdr[src, dst, ch]``; a zero entry is an absent link.
    ``rssi`` holds NaN where no RSSI was recorded. Both arrays are read-only
    after construction.
    """

    def __init__(self, pdr: np.ndarray, rssi: Optional[np.ndarray] = None):
        pdr = np.array(pdr, dtype=float)
        if pdr.ndim != 3 or pdr.shape[0] != pdr.shape[1] or pdr.shape[2] != N_CHANNELS:
            raise MatrixError(f"pdr array must have shape (n, n, {N_CHANNELS}), got {pdr.shape}")
        if rssi is None:
            rssi = np.full(pdr.shape, np.nan)
        else:
            rssi = np.array(rssi, dtype=float)
            if rssi.shape != pdr.shape:
                raise MatrixError("rssi array shape differs from pdr array shape")
        pdr.setflags(write=False)
        rssi.setflags(write=False)
        self._pdr = pdr
        self._rssi = rssi

    @classmethod
    def from_links(cls, n_nodes: int, links: Iterable[Link | tuple]) -> "ConnectivityMatrix":
        pdr = np.zeros((n_nodes, n_nodes, N_CHANNELS))
        rssi = np.full((n_nodes, n_nodes, N_CHANNELS), np.nan)
        for link in links:
            src, dst, ch, p, r = link
            pdr[src, dst, ch] = p
            if r is not None:
                rssi[src, dst, ch] = r
        return cls(pdr, rssi)

    @property
    def n_nodes(self) -> int:
        return self._pdr.shape[0]

    @property
    def pdr(self) -> np.ndarray:
        """Read-only ``(n, n, 16)`` PDR array indexed ``[src, dst, ch]``."""
        return self._pdr

    @property
    def rssi(self) -> np.ndarray:
        return self._rssi

    def _check_pair(self, src: int, dst: int) -> None:
        n = self.n_nodes
        if not (0 <= src < n and 0 <= dst < n):
            raise UsageError(f"node index out of range: ({src}, {dst}) for n_nodes={n}")
        if src == dst:
            raise UsageError(f"self-link ({src}, {dst}) is not a link")

    def link(self, src: int, dst: int, ch: int) -> LinkStat:
        self._check_pair(src, dst)
        check_channel(ch)
        r = self._rssi[src, dst, ch]
        return LinkStat(float(self._pdr[src, dst, ch]), None if math.isnan(r) else float(r))

    def links(self) -> Iterator[Link]:
        """Yield every stored entry (nonzero PDR or recorded RSSI) in (src, dst, ch) order."""
        present = (self._pdr != 0) | ~np.isnan(self._rssi)
        for src, dst, ch in zip(*np.nonzero(present)):
            r = self._rssi[src, dst, ch]
            yield Link(int(src), int(dst), int(ch), float(self._pdr[src, dst, ch]),
                       None if math.isnan(r) else float(r))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConnectivityMatrix):
            return NotImplemented
        return (np.array_equal(self._pdr, other._pdr)
                and np.array_equal(self._rssi, other._rssi, equal_nan=True))

    def __repr__(self) -> str:
        return f"ConnectivityMatrix(n_nodes={self.n_nodes}, links={int(np.count_nonzero(self._pdr))})"


def link_pdr(m: ConnectivityMatrix, src: int, dst: int, ch: int) -> float:
    """PDR of ``src -> dst`` on channel ``ch``; 0.0 for an absent link."""
    return m.link(src, dst, ch).pdr


def pdr_sum_toward(m: ConnectivityMatrix, sniffer: int, sensor: int) -> float:
    """Sum over all channels of the PDR from ``sensor`` to ``sniffer``."""
    m._check_pair(sensor, sniffer)
    return float(m.pdr[sensor, sniffer, :].sum())


def validate(m: ConnectivityMatrix) -> list[str]:
    violations = []
    if m.n_nodes < 2:
        violations.append(f"n_nodes={m.n_nodes} < 2")
    pdr, rssi = m.pdr, m.rssi
    for i in range(m.n_nodes):
        for ch in np.nonzero((pdr[i, i] != 0) | ~np.isnan(rssi[i, i]))[0]:
            violations.append(f"self-link entry ({i},{i},{ch})")
    bad = ~((pdr >= 0) & (pdr <= 1))
    for src, dst, ch in zip(*np.nonzero(bad)):
        violations.append(f"pdr {pdr[src, dst, ch]!r} outside [0,1] at ({src},{dst},{ch})")
    bad = ~np.isnan(rssi) & ((rssi < RSSI_MIN_DBM) | (rssi > RSSI_MAX_DBM))
    for src, dst, ch in zip(*np.nonzero(bad)):
        violations.append(f"rssi {rssi[src, dst, ch]!r} dBm outside "
                          f"[{RSSI_MIN_DBM:g},{RSSI_MAX_DBM:g}] at ({src},{dst},{ch})")
    return violations


def node_quality(m: ConnectivityMatrix) -> np.ndarray:
    """Per node ``v``: summed PDR from every other node toward ``v`` over all channels."""
    pdr = m.pdr.sum(axis=2)
    np.fill_diagonal(pdr, 0.0)
    return pdr.sum(axis=0)


@dataclass(frozen=True)
class SnifferSet:
    """Ordered, duplicate-free collection of node ids chosen as sniffer locations."""

    members: tuple[int, ...] = ()

    def __post_init__(self):
        members = tuple(int(v) for v in self.members)
        if len(set(members)) != len(members):
            raise UsageError(f"duplicate sniffer ids in {members}")
        if any(v < 0 for v in members):
            raise UsageError(f"negative sniffer id in {members}")
        object.__setattr__(self, "members", members)

    @classmethod
    def from_iterable(cls, ids: Iterable[int]) -> "SnifferSet":
        return cls(tuple(dict.fromkeys(int(v) for v in ids)))

    def check_range(self, n_nodes: int) -> None:
        bad = [v for v in self.members if v >= n_nodes]
        if bad:
            raise UsageError(f"sniffer ids {bad} out of range for n_nodes={n_nodes}")

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    def __contains__(self, v):
        return v in self.members
