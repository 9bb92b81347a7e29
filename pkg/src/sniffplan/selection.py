"""Sniffer placement: per-channel candidate union, quality ordering and redundancy removal."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .domset import (
    CoverageRelation,
    build_coverage,
    covered_mask,
    first_uncovered,
    greedy_min_dominating_set,
)
from .model import N_CHANNELS, ConnectivityMatrix, SnifferSet, UsageError, node_quality

REMOVAL_ORDERS = ("worst_first", "best_first", "insertion")
SNIFFERS_FORMAT = "sniffplan-sniffers/1"


@dataclass(frozen=True)
class SelectionParams:
    sniffer_link_pdr: float = 0.6
    removal_load: float = 0.5
    removal_order: str = "worst_first"

    def __post_init__(self):
        for name in ("sniffer_link_pdr", "removal_load"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise UsageError(f"{name} must lie in [0, 1], got {value}")
        if self.removal_order not in REMOVAL_ORDERS:
            raise UsageError(f"removal_order must be one of {REMOVAL_ORDERS}, got {self.removal_order!r}")


@dataclass
class SelectionReport:
    candidates_before: SnifferSet
    final: SnifferSet
    target_sniffer_num: int
    removed: list[int] = field(default_factory=list)
    per_channel_set_sizes: list[int] = field(default_factory=list)


def channel_coverages(m: ConnectivityMatrix, sniffer_link_pdr: float) -> list[CoverageRelation]:
    return [build_coverage(m, ch, sniffer_link_pdr) for ch in range(N_CHANNELS)]


def _select(coverages: list[CoverageRelation]) -> tuple[SnifferSet, list[int]]:
    picks, sizes = [], []
    for cov in coverages:
        single = greedy_min_dominating_set(cov).members
        sizes.append(len(single))
        picks.extend(single)
    return SnifferSet.from_iterable(picks), sizes


def select_candidates(m: ConnectivityMatrix, sniffer_link_pdr: float) -> SnifferSet:
    """Union of the greedy dominating sets of all 16 channel coverage relations.

    Ordered by channel, then by greedy pick order; first occurrence wins.
    """
    return _select(channel_coverages(m, sniffer_link_pdr))[0]


def order_by_pdr_sum(cands, m: ConnectivityMatrix, order: str = "worst_first") -> list[int]:
    """Visit order for removal, by total PDR received from all other nodes on all channels."""
    cands = list(cands)
    if not cands:
        raise UsageError("cannot order an empty candidate set")
    if order == "insertion":
        return cands
    quality = node_quality(m)
    if order == "worst_first":
        return sorted(cands, key=lambda v: (quality[v], v))
    if order == "best_first":
        return sorted(cands, key=lambda v: (-quality[v], v))
    raise UsageError(f"unknown removal order {order!r}")


def target_size(n_candidates: int, removal_load: float) -> int:
    # round first so that e.g. 10 * (1 - 0.7) = 3.0000000000000004 does not ceil to 4
    return math.ceil(round(n_candidates * (1.0 - removal_load), 9))


def _reduce(m, params, cands: SnifferSet, coverages) -> SelectionReport:
    for ch, cov in enumerate(coverages):
        u = first_uncovered(cands, cov)
        if u is not None:
            raise UsageError(f"candidate set does not dominate channel {ch}: node {u} is uncovered")
    target = target_size(len(cands), params.removal_load)
    current = set(cands)
    removed = []
    for sniffer in order_by_pdr_sum(cands, m, params.removal_order) if len(cands) else []:
        if len(current) <= target:
            break
        current.discard(sniffer)
        if all(covered_mask(current, cov) == cov.full_mask for cov in coverages):
            removed.append(sniffer)
        else:
            current.add(sniffer)
    final = SnifferSet(tuple(v for v in cands if v in current))
    return SelectionReport(cands, final, target, removed)


def reduce_candidates(m: ConnectivityMatrix, params: SelectionParams, cands: SnifferSet) -> SelectionReport:
    """Drop candidates while all 16 channels stay dominated, until the target size is reached.

    The size check happens before every removal attempt, so a
    ``removal_load`` of 0 removes nothing.
    """
    cands.check_range(m.n_nodes)
    return _reduce(m, params, cands, channel_coverages(m, params.sniffer_link_pdr))


def select(m: ConnectivityMatrix, params: SelectionParams) -> SelectionReport:
    """Candidate selection followed by reduction."""
    coverages = channel_coverages(m, params.sniffer_link_pdr)
    cands, sizes = _select(coverages)
    report = _reduce(m, params, cands, coverages)
    report.per_channel_set_sizes = sizes
    return report


def report_to_dict(report: SelectionReport, params: SelectionParams, n_nodes: int) -> dict:
    return {
        "format": SNIFFERS_FORMAT,
        "n_nodes": n_nodes,
        "sniffers": list(report.final),
        "params": {
            "sniffer_link_pdr": params.sniffer_link_pdr,
            "removal_load": params.removal_load,
            "removal_order": params.removal_order,
        },
        "report": {
            "candidates_before": list(report.candidates_before),
            "target_sniffer_num": report.target_sniffer_num,
            "removed": report.removed,
            "per_channel_set_sizes": report.per_channel_set_sizes,
        },
    }


def save_sniffers(path, report: SelectionReport, params: SelectionParams, n_nodes: int) -> None:
    doc = report_to_dict(report, params, n_nodes)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_sniffers(path) -> tuple[SnifferSet, Optional[int]]:
    """Read sniffers written by :func:`save_sniffers`, or a plain list of node ids.

    Returns the sniffers and the node count they were chosen for (None for
    a plain list). An empty file is an empty sniffer set.
    """
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        if doc.get("format") != SNIFFERS_FORMAT:
            raise ValueError(f"{path}: not a sniffer-set file (format={doc.get('format')!r})")
        return SnifferSet(tuple(doc["sniffers"])), int(doc["n_nodes"])
    ids = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0]
        try:
            ids.extend(int(tok) for tok in line.replace(",", " ").split())
        except ValueError:
            raise ValueError(f"{path}:{lineno}: expected node ids, got {line.strip()!r}") from None
    return SnifferSet(tuple(ids)), None
