"""Sniffer placement for multi-channel wireless sensor networks, and a TSCH capture simulator."""

from .domset import (
    CoverageRelation,
    build_coverage,
    exact_min_dominating_set,
    greedy_min_dominating_set,
    is_dominating,
)
from .model import ConnectivityMatrix, SnifferSet, link_pdr, pdr_sum_toward, validate
from .selection import SelectionParams, order_by_pdr_sum, reduce_candidates, select, select_candidates
from .simcore import SimConfig, build_tree, run_simulation, simulate_traffic
from .topology import TopologyConfig, generate, load_topology, load_trace, save_topology

__version__ = "0.1.0"
