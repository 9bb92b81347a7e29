import numpy as np
import pytest
from scipy.stats import binomtest

from sniffplan.model import N_CHANNELS, ConnectivityMatrix
from sniffplan.simcore import (
    SimConfig,
    TopologyError,
    build_tree,
    default_root,
    run_simulation,
    simulate_traffic,
)

from conftest import symmetric_matrix


def test_tree_two_nodes():
    m = symmetric_matrix(2, [(0, 1)], pdr=0.5)
    assert build_tree(m, 0).parent == (0, 0)


def test_tree_line():
    m = symmetric_matrix(3, [(0, 1), (1, 2)], pdr=0.8)
    assert build_tree(m, 0).parent == (0, 0, 1)


def test_tree_diamond_prefers_better_mean_pdr():
    a = np.zeros((4, 4, N_CHANNELS))
    for u, v in [(0, 1), (0, 2)]:
        a[u, v, :] = a[v, u, :] = 0.8
    a[3, 1, :] = a[1, 3, :] = 0.9
    a[3, 2, :] = a[2, 3, :] = 0.6
    tree = build_tree(ConnectivityMatrix(a), 0)
    assert tree.parent[3] == 1
    assert tree.depth(3) == 2


def test_tree_disconnected():
    m = symmetric_matrix(3, [(0, 1)], pdr=0.8)
    with pytest.raises(TopologyError, match="node 2"):
        build_tree(m, 0)


def test_tree_reaches_root(topo50):
    tree = build_tree(topo50.matrix, default_root(topo50.matrix))
    for v in range(50):
        seen = set()
        while v != tree.root:
            assert v not in seen
            seen.add(v)
            v = tree.parent[v]


def test_all_sniffers_no_collisions_catch_everything(topo50):
    stats = run_simulation(topo50.matrix, range(50), SimConfig(slotframes=50, collisions_enabled=False), 1)
    assert stats.tx_frames > 0
    assert stats.detected == stats.tx_frames


def test_no_sniffers(topo50):
    stats = run_simulation(topo50.matrix, [], SimConfig(slotframes=50), 1)
    assert stats.detected == 0 and stats.tx_frames > 0


def test_binomial_two_nodes():
    m = symmetric_matrix(2, [(0, 1)], pdr=0.5)
    cfg = SimConfig(slotframes=10000, max_link_attempts=1, collisions_enabled=False)
    assert default_root(m) == 0
    stats = run_simulation(m, [0], cfg, seed=3)
    assert stats.tx_frames == 10000
    assert abs(stats.detected / stats.tx_frames - 0.5) <= 0.015


def test_accounting_and_determinism(topo50):
    cfg = SimConfig(slotframes=100)
    a = run_simulation(topo50.matrix, [0, 5, 9, 20], cfg, 42)
    b = run_simulation(topo50.matrix, [0, 5, 9, 20], cfg, 42)
    assert a == b
    assert a.unique + a.multiple == a.detected <= a.tx_frames
    assert min(a.tx_frames, a.detected, a.unique, a.multiple, a.collisions_at_sniffers) >= 0
    assert sum(a.per_sniffer_rx.values()) >= a.detected
    assert run_simulation(topo50.matrix, [0, 5, 9, 20], cfg, 43) != a


def test_frames_respect_slot_and_channel_rules(topo50):
    cfg = SimConfig(slotframes=30)
    trace = simulate_traffic(topo50.matrix, cfg, 5)
    frames = list(trace.frames())
    assert len(frames) == trace.n_frames
    assert all(0 <= f.slot < cfg.slotframe_length and 0 <= f.channel < 16 for f in frames)
    assert all(f.sender != trace.tree.root for f in frames)
    # a node never uses one slot twice within a slotframe
    cells = {(f.sender, f.slotframe_idx, f.slot) for f in frames}
    assert len(cells) == len(frames)
    # retries of a frame are consecutive in the record and keep one hopping offset
    offsets = {}
    for f in frames:
        off = (f.channel - f.slotframe_idx * cfg.slotframe_length - f.slot) % 16
        offsets.setdefault((f.sender, f.slotframe_idx, f.origin), set()).add(off)
    assert all(len(o) == 1 for o in offsets.values())


def test_every_channel_used(topo50):
    trace = simulate_traffic(topo50.matrix, SimConfig(slotframes=10), 0)
    assert trace.n_frames >= 100
    # P(one channel unused) <= 16 * (15/16)**n_frames, far below a 4-sigma event
    assert set(np.unique(trace.channel)) == set(range(16))


def test_collisions_cause_loss(topo50):
    stats = run_simulation(topo50.matrix, range(50), SimConfig(slotframes=100), 0)
    assert stats.collisions_at_sniffers > 0
    assert stats.detected < stats.tx_frames


def test_adding_a_sniffer_never_hurts():
    # small 6-node grid with moderate links
    m = symmetric_matrix(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 2), (3, 5)], pdr=0.6)
    base, extra = [1], [1, 4]
    cfg = SimConfig(slotframes=20)
    more = less = 0
    for seed in range(100):
        trace = simulate_traffic(m, cfg, seed)
        a, b = trace.stats(base).detected, trace.stats(extra).detected
        more += b > a
        less += b < a
    assert less == 0
    assert binomtest(more, more + less, 0.5, alternative="greater").pvalue < 0.01


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(slotframes=0)
