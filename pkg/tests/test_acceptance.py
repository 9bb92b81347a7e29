"""Exit criteria. Each test records one PASS/FAIL line shown in the terminal summary."""

import itertools
import json
import math
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from sniffplan.cli import main
from sniffplan.domset import (
    CoverageRelation,
    build_coverage,
    exact_min_dominating_set,
    greedy_min_dominating_set,
)
from sniffplan.experiment import SweepConfig, aggregate, rows_to_csv, run_sweep, table1_config
from sniffplan.model import N_CHANNELS
from sniffplan.selection import SelectionParams, select
from sniffplan.simcore import SimConfig, run_simulation
from sniffplan.topology import TopologyConfig, generate

from conftest import ACCEPTANCE_LINES, brute_force_dominates, symmetric_matrix

MASTER_SEED = 2024
REPS = 20


def record(number, title, ok, detail):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title} -- {detail}")
    assert ok, detail


def by_point(summary):
    return {(s["sniffer_link_pdr"], s["removal_load"]): s for s in summary}


@pytest.fixture(scope="module")
def table1_summary():
    rows = run_sweep(table1_config(repetitions=REPS, master_seed=MASTER_SEED))
    assert not any(r["error"] for r in rows)
    return aggregate(rows)


def test_1_paper_regime():
    start = time.time()
    cfg = SweepConfig(sniffer_link_pdr_values=[0.5, 0.6, 0.7, 0.8], removal_load_values=[0.3, 0.5, 0.7],
                      repetitions=REPS, master_seed=MASTER_SEED)
    summary = aggregate(run_sweep(cfg))
    elapsed = time.time() - start
    bad = [(s["sniffer_link_pdr"], s["removal_load"], round(s["detection_pct_mean"], 2),
            round(s["n_sniffers_mean"], 2)) for s in summary
           if not (80 <= s["detection_pct_mean"] <= 98 and 6 <= s["n_sniffers_mean"] <= 20)]
    det = [s["detection_pct_mean"] for s in summary]
    num = [s["n_sniffers_mean"] for s in summary]
    record(1, "paper regime detection in [80,98]%, sniffers in [6,20]",
           len(summary) == 12 and not bad and elapsed < 600,
           f"detection {min(det):.2f}..{max(det):.2f}%, sniffers {min(num):.2f}..{max(num):.2f}, "
           f"{elapsed:.0f}s, out of band: {bad}")


def test_2_ideal_link_residual_loss():
    losses, exact_zero = [], True
    for k in range(REPS):
        topo = generate(TopologyConfig(), MASTER_SEED * 1000 + k)
        report = select(topo.matrix, SelectionParams(1.0, 0.5))
        assert len(report.final) == 50
        on = run_simulation(topo.matrix, report.final, SimConfig(collisions_enabled=True), k)
        off = run_simulation(topo.matrix, report.final, SimConfig(collisions_enabled=False), k)
        losses.append(100.0 * (on.tx_frames - on.detected) / on.tx_frames)
        exact_zero &= off.detected == off.tx_frames
    mean_loss = float(np.mean(losses))
    record(2, "ideal links: 0 < loss <= 6% with collisions, exactly 0 without",
           0 < mean_loss <= 6 and exact_zero,
           f"mean loss {mean_loss:.3f}% over {REPS} runs x 1000 slotframes, no-collision loss zero: {exact_zero}")


def test_3_grid_size_and_repeatability():
    r = 2
    first = rows_to_csv(run_sweep(table1_config(repetitions=r, master_seed=MASTER_SEED)))
    second = rows_to_csv(run_sweep(table1_config(repetitions=r, master_seed=MASTER_SEED)))
    n_rows = len(first.splitlines()) - 1
    record(3, "Table-1 grid gives 11*10*R rows, byte-identical on rerun",
           n_rows == 11 * 10 * r and first == second,
           f"R={r}: {n_rows} rows, identical={first == second}")


def test_4_trends(table1_summary):
    pts = by_point(table1_summary)
    ts = sorted({t for t, _ in pts})
    rs = sorted({r for _, r in pts})
    mean = lambda t, r: pts[(t, r)]["detection_pct_mean"]
    t_steps = [mean(ts[i + 1], r) - mean(ts[i], r) for i in range(len(ts) - 1) for r in rs]
    r_steps = [mean(t, rs[j + 1]) - mean(t, rs[j]) for j in range(len(rs) - 1) for t in ts]
    rho = spearmanr([s["n_sniffers_mean"] for s in table1_summary],
                    [s["multiple_pct_mean"] for s in table1_summary]).statistic
    ok = len(pts) == 110 and min(t_steps) >= -1.0 and max(r_steps) <= 1.0 and rho > 0.5
    record(4, "detection rises with sniffer_link_pdr, falls with removal_load; redundancy tracks sniffer count",
           ok, f"worst threshold step {min(t_steps):+.3f} pp, worst load step {max(r_steps):+.3f} pp, "
               f"Spearman(n_sniffers, multiple_pct) = {rho:.3f}")


def test_5_domset_oracle():
    rng = np.random.default_rng(MASTER_SEED)
    start = time.time()
    failures = []
    for i in range(500):
        n = int(rng.integers(1, 13))
        cov = CoverageRelation.from_adjacency(rng.random((n, n)) < rng.uniform(0.0, 0.7))
        covers = [cov.covers(v) for v in range(n)]
        greedy = greedy_min_dominating_set(cov).members
        exact = exact_min_dominating_set(cov).members
        delta = max(len(c) for c in covers) - 1
        if not brute_force_dominates(greedy, covers, n):
            failures.append((i, "greedy not dominating"))
        if len(greedy) > (math.log(delta + 1) + 1) * len(exact):
            failures.append((i, "bound violated"))
        if i < 50:
            # independent recheck that nothing smaller dominates
            smaller = any(brute_force_dominates(s, covers, n)
                          for s in itertools.combinations(range(n), len(exact) - 1))
            if smaller:
                failures.append((i, "exact not minimum"))
    elapsed = time.time() - start
    record(5, "greedy valid and within ln(D+1)+1 of exact on 500 relations",
           not failures and elapsed < 60, f"{len(failures)} failures {failures[:3]}, {elapsed:.1f}s")


def test_6_pipeline_coverage():
    rng = np.random.default_rng(MASTER_SEED + 6)
    thresholds = [round(x / 10, 1) for x in range(1, 10)]
    loads = [round(x / 10, 1) for x in range(1, 11)]
    failures = []
    n_minimal_checks = 0
    for i in range(200):
        topo = generate(TopologyConfig(), int(rng.integers(2**32)))
        t = thresholds[int(rng.integers(len(thresholds)))]
        load = loads[int(rng.integers(len(loads)))]
        report = select(topo.matrix, SelectionParams(t, load))
        covers = [[build_coverage(topo.matrix, ch, t).covers(v) for v in range(50)] for ch in range(N_CHANNELS)]
        final = set(report.final)
        if not all(brute_force_dominates(final, covers[ch], 50) for ch in range(N_CHANNELS)):
            failures.append((i, t, load, "not dominating"))
        # inclusion-minimality at full load, on every sampled (topology, threshold)
        minimal = set(report.final) if load == 1.0 else set(select(topo.matrix, SelectionParams(t, 1.0)).final)
        n_minimal_checks += 1
        for v in minimal:
            if all(brute_force_dominates(minimal - {v}, covers[ch], 50) for ch in range(N_CHANNELS)):
                failures.append((i, t, 1.0, f"{v} removable"))
    record(6, "reduced sets dominate all 16 channels; load 1.0 is inclusion-minimal",
           not failures, f"200 triples, {n_minimal_checks} minimality checks, failures {failures[:3]}")


def test_7_binomial_sanity():
    m = symmetric_matrix(2, [(0, 1)], pdr=0.5)
    cfg = SimConfig(slotframes=10000, max_link_attempts=1, collisions_enabled=False)
    stats = run_simulation(m, [0], cfg, MASTER_SEED)
    frac = stats.detected / stats.tx_frames
    record(7, "2-node pdr 0.5 detection within 0.5 +- 0.015",
           stats.tx_frames == 10000 and abs(frac - 0.5) <= 0.015, f"fraction {frac:.4f} of {stats.tx_frames}")


def test_8_cli_determinism(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = SweepConfig(sniffer_link_pdr_values=[0.4, 0.7], removal_load_values=[0.2, 0.6], repetitions=3,
                      master_seed=MASTER_SEED, sim_cfg=SimConfig(slotframes=100))
    (tmp_path / "sweep.json").write_text(json.dumps(cfg.to_dict()))
    outputs = []
    for run, workers in ((1, "1"), (2, "2")):
        d = tmp_path / f"run{run}"
        d.mkdir()
        assert main(["gen-topology", "--seed", "5", "--out", str(d / "topology.json")]) == 0
        assert main(["select", "--topology", str(d / "topology.json"), "--out", str(d / "sniffers.json")]) == 0
        assert main(["simulate", "--topology", str(d / "topology.json"), "--sniffers", str(d / "sniffers.json"),
                     "--seed", "3", "--out", str(d / "metrics.csv")]) == 0
        assert main(["sweep", "--config", "sweep.json", "--workers", workers,
                     "--out-runs", str(d / "runs.csv"), "--out-summary", str(d / "summary.csv")]) == 0
        outputs.append({f: (d / f).read_bytes() for f in
                        ("topology.json", "sniffers.json", "metrics.csv", "runs.csv", "summary.csv")})
    same = {f: outputs[0][f] == outputs[1][f] for f in outputs[0]}
    record(8, "gen-topology, select, simulate, sweep byte-identical (sweep serial vs 2 workers)",
           all(same.values()), f"{same}")
