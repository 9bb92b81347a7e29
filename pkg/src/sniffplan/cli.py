"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import domset, experiment, selection, simcore, topology
from .model import MatrixError, UsageError, validate

log = logging.getLogger("sniffplan")

EXIT_USAGE = 1
EXIT_DATA = 2


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _unit_interval(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is outside [0, 1]")
    return v


def _open_unit_interval(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"{text} is outside (0, 1)")
    return v


def _at_least(lo: int):
    def parse(text: str) -> int:
        v = int(text)
        if v < lo:
            raise argparse.ArgumentTypeError(f"{text} is below the minimum {lo}")
        return v
    return parse


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"{text} must be > 0")
    return v


def _load_matrix(args):
    if getattr(args, "trace", None):
        return topology.load_trace(args.trace), None
    topo = topology.load_topology(args.topology)
    return topo.matrix, topo


def cmd_gen_topology(args) -> int:
    cfg = topology.TopologyConfig(n_nodes=args.nodes, area_side_m=args.area,
                                  min_neighbors=args.min_neighbors, neighbor_min_pdr=args.min_pdr)
    try:
        topo = topology.generate(cfg, args.seed)
    except topology.GenerationError as exc:
        raise DataError(str(exc)) from None
    topology.save_topology(topo, args.out)
    counts = topology.audit(topo)
    ok = int((counts >= cfg.min_neighbors).sum())
    print(f"wrote {args.out}: {cfg.n_nodes} nodes, seed {args.seed}")
    print(f"audit: {ok}/{cfg.n_nodes} nodes have >= {cfg.min_neighbors} neighbours "
          f"with PDR > {cfg.neighbor_min_pdr:g} on all channels")
    problems = validate(topo.matrix)
    if problems:
        raise DataError(f"generated matrix failed validation: {problems[0]}")
    return 0


def cmd_select(args) -> int:
    if args.topology and args.trace:
        raise UsageError("give exactly one of --topology or --trace")
    if not args.trace and not args.topology:
        args.topology = "topology.json"
    m, _ = _load_matrix(args)
    problems = validate(m)
    if problems:
        raise DataError(f"invalid connectivity matrix: {problems[0]}")
    params = selection.SelectionParams(args.sniffer_link_pdr, args.removal_load, args.order)
    if args.candidates:
        cands, _ = selection.load_sniffers(args.candidates)
        try:
            report = selection.reduce_candidates(m, params, cands)
        except UsageError as exc:
            raise DataError(str(exc)) from None
    else:
        report = selection.select(m, params)
    selection.save_sniffers(args.out, report, params, m.n_nodes)
    print(f"candidates_before={len(report.candidates_before)} "
          f"target={report.target_sniffer_num} final={len(report.final)}")
    print(f"sniffers: {' '.join(map(str, report.final))}")
    return 0


def _sniffer_params(path) -> tuple[object, object]:
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        params = json.loads(text).get("params", {})
        return params.get("sniffer_link_pdr", ""), params.get("removal_load", "")
    return "", ""


def cmd_simulate(args) -> int:
    m, _ = _load_matrix(args)
    sniffers, n_for = selection.load_sniffers(args.sniffers)
    if n_for is not None and n_for != m.n_nodes:
        raise DataError(f"sniffer file is for {n_for} nodes but the network has {m.n_nodes}")
    try:
        sniffers.check_range(m.n_nodes)
    except UsageError as exc:
        raise DataError(str(exc)) from None
    cfg = simcore.SimConfig(slotframes=args.slotframes, collisions_enabled=not args.no_collisions,
                            max_link_attempts=args.max_attempts)
    try:
        stats = simcore.run_simulation(m, sniffers, cfg, args.seed)
    except simcore.TopologyError as exc:
        raise DataError(str(exc)) from None
    t, r = _sniffer_params(args.sniffers)
    row = simcore.metrics_row(stats, t, r, args.seed, len(sniffers))
    out = Path(args.out)
    new = not out.exists() or out.stat().st_size == 0
    with out.open("a", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(simcore.METRICS_COLUMNS)
        w.writerow([experiment.format_value(row[c]) for c in simcore.METRICS_COLUMNS])
    print(f"detection_pct={stats.detection_pct:.2f} (tx_frames={stats.tx_frames} "
          f"detected={stats.detected} unique={stats.unique} multiple={stats.multiple})")
    return 0


def _write_summary(rows, path) -> None:
    summary = experiment.aggregate(rows)
    experiment.write_csv(summary, experiment.SUMMARY_COLUMNS, path)
    for s in summary:
        print(f"pdr={s['sniffer_link_pdr']:.1f} load={s['removal_load']:.1f} "
              f"runs={s['n_runs']} det={s['detection_pct_mean']:.2f}% "
              f"sniffers={s['n_sniffers_mean']:.1f}")


def cmd_sweep(args) -> int:
    cfg = experiment.load_sweep_config(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    rows = experiment.run_sweep(cfg)
    experiment.write_csv(rows, experiment.RUN_COLUMNS, args.out_runs)
    print(f"wrote {len(rows)} rows to {args.out_runs}")
    _write_summary(rows, args.out_summary)
    return 0


def cmd_report(args) -> int:
    try:
        rows = experiment.read_runs(args.runs)
    except experiment.RunsFileError as exc:
        raise DataError(str(exc)) from None
    _write_summary(rows, args.out_summary)
    return 0


def cmd_oracle_domset(args) -> int:
    try:
        cov = domset.read_relation(args.relation)
    except (ValueError, UsageError) as exc:
        raise DataError(str(exc)) from None
    greedy = domset.greedy_min_dominating_set(cov).members
    print(f"n={cov.n_nodes} greedy={len(greedy)} [{' '.join(map(str, greedy))}]")
    if cov.n_nodes <= domset.EXACT_MAX_NODES:
        exact = domset.exact_min_dominating_set(cov).members
        print(f"exact={len(exact)} [{' '.join(map(str, exact))}]")
    else:
        print(f"exact=skipped (n > {domset.EXACT_MAX_NODES})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sniffplan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-topology", help="generate a random topology")
    g.add_argument("--nodes", type=_at_least(2), default=50)
    g.add_argument("--area", type=_positive, default=2000.0, help="side of the square area, meters")
    g.add_argument("--min-neighbors", type=_at_least(0), default=3)
    g.add_argument("--min-pdr", type=_open_unit_interval, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="topology.json")
    g.set_defaults(func=cmd_gen_topology)

    s = sub.add_parser("select", help="choose sniffer locations")
    s.add_argument("--topology")
    s.add_argument("--trace")
    s.add_argument("--sniffer-link-pdr", type=_unit_interval, default=0.6)
    s.add_argument("--removal-load", type=_unit_interval, default=0.5)
    s.add_argument("--order", choices=selection.REMOVAL_ORDERS, default="worst_first")
    s.add_argument("--candidates", help="skip candidate selection and reduce this sniffer set")
    s.add_argument("--out", default="sniffers.json")
    s.set_defaults(func=cmd_select)

    m = sub.add_parser("simulate", help="measure frame capture by a sniffer set")
    src = m.add_mutually_exclusive_group()
    src.add_argument("--topology", default="topology.json")
    src.add_argument("--trace")
    m.add_argument("--sniffers", default="sniffers.json")
    m.add_argument("--slotframes", type=_at_least(1), default=1000)
    m.add_argument("--max-attempts", type=_at_least(1), default=3)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--no-collisions", action="store_true")
    m.add_argument("--out", default="metrics.csv")
    m.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="run a parameter sweep")
    w.add_argument("--config", required=True)
    w.add_argument("--out-runs", default="runs.csv")
    w.add_argument("--out-summary", default="summary.csv")
    w.add_argument("--workers", type=_at_least(1))
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="summarise a per-run CSV")
    r.add_argument("--runs", required=True)
    r.add_argument("--out-summary", default="summary.csv")
    r.set_defaults(func=cmd_report)

    o = sub.add_parser("oracle-domset", help="compare greedy and exact dominating sets on a relation file")
    o.add_argument("relation")
    o.set_defaults(func=cmd_oracle_domset)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, MatrixError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
