"""Parameter sweeps over (sniffer_link_pdr, removal_load) with seeded repetitions, and their summaries."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .model import UsageError
from .selection import REMOVAL_ORDERS, SelectionParams, select
from .simcore import METRICS_COLUMNS, SimConfig, metrics_row, simulate_traffic
from .topology import TopologyConfig, generate

log = logging.getLogger(__name__)

RUN_COLUMNS = METRICS_COLUMNS + ("error",)
SUMMARY_COLUMNS = (
    "sniffer_link_pdr", "removal_load", "n_runs", "n_errors",
    "detection_pct_mean", "detection_pct_median", "detection_pct_q1", "detection_pct_q3",
    "detection_pct_min", "detection_pct_max",
    "n_sniffers_mean", "unique_pct_mean", "multiple_pct_mean",
)
SEED_SCOPES = ("repetition", "run")

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix_seed(*parts: int) -> int:
    """Fold integers into one 63-bit seed with SplitMix64; stable across platforms and runs."""
    h = 0
    for p in parts:
        h = _splitmix64(h ^ (int(p) & _MASK64))
    return h >> 1


def _grid(start_tenths: int) -> list[float]:
    return [round(i / 10, 1) for i in range(start_tenths, 11)]


@dataclass
class SweepConfig:
    topology_cfg: TopologyConfig = field(default_factory=TopologyConfig)
    sim_cfg: SimConfig = field(default_factory=SimConfig)
    sniffer_link_pdr_values: list[float] = field(default_factory=lambda: _grid(0))
    removal_load_values: list[float] = field(default_factory=lambda: _grid(1))
    repetitions: int = 100
    master_seed: int = 0
    removal_order: str = "worst_first"
    # "repetition": repetition k uses the same topology and traffic at every grid point;
    # "run": every (grid point, repetition) gets its own seed
    seed_scope: str = "repetition"
    pin_topology: bool = False
    workers: int = 1

    def check(self) -> None:
        for v in list(self.sniffer_link_pdr_values) + list(self.removal_load_values):
            if not 0.0 <= v <= 1.0:
                raise UsageError(f"grid value {v} outside [0, 1]")
        if self.repetitions < 1:
            raise UsageError("repetitions must be >= 1")
        if self.removal_order not in REMOVAL_ORDERS:
            raise UsageError(f"removal_order must be one of {REMOVAL_ORDERS}")
        if self.seed_scope not in SEED_SCOPES:
            raise UsageError(f"seed_scope must be one of {SEED_SCOPES}")
        self.topology_cfg.check()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["topology"] = d.pop("topology_cfg")
        d["sim"] = d.pop("sim_cfg")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__} | {"topology", "sim"}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown sweep config keys: {sorted(unknown)}")
        try:
            topo = TopologyConfig(**d.pop("topology", d.pop("topology_cfg", {})))
            sim = SimConfig(**d.pop("sim", d.pop("sim_cfg", {})))
            cfg = cls(topology_cfg=topo, sim_cfg=sim, **d)
        except TypeError as exc:
            raise UsageError(f"bad sweep config: {exc}") from None
        cfg.sniffer_link_pdr_values = [float(v) for v in cfg.sniffer_link_pdr_values]
        cfg.removal_load_values = [float(v) for v in cfg.removal_load_values]
        return cfg


def load_sweep_config(path) -> SweepConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from None
    cfg = SweepConfig.from_dict(doc)
    cfg.check()
    return cfg


def run_seeds(cfg: SweepConfig, ti: int, ri: int, k: int) -> tuple[int, int]:
    """(topology seed, simulation seed) for grid point (ti, ri) and repetition k."""
    if cfg.seed_scope == "run":
        run_seed = mix_seed(cfg.master_seed, ti, ri, k)
    else:
        run_seed = mix_seed(cfg.master_seed, k)
    topo_seed = mix_seed(cfg.master_seed) if cfg.pin_topology else run_seed
    return topo_seed, run_seed


def _error_row(t, r, seed, exc) -> dict:
    row = {c: "" for c in RUN_COLUMNS}
    row.update(sniffer_link_pdr=t, removal_load=r, seed=seed,
               error=f"{type(exc).__name__}: {exc}".replace("\n", " "))
    return row


def _run_group(cfg: SweepConfig, points: list[tuple[int, int, int]]) -> list[tuple[tuple, dict]]:
    """Run grid points that share a (topology seed, sim seed); returns keyed rows."""
    _, _, k = points[0]
    topo_seed, sim_seed = run_seeds(cfg, *points[0])
    out = []
    try:
        topo = generate(cfg.topology_cfg, topo_seed)
        trace = simulate_traffic(topo.matrix, cfg.sim_cfg, sim_seed)
    except Exception as exc:  # recorded per row; the sweep goes on
        for ti, ri, k in points:
            t, r = cfg.sniffer_link_pdr_values[ti], cfg.removal_load_values[ri]
            out.append(((ti, ri, k), _error_row(t, r, sim_seed, exc)))
        return out
    for ti, ri, k in points:
        t, r = cfg.sniffer_link_pdr_values[ti], cfg.removal_load_values[ri]
        try:
            report = select(topo.matrix, SelectionParams(t, r, cfg.removal_order))
            stats = trace.stats(report.final)
            row = metrics_row(stats, t, r, sim_seed, len(report.final))
            row["error"] = ""
        except Exception as exc:
            row = _error_row(t, r, sim_seed, exc)
        out.append(((ti, ri, k), row))
    return out


def run_sweep(cfg: SweepConfig) -> list[dict]:
    """One metrics row per (grid point, repetition), grid-major and repetition-minor."""
    cfg.check()
    groups: dict[tuple[int, int], list] = {}
    for ti in range(len(cfg.sniffer_link_pdr_values)):
        for ri in range(len(cfg.removal_load_values)):
            for k in range(cfg.repetitions):
                groups.setdefault(run_seeds(cfg, ti, ri, k), []).append((ti, ri, k))
    tasks = list(groups.values())
    results = {}
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for chunk in pool.map(_run_group, [cfg] * len(tasks), tasks):
                results.update(chunk)
    else:
        for points in tasks:
            results.update(_run_group(cfg, points))
    return [results[key] for key in sorted(results)]


def format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows: list[dict], columns, path_or_buf) -> None:
    close = False
    if isinstance(path_or_buf, (str, Path)):
        fh = open(path_or_buf, "w", encoding="utf-8", newline="")
        close = True
    else:
        fh = path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row.get(c, "")) for c in columns])
    finally:
        if close:
            fh.close()


def rows_to_csv(rows: list[dict], columns=RUN_COLUMNS) -> str:
    buf = io.StringIO()
    write_csv(rows, columns, buf)
    return buf.getvalue()


class RunsFileError(ValueError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno


_INT_COLUMNS = {"seed", "n_sniffers", "tx_frames", "detected", "unique", "multiple", "collisions_at_sniffers"}


def read_runs(path) -> list[dict]:
    """Parse a per-run CSV written by :func:`write_csv`."""
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[:len(METRICS_COLUMNS)]) != METRICS_COLUMNS:
            raise RunsFileError(path, 1, "missing or unexpected header")
        for lineno, fields in enumerate(reader, start=2):
            if len(fields) != len(header):
                raise RunsFileError(path, lineno, f"expected {len(header)} fields, got {len(fields)}")
            raw = dict(zip(header, fields))
            row = {}
            try:
                row["sniffer_link_pdr"] = float(raw["sniffer_link_pdr"])
                row["removal_load"] = float(raw["removal_load"])
                row["error"] = raw.get("error", "")
                for c in METRICS_COLUMNS[2:]:
                    if row["error"] and raw[c] == "":
                        row[c] = ""
                    else:
                        row[c] = int(raw[c]) if c in _INT_COLUMNS else float(raw[c])
            except ValueError as exc:
                raise RunsFileError(path, lineno, f"corrupted row: {exc}") from None
            rows.append(row)
    return rows


def _quantiles(values: np.ndarray) -> dict:
    q1, med, q3 = np.percentile(values, [25, 50, 75])  # linear interpolation
    return {"mean": float(values.mean()), "median": float(med), "q1": float(q1), "q3": float(q3),
            "min": float(values.min()), "max": float(values.max())}


def aggregate(rows: list[dict]) -> list[dict]:
    """Box-plot summary per (sniffer_link_pdr, removal_load), sorted by that key."""
    groups: dict[tuple[float, float], list[dict]] = {}
    errors: dict[tuple[float, float], int] = {}
    for row in rows:
        key = (float(row["sniffer_link_pdr"]), float(row["removal_load"]))
        if row.get("error"):
            errors[key] = errors.get(key, 0) + 1
            groups.setdefault(key, [])
        else:
            groups.setdefault(key, []).append(row)
    out = []
    for key in sorted(groups):
        good = groups[key]
        if not good:
            log.warning("no successful runs at sniffer_link_pdr=%g removal_load=%g (%d errors); omitted",
                        key[0], key[1], errors.get(key, 0))
            continue
        # sorting makes float summation independent of input row order
        det = np.sort(np.array([float(r["detection_pct"]) for r in good]))
        q = _quantiles(det)
        out.append({
            "sniffer_link_pdr": key[0],
            "removal_load": key[1],
            "n_runs": len(good),
            "n_errors": errors.get(key, 0),
            **{f"detection_pct_{k}": v for k, v in q.items()},
            "n_sniffers_mean": float(np.mean(np.sort([float(r["n_sniffers"]) for r in good]))),
            "unique_pct_mean": float(np.mean(np.sort([float(r["unique_pct"]) for r in good]))),
            "multiple_pct_mean": float(np.mean(np.sort([float(r["multiple_pct"]) for r in good]))),
        })
    return out


def table1_config(repetitions: int = 100, master_seed: int = 0) -> SweepConfig:
    """The evaluation grid: 11 thresholds 0.0..1.0 by 10 loads 0.1..1.0."""
    return SweepConfig(repetitions=repetitions, master_seed=master_seed)
