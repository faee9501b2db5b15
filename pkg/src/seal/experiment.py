"""Seeded experiment grids, learning curves and the runtime sweep.

A plan expands to cells ``strategy x sweep value x seed_val x seed_init``.
Every cell derives its own seed from its coordinates, so the results do not
depend on the order or the number of worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._accel import tune_allocator
from .engine import (STRATEGIES, TrainingConfig, apply_ablation, final_train_eval,
                     prepare_inputs, run_active_loop)
from .graph import GraphBundle, generate_synthetic, load_bundle, make_splits
from .metrics import aggregate

log = logging.getLogger(__name__)

DELTA_GRID = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
ALPHA_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4)
SWEEPS = ("none", "delta", "alpha")

RESULT_FIELDS = ("strategy", "dataset", "delta", "alpha", "seed_val", "seed_init",
                 "num_labels", "micro_f1", "macro_f1", "wall_seconds")
CURVE_FIELDS = ("strategy", "dataset", "delta", "alpha", "seed_val", "seed_init",
                "num_labels", "micro_f1", "macro_f1")
TIMING_FIELDS = ("num_nodes", "num_edges", "num_queries", "wall_seconds", "query_digest")
TIMING_NOTE = ("# synthetic stochastic-block graphs stand in for subgraphs of a large citation "
               "network; mean degree is held fixed so edges grow linearly with nodes")


def default_split_sizes(num_nodes) -> tuple[int, int]:
    """1000 test / 500 validation nodes, scaled down to N/4 and N/8 on small graphs."""
    if num_nodes >= 2000:
        return 1000, 500
    return num_nodes // 4, num_nodes // 8


def default_seeds(master_seed=0, count=10) -> tuple:
    return tuple(range(master_seed, master_seed + count))


def cell_seed(seed_val, seed_init, sweep_value=None) -> int:
    """Run seed for one grid cell.

    The strategy is left out on purpose: every strategy in a cell sees the same
    initial weights and dropout streams, so comparisons between them are paired.
    """
    key = f"{int(seed_val)}|{int(seed_init)}|{'' if sweep_value is None else repr(float(sweep_value))}"
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little") >> 1


@dataclass(frozen=True)
class ExperimentPlan:
    out_dir: Path
    strategies: tuple = ("seal",)
    val_seeds: tuple = default_seeds()
    init_seeds: tuple = default_seeds()
    bundle_path: Optional[str] = None
    synthetic: Optional[dict] = None      # generate_synthetic keyword arguments
    sweep: str = "none"
    sweep_values: tuple = ()
    curve_interval: Optional[int] = None  # None: start and end of the budget only
    config: TrainingConfig = field(default_factory=TrainingConfig)
    jobs: int = 1
    split_sizes: Optional[tuple] = None   # (test, val); None picks by graph size

    def __post_init__(self):
        if (self.bundle_path is None) == (self.synthetic is None):
            raise ValueError("give exactly one of a bundle path or a synthetic spec")
        if not self.strategies:
            raise ValueError("no strategies given")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ValueError(f"unknown strategy {s!r}; expected one of {STRATEGIES}")
        if not self.val_seeds or not self.init_seeds:
            raise ValueError("seed lists must be non-empty")
        if self.sweep not in SWEEPS:
            raise ValueError(f"sweep must be one of {SWEEPS}")
        if self.sweep == "none" and self.sweep_values:
            raise ValueError("sweep values given without a sweep axis")
        if self.sweep == "delta" and any(not 0 < v <= 1 for v in self.values):
            raise ValueError("delta sweep values must lie in (0, 1]")
        if self.sweep == "alpha" and any(v < 0 for v in self.values):
            raise ValueError("alpha sweep values must be >= 0")
        if self.curve_interval is not None and self.curve_interval < 1:
            raise ValueError("curve interval must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    @property
    def values(self) -> tuple:
        """Sweep values; ``(None,)`` when there is no sweep."""
        if self.sweep == "none":
            return (None,)
        if self.sweep_values:
            return tuple(float(v) for v in self.sweep_values)
        return DELTA_GRID if self.sweep == "delta" else ALPHA_GRID

    def cells(self) -> list:
        return [Cell(s, v, sv, si) for s in self.strategies for v in self.values
                for sv in self.val_seeds for si in self.init_seeds]

    def cell_config(self, cell: "Cell") -> TrainingConfig:
        cfg = replace(self.config, strategy=cell.strategy)
        if cell.sweep_value is not None:
            cfg = replace(cfg, **{self.sweep: cell.sweep_value})
        return cfg

    def load(self) -> GraphBundle:
        if self.bundle_path is not None:
            return load_bundle(self.bundle_path)
        return generate_synthetic(**self.synthetic)


@dataclass(frozen=True)
class Cell:
    strategy: str
    sweep_value: Optional[float]
    seed_val: int
    seed_init: int


@dataclass(frozen=True)
class ResultsRow:
    strategy: str
    dataset: str
    delta: float
    alpha: float
    seed_val: int
    seed_init: int
    num_labels: int
    micro_f1: float
    macro_f1: float
    wall_seconds: float

    def __post_init__(self):
        if not (0 <= self.micro_f1 <= 1 and 0 <= self.macro_f1 <= 1):
            raise ValueError("F1 scores must lie in [0, 1]")
        if self.wall_seconds < 0:
            raise ValueError("wall_seconds must be >= 0")


@dataclass(frozen=True)
class CurveRow:
    strategy: str
    dataset: str
    delta: float
    alpha: float
    seed_val: int
    seed_init: int
    num_labels: int
    micro_f1: float
    macro_f1: float


@dataclass
class CellOutcome:
    cell: Cell
    row: Optional[ResultsRow] = None
    curve: list = field(default_factory=list)
    error: Optional[str] = None


@dataclass
class PlanOutcome:
    rows: list
    curves: list
    failures: list
    out_dir: Path

    @property
    def ok(self):
        return not self.failures


# ---------------------------------------------------------------- running cells

def run_cell(bundle: GraphBundle, plan: ExperimentPlan, cell: Cell, inputs=None) -> CellOutcome:
    """Active loop, final retrain and curve snapshots for one cell; errors are captured."""
    try:
        cfg = plan.cell_config(cell)
        eff = apply_ablation(cfg)
        test_size, val_size = plan.split_sizes or default_split_sizes(bundle.num_nodes)
        splits = make_splits(bundle, cell.seed_val, cell.seed_init, test_size, val_size)
        seed = cell_seed(cell.seed_val, cell.seed_init, cell.sweep_value)
        if inputs is None:
            inputs = prepare_inputs(bundle, cfg)

        start = time.perf_counter()
        result = run_active_loop(bundle, splits, cfg, seed=seed,
                                 curve_interval=plan.curve_interval, inputs=inputs)
        final = final_train_eval(bundle, splits, result.pools.labeled, cfg, seed=seed,
                                 inputs=inputs)
        wall = time.perf_counter() - start

        common = dict(strategy=cell.strategy, dataset=bundle.name, delta=float(eff.delta),
                      alpha=float(eff.alpha), seed_val=int(cell.seed_val),
                      seed_init=int(cell.seed_init))
        n_final = len(result.pools.labeled)
        row = ResultsRow(**common, num_labels=n_final, micro_f1=final.micro_f1,
                         macro_f1=final.macro_f1, wall_seconds=wall)
        curve = []
        for num_labels, ids in result.snapshots:
            ev = final if num_labels == n_final else final_train_eval(
                bundle, splits, ids, cfg, seed=seed, inputs=inputs)
            curve.append(CurveRow(**common, num_labels=int(num_labels), micro_f1=ev.micro_f1,
                                  macro_f1=ev.macro_f1))
        return CellOutcome(cell, row, curve)
    except Exception as exc:   # recorded per cell, the grid carries on
        log.warning("cell %s failed: %s", cell, exc)
        return CellOutcome(cell, error=f"{type(exc).__name__}: {exc}")


_worker: dict = {}


def _init_worker(bundle, plan):
    tune_allocator()
    _worker.update(bundle=bundle, plan=plan, inputs={})


def _run_in_worker(cell: Cell) -> CellOutcome:
    bundle, plan = _worker["bundle"], _worker["plan"]
    cfg = plan.cell_config(cell)
    key = cfg.normalize_features
    if key not in _worker["inputs"]:
        _worker["inputs"][key] = prepare_inputs(bundle, cfg)
    return run_cell(bundle, plan, cell, _worker["inputs"][key])


def run_plan(plan: ExperimentPlan, bundle: Optional[GraphBundle] = None) -> PlanOutcome:
    """Run every cell and write results.csv, curves.csv and summary.json.

    The bundle is loaded first, so a bad path fails before any training.
    Failed cells are listed in summary.json; the other rows are still written.
    """
    if bundle is None:
        bundle = plan.load()
    cells = plan.cells()
    if plan.jobs == 1:
        _init_worker(bundle, plan)
        outcomes = [_run_in_worker(c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=plan.jobs, initializer=_init_worker,
                                 initargs=(bundle, plan)) as pool:
            # map keeps submission order, so the collector sees cells in grid order
            outcomes = list(pool.map(_run_in_worker, cells))

    rows = [o.row for o in outcomes if o.row is not None]
    curves = [r for o in outcomes for r in o.curve]
    failures = [dict(asdict(o.cell), error=o.error) for o in outcomes if o.error is not None]
    out = Path(plan.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "results.csv", RESULT_FIELDS, rows)
    emit_curve(curves, out / "curves.csv")
    write_summary(out / "summary.json", plan, bundle, rows, failures)
    return PlanOutcome(rows, curves, failures, out)


# ---------------------------------------------------------------- output

def format_value(v) -> str:
    """CSV text for a value; floats keep 17 significant digits so they parse back exactly."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, columns: Sequence[str], rows, header_note: Optional[str] = None) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        if header_note:
            fh.write(header_note + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([format_value(getattr(r, c)) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    """Rows of a CSV written by this module; ``#`` comment lines are skipped."""
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def emit_curve(curve_rows, path) -> Path:
    """Learning-curve rows ordered by run, then by label count."""
    return write_csv(path, CURVE_FIELDS, curve_rows)


def summarize(rows) -> list[dict]:
    """Mean and sample std per (strategy, delta, alpha) group."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.strategy, r.delta, r.alpha), []).append(r)
    out = []
    for (strategy, delta, alpha), members in groups.items():
        out.append(dict(strategy=strategy, delta=delta, alpha=alpha,
                        num_labels=sorted({m.num_labels for m in members}),
                        **aggregate(members)))
    return out


def write_summary(path, plan: ExperimentPlan, bundle: GraphBundle, rows, failures) -> Path:
    cfg = {f.name: getattr(plan.config, f.name) for f in fields(plan.config)}
    doc = {
        "dataset": bundle.name,
        "plan": {"strategies": list(plan.strategies), "val_seeds": list(plan.val_seeds),
                 "init_seeds": list(plan.init_seeds), "sweep": plan.sweep,
                 "sweep_values": [v for v in plan.values if v is not None],
                 "curve_interval": plan.curve_interval, "jobs": plan.jobs,
                 "bundle": plan.bundle_path, "synthetic": plan.synthetic, "config": cfg},
        "cells": summarize(rows) if rows else [],
        "failures": failures,
    }
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, default=list) + "\n")
    return path


# ---------------------------------------------------------------- runtime sweep

@dataclass(frozen=True)
class TimingRow:
    num_nodes: int
    num_edges: int
    num_queries: int
    wall_seconds: float
    query_digest: str


def query_digest(records) -> str:
    text = ",".join(str(r.node) for r in records)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def timing_sweep(node_counts, num_classes=3, num_features=100, degree_in=4.0, degree_out=1.0,
                 feature_signal=0.3, num_queries=48, seed=0, config: Optional[TrainingConfig] = None,
                 out_path=None) -> list[TimingRow]:
    """Wall time of a fixed-budget SEAL selection run on synthetic graphs of growing size.

    Edge probabilities are scaled by ``1/N`` so the expected degree, and so
    ``|E| / N``, stays constant. Graph generation is not timed.
    """
    counts = [int(n) for n in node_counts]
    if counts != sorted(counts):
        raise ValueError("node counts must be ascending")
    base = replace(config or TrainingConfig(), budget=num_queries)
    rows = []
    for n in counts:
        per_class = n / num_classes
        bundle = generate_synthetic(n, num_classes, num_features,
                                    min(1.0, degree_in / per_class),
                                    min(1.0, degree_out / max(1.0, n - per_class)),
                                    feature_signal, seed=seed)
        splits = make_splits(bundle, seed, seed, n // 4, n // 8)
        inputs = prepare_inputs(bundle, base)
        start = time.perf_counter()
        result = run_active_loop(bundle, splits, base, seed=seed, inputs=inputs)
        wall = time.perf_counter() - start
        rows.append(TimingRow(n, bundle.num_edges, len(result.records), wall,
                              query_digest(result.records)))
        log.info("timing N=%d: %.2fs", n, wall)
    if out_path is not None:
        write_csv(out_path, TIMING_FIELDS, rows, header_note=TIMING_NOTE)
    return rows


def linear_fit(xs, ys) -> tuple[float, float, float]:
    """Least-squares ``y = a*x + b``; returns ``(a, b, r_squared)``."""
    x, y = np.asarray(xs, float), np.asarray(ys, float)
    a, b = np.polyfit(x, y, 1)
    resid = y - (a * x + b)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(a), float(b), r2


def env_master_seed(default=0) -> int:
    raw = os.environ.get("SEAL_SEED")
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"SEAL_SEED must be an integer, got {raw!r}") from None
