"""``seal`` command line: run grids, generate bundles, time runs, check gradients."""

from __future__ import annotations

import argparse
import logging
import re
import sys
import time
from dataclasses import replace
from pathlib import Path

from ._accel import USE_NUMBA, tune_allocator
from .engine import STRATEGIES, TrainingConfig
from .experiment import (ExperimentPlan, default_seeds, env_master_seed, linear_fit, run_plan,
                         summarize, timing_sweep)
from .graph import BundleError, generate_synthetic, parse_synthetic_spec, save_bundle


def _int_list(text):
    """``"0,1,2"``, with ``"a-b"`` ranges allowed: ``"0-9"``."""
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        m = re.fullmatch(r"(\d+)-(\d+)", part)
        if m:
            out.extend(range(int(m.group(1)), int(m.group(2)) + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty list {text!r}")
    return tuple(out)


def _float_list(text):
    return tuple(float(p) for p in text.split(",") if p.strip())


def _strategies(text):
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [s for s in names if s not in STRATEGIES]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown strategy {bad}; choose from {', '.join(STRATEGIES)}")
    return names


def _config_args(p):
    p.add_argument("--delta", type=float, default=0.6, help="pool-tuning confidence threshold")
    p.add_argument("--alpha", type=float, default=0.6, help="weight of the supervised D loss")
    p.add_argument("--budget", type=int, default=None, help="queries per run (default 20*K - |L_init|)")
    p.add_argument("--pretrain-epochs", type=int, default=300)
    p.add_argument("--select-reduction", choices=("sum", "mean"), default=None)
    p.add_argument("--final-reduction", choices=("sum", "mean"), default=None)


def _config_from(args, **kw) -> TrainingConfig:
    extra = {k: v for k, v in (("select_reduction", args.select_reduction),
                              ("final_reduction", args.final_reduction)) if v is not None}
    return TrainingConfig(delta=args.delta, alpha=args.alpha, budget=args.budget,
                          pretrain_epochs=args.pretrain_epochs, **extra, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seal", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a seeded strategy grid")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--bundle", help="bundle directory")
    src.add_argument("--synthetic", help="N,K,M,pin,pout,signal")
    run.add_argument("--synthetic-seed", type=int, default=1)
    run.add_argument("--strategy", type=_strategies, default=("seal",),
                     help=f"comma list of {', '.join(STRATEGIES)}")
    _config_args(run)
    run.add_argument("--val-seeds", type=_int_list, default=None,
                     help="e.g. 0,1,2 or 0-9 (default: 10 seeds from SEAL_SEED)")
    run.add_argument("--init-seeds", type=_int_list, default=None)
    run.add_argument("--sweep", choices=("none", "delta", "alpha"), default="none")
    run.add_argument("--sweep-values", type=_float_list, default=())
    run.add_argument("--curve-interval", type=int, default=None,
                     help="queries between learning-curve snapshots (default: budget)")
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--out", required=True, type=Path)

    gen = sub.add_parser("gen-synthetic", help="write a synthetic bundle")
    gen.add_argument("--spec", default="400,3,60,0.05,0.005,0.3", help="N,K,M,pin,pout,signal")
    gen.add_argument("--seed", type=int, default=1)
    gen.add_argument("--noise", type=float, default=0.02, help="background feature rate")
    gen.add_argument("--out", required=True, type=Path)

    tim = sub.add_parser("timing", help="wall time of fixed-budget runs against graph size")
    tim.add_argument("--sizes", type=_int_list, default=(1000, 3000, 5000))
    tim.add_argument("--classes", type=int, default=3)
    tim.add_argument("--features", type=int, default=100)
    tim.add_argument("--degree-in", type=float, default=4.0)
    tim.add_argument("--degree-out", type=float, default=1.0)
    tim.add_argument("--signal", type=float, default=0.3)
    tim.add_argument("--queries", type=int, default=48)
    tim.add_argument("--pretrain-epochs", type=int, default=300)
    tim.add_argument("--seed", type=int, default=None, help="default: SEAL_SEED or 0")
    tim.add_argument("--out", required=True, type=Path)

    sub.add_parser("check-gradients", help="finite-difference check of every gradient")
    return parser


def cmd_run(args) -> int:
    master = env_master_seed()
    synthetic = None
    if args.synthetic:
        synthetic = dict(parse_synthetic_spec(args.synthetic), seed=args.synthetic_seed)
    plan = ExperimentPlan(
        out_dir=args.out, strategies=args.strategy,
        val_seeds=args.val_seeds or default_seeds(master),
        init_seeds=args.init_seeds or default_seeds(master),
        bundle_path=args.bundle, synthetic=synthetic, sweep=args.sweep,
        sweep_values=args.sweep_values, curve_interval=args.curve_interval,
        config=_config_from(args), jobs=args.jobs)
    try:
        bundle = plan.load()
    except (BundleError, FileNotFoundError) as exc:
        print(f"seal: cannot load bundle: {exc}", file=sys.stderr)
        return 2
    n = len(plan.cells())
    print(f"{bundle.name}: {n} runs, {args.jobs} job(s)", file=sys.stderr)
    start = time.perf_counter()
    out = run_plan(plan, bundle)
    for cell in summarize(out.rows):
        m = cell["micro_f1"]
        print(f"{cell['strategy']:9s} delta={cell['delta']:.2f} alpha={cell['alpha']:.2f} "
              f"micro-F1 {m['mean']:.4f} +- {m['std']:.4f} (n={cell['n']})")
    for f in out.failures:
        print(f"FAILED {f['strategy']} seeds=({f['seed_val']},{f['seed_init']}): {f['error']}",
              file=sys.stderr)
    print(f"wrote {out.out_dir} in {time.perf_counter() - start:.1f}s", file=sys.stderr)
    return 0 if out.ok else 1


def cmd_gen(args) -> int:
    spec = parse_synthetic_spec(args.spec)
    bundle = generate_synthetic(**spec, seed=args.seed, feature_noise=args.noise)
    save_bundle(bundle, args.out)
    print(f"wrote {bundle.name}: {bundle.num_nodes} nodes, {bundle.num_edges} edges -> {args.out}")
    return 0


def cmd_timing(args) -> int:
    seed = env_master_seed() if args.seed is None else args.seed
    cfg = TrainingConfig(pretrain_epochs=args.pretrain_epochs)
    args.out.mkdir(parents=True, exist_ok=True)
    rows = timing_sweep(args.sizes, args.classes, args.features, args.degree_in, args.degree_out,
                        args.signal, args.queries, seed=seed, config=cfg,
                        out_path=args.out / "timing.csv")
    for r in rows:
        print(f"N={r.num_nodes:6d} |E|={r.num_edges:7d} queries={r.num_queries} {r.wall_seconds:.2f}s")
    if len(rows) >= 2:
        slope, icpt, r2 = linear_fit([r.num_nodes for r in rows], [r.wall_seconds for r in rows])
        print(f"linear fit: {slope * 1000:.4f}s per 1000 nodes + {icpt:.2f}s, R^2 = {r2:.4f}")
    return 0


def cmd_check_gradients(args) -> int:
    from .gradcheck import TOLERANCE, run_gradient_checks
    start = time.perf_counter()
    reports = run_gradient_checks()
    ok = True
    for name, rep in reports.items():
        passed = rep.max_error < TOLERANCE
        ok &= passed
        print(f"{'ok  ' if passed else 'FAIL'} {name:26s} max rel err {rep.max_error:.3e} "
              f"({rep.checked} coords, {rep.skipped} skipped at kinks)")
    print(f"{time.perf_counter() - start:.2f}s, tolerance {TOLERANCE:g}")
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    tune_allocator()
    logging.getLogger(__name__).info("numba kernels %s", "on" if USE_NUMBA else "off")
    handlers = {"run": cmd_run, "gen-synthetic": cmd_gen, "timing": cmd_timing,
                "check-gradients": cmd_check_gradients}
    try:
        return handlers[args.command](args)
    except ValueError as exc:
        print(f"seal: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
