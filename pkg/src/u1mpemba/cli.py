"""Command line entry point: ``u1mpemba {sweep,ed,analyze,compare}``."""

import argparse
import json
import os
import sys
from pathlib import Path

from .runner import (OUT_ENV, WORKERS_ENV, ParamMismatchError, analyze_dir, compare_runs,
                     load_config, run_sweep)


def _common(p):
    p.add_argument("--config", required=True, help="key = value configuration file")
    p.add_argument("--out", help=f"output directory (env {OUT_ENV})")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--workers", type=int, help=f"worker processes (env {WORKERS_ENV})")
    p.add_argument("--no-resume", action="store_true", help="recompute finished tasks")


def _load(args, **extra):
    over = {"out_dir": args.out, "seed": args.seed, "workers": args.workers}
    cfg = load_config(args.config, **{k: v for k, v in over.items() if v is not None})
    for k, v in extra.items():
        setattr(cfg, k, v)
    cfg.__post_init__()
    return cfg


def cmd_sweep(args, **extra):
    cfg = _load(args, **extra)
    manifest = run_sweep(cfg, resume=not args.no_resume)
    print(f"{len(manifest.tasks)} tasks, {len(manifest.failed)} failed -> {cfg.out_dir}")
    return 1 if manifest.failed else 0


def cmd_analyze(args):
    cfg = _load(args) if args.config else None
    out = args.out or (cfg.out_dir if cfg else None) or os.environ.get(OUT_ENV)
    if not out:
        print("analyze needs --out or --config", file=sys.stderr)
        return 2
    res = analyze_dir(Path(out), cfg)
    for row in res["crossings"]:
        print(json.dumps(row, default=float))
    for key, fit in res["fits"].items():
        print(key, json.dumps(fit.get("params", fit.get("error")), default=float))
    return 0


def cmd_compare(args):
    try:
        rep = compare_runs(args.trace_a, args.trace_b, args.sigma, t_max=args.t_max)
    except ParamMismatchError as exc:
        print(f"param-mismatch: {exc}", file=sys.stderr)
        return 2
    print(f"max z = {rep['max_z']:.3f} at tolerance {rep['tolerance_sigma']}: "
          f"{'pass' if rep['passed'] else 'fail'}")
    return 0 if rep["passed"] else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="u1mpemba", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("sweep", help="run the configured parameter grid")
    _common(p)
    p = sub.add_parser("ed", help="run the grid with exact statevector simulation only")
    _common(p)
    p = sub.add_parser("analyze", help="crossing times and fits for traces in a directory")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p = sub.add_parser("compare", help="per-time z-scores between two trace files")
    p.add_argument("trace_a")
    p.add_argument("trace_b")
    p.add_argument("--sigma", type=float, default=3.0)
    p.add_argument("--t-max", type=int, dest="t_max")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "sweep":
        return cmd_sweep(args)
    if args.command == "ed":
        return cmd_sweep(args, modes=["ed"])
    if args.command == "analyze":
        return cmd_analyze(args)
    return cmd_compare(args)


if __name__ == "__main__":
    sys.exit(main())
