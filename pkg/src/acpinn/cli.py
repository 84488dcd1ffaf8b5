"""Command line interface: run experiments, list the registry, compare runs,
and (re)build the spectral reference."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .experiments import (
    ConfigError,
    compare_runs,
    get_config,
    registry_listing,
    run_experiment,
)
from .network import TrainingFault
from .problems import make_problem
from .reference import (
    DEFAULT_DT,
    DEFAULT_MODES,
    SolverFault,
    solve_spectral_1d,
    write_golden,
)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="acpinn",
                                description="Energy-penalized PINN runner for "
                                            "Allen-Cahn benchmarks")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one benchmark configuration")
    run.add_argument("key", help="problem key (see `acpinn list`)")
    run.add_argument("--seed", type=int, default=1)
    run.add_argument("--desk-scale", action="store_true",
                     help="apply the documented reduced budgets")
    run.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="KEY=VALUE", help="override a config field")
    run.add_argument("--out", default=None, help="run directory")
    run.add_argument("--resume", action="store_true",
                     help="continue an interrupted run in --out")
    run.add_argument("--quiet", action="store_true")

    sub.add_parser("list", help="list registered benchmarks")

    cmp_p = sub.add_parser("compare", help="per-metric deltas of two runs")
    cmp_p.add_argument("run_a")
    cmp_p.add_argument("run_b")

    ref = sub.add_parser("reference", help="reference-solution utilities")
    ref_sub = ref.add_subparsers(dest="ref_command", required=True)
    build = ref_sub.add_parser("build", help="solve and store the golden reference")
    build.add_argument("key")
    build.add_argument("--modes", type=int, default=DEFAULT_MODES)
    build.add_argument("--dt", type=float, default=DEFAULT_DT)
    build.add_argument("--snapshots", type=int, default=21,
                       help="snapshot count over [0, horizon]")
    build.add_argument("--out", default=None, help="directory for the golden files")
    return p


def _cmd_run(args) -> int:
    config = get_config(args.key, seed=args.seed, desk_scale=args.desk_scale,
                        overrides=args.overrides)
    log = None if args.quiet else (lambda msg: print(msg, flush=True))
    summary = run_experiment(config, out=args.out and Path(args.out),
                             resume=args.resume, log=log)
    print(f"run complete: {summary['out_dir']}")
    for key in ("relative_l2", "relative_l2_final", "energy_initial",
                "energy_final", "u_min", "u_max", "wall_time_s"):
        if key in summary:
            print(f"  {key} = {summary[key]}")
    return 0


def _cmd_list() -> int:
    for key, desc in registry_listing():
        print(f"{key:22s} {desc}")
    return 0


def _cmd_compare(args) -> int:
    rows = compare_runs(Path(args.run_a), Path(args.run_b))
    width = max(len(r[0]) for r in rows)
    print(f"{'metric':{width}s} {'a':>14s} {'b':>14s} {'delta':>14s}")
    for key, va, vb, delta in rows:
        fa = f"{va:.6g}" if isinstance(va, float) else str(va)
        fb = f"{vb:.6g}" if isinstance(vb, float) else str(vb)
        fd = f"{delta:+.6g}" if isinstance(delta, (int, float)) and not isinstance(delta, bool) else str(delta)
        print(f"{key:{width}s} {fa:>14s} {fb:>14s} {fd:>14s}")
    return 0


def _cmd_reference(args) -> int:
    if args.key != "ac1d-poly":
        print(f"error: golden references cover the 1D periodic benchmark, "
              f"not {args.key!r}", file=sys.stderr)
        return 2
    prob = make_problem(args.key)
    times = np.linspace(0.0, prob.horizon, args.snapshots)
    ref = solve_spectral_1d(prob, n_modes=args.modes, dt=args.dt,
                            snapshot_times=times)
    path = write_golden(ref, args.key,
                        Path(args.out) if args.out else None)
    print(f"golden reference written: {path}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "list":
            return _cmd_list()
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "reference":
            return _cmd_reference(args)
    except (ConfigError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingFault, SolverFault) as exc:
        print(f"fault: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
