"""Command-line entry point: ``fleetsim {run,sweep,plot,validate}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .integrators import IntegrationError
from .metrics import LogFormatError
from .scenario import BUILTINS, ScenarioError, resolve
from .sim import SimulationError

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 2, 3


def _scenario(args, seeds=None):
    return resolve(args.scenario).with_overrides(duration=args.duration,
                                                 plant_substeps=args.substeps, seeds=seeds)


def _add_common(p):
    p.add_argument("--duration", type=float, help="override the scenario duration [s]")
    p.add_argument("--substeps", type=int, help="plant substeps per control tick")
    p.add_argument("--out", default="runs", help="output directory (default: runs)")


def cmd_run(args) -> int:
    from .runner import run_scenario

    sc = _scenario(args)
    seed = sc.seeds[0] if args.seed is None else args.seed
    res = run_scenario(sc, seed, args.out)
    print(f"log: {res.log_path}")
    for k, v in res.metrics.summary().items():
        print(f"{k}: {v}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .plotting import plot_comparison
    from .runner import sweep

    scenarios = [resolve(s).with_overrides(duration=args.duration, plant_substeps=args.substeps)
                 for s in args.scenario]
    rows = sweep(scenarios, args.seed, args.out, workers=args.workers)
    out = Path(args.out)
    plot_comparison(rows, "position_rmse", out / "summary_position_rmse.png")
    print(f"summary: {out / 'summary.csv'}")
    for r in rows:
        if r["seed"] == "mean":
            print(f"{r['scenario']}: position_rmse {r['position_rmse']:.4f} m "
                  f"heading_rmse {r['heading_rmse']:.4f} rad ({r['status']})")
    failed = [r for r in rows if r["status"] == "failed"]
    return EXIT_FAILED if failed else EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot_run

    for path in plot_run(args.log, args.out):
        print(path)
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = _scenario(args)
    cfg = sc.validate()
    print(f"{sc.name}: ok ({cfg.n} robots, leader {cfg.leader_index}, "
          f"{sc.duration} s, seeds {list(sc.seeds)})")
    if args.print:
        print(sc.dumps(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fleetsim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    help_sc = f"scenario file or built-in name ({', '.join(BUILTINS)})"

    p = sub.add_parser("run", help="run one scenario for one seed")
    p.add_argument("--scenario", required=True, help=help_sc)
    p.add_argument("--seed", type=int, help="noise seed (default: first seed of the scenario)")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run scenarios x seeds and summarise")
    p.add_argument("--scenario", required=True, action="append", help=help_sc + "; repeatable")
    p.add_argument("--seed", type=int, action="append", help="seed; repeatable (default: scenario seeds)")
    p.add_argument("--workers", type=int, default=1, help="parallel processes")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="render figures from a run log")
    p.add_argument("log", help="CSV log written by 'run'")
    p.add_argument("--out", help="output directory (default: next to the log)")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("validate", help="check a scenario without running it")
    p.add_argument("--scenario", required=True, help=help_sc)
    p.add_argument("--duration", type=float)
    p.add_argument("--substeps", type=int)
    p.add_argument("--print", action="store_true", help="print the normalised scenario file")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, LogFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (IntegrationError, SimulationError) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
