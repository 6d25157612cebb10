"""Command line: ``l1bandit {run,replay,diagnose,chart}``.

Exit codes: 0 success, 2 invalid configuration or input, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .chart import emit_chart
from .config import load_config
from .core import ConfigurationError
from .runner import SUMMARY_FIELDS, default_jobs, diagnose_dir, read_csv, run_experiment, run_replay, \
    summary_series

log = logging.getLogger("l1bandit")


def _load(args):
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.out is not None:
        changes["output"] = args.out
    return dataclasses.replace(cfg, **changes) if changes else cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    out = run_experiment(cfg, jobs=args.jobs)
    print(f"wrote {out}")
    return 0


def cmd_replay(args) -> int:
    cfg = _load(args)
    out = run_replay(cfg)
    print(f"wrote {out}")
    return 0


def cmd_diagnose(args) -> int:
    paths = diagnose_dir(args.trace_dir, n_starts=args.starts)
    print(f"wrote {len(paths)} diagnostics files under {args.trace_dir}/diagnostics")
    return 0


def cmd_chart(args) -> int:
    rows = read_csv(args.summary)
    missing = [f for f in ("t", "policy", "mean") if rows and f not in rows[0]]
    if missing or not rows:
        raise ConfigurationError(f"{args.summary}: expected columns {', '.join(SUMMARY_FIELDS)}")
    emit_chart(summary_series(rows), args.out_svg, ylabel=args.ylabel)
    print(f"wrote {args.out_svg}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="l1bandit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn in (("run", cmd_run), ("replay", cmd_replay)):
        p = sub.add_parser(name, help=f"{name} an experiment config")
        p.add_argument("config")
        p.add_argument("--seed", type=int, help="override experiment.master_seed")
        p.add_argument("--out", help="override experiment.output")
        p.add_argument("--jobs", type=int, default=default_jobs(),
                       help="worker processes (default: $L1BANDIT_JOBS or the core count)")
        p.set_defaults(func=fn)

    p = sub.add_parser("diagnose", help="write diagnostics CSVs for a run directory")
    p.add_argument("trace_dir")
    p.add_argument("--starts", type=int, default=16, help="multi-start count for the compatibility estimate")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("chart", help="render summary.csv as an SVG line chart")
    p.add_argument("summary")
    p.add_argument("out_svg")
    p.add_argument("--ylabel", default="cumulative regret")
    p.set_defaults(func=cmd_chart)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
