"""Command-line front end: ``dynbot gen | run | report | ingest``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from dynbot.experiment import (DataError, ExperimentConfig, generate_dataset,
                               run_experiment, write_report)
from dynbot.plant import PlantError
from dynbot.timegraph import (ConfigError, FlowFormatError, TimeConfig, ingest_flows,
                              read_flows, write_slices)

JOBS_ENV = "DYNBOT_JOBS"
EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

log = logging.getLogger("dynbot")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV, "1")
    try:
        jobs = int(raw)
    except ValueError:
        raise ConfigError(f"{JOBS_ENV}={raw!r} is not an integer")
    if jobs < 1:
        raise ConfigError(f"{JOBS_ENV} must be >= 1")
    return jobs


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dynbot", description="P2P botnet community detection on dynamic "
                                           "communication graphs")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--config", required=True)
    g.add_argument("--out", help="dataset directory (default: <output_dir>/data)")

    r = sub.add_parser("run", help="run the experiment matrix on a dataset")
    r.add_argument("--config", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--jobs", type=int, default=None,
                   help=f"worker processes (default ${JOBS_ENV} or 1)")
    r.add_argument("--save-partitions", action="store_true",
                   help="also write node,community CSVs per window")

    rep = sub.add_parser("report", help="summarise a results directory")
    rep.add_argument("--in", dest="indir", required=True)
    rep.add_argument("--out", required=True)

    ing = sub.add_parser("ingest", help="bucket a flow CSV (src,dst,timestamp) into slices")
    ing.add_argument("--flows", required=True)
    ing.add_argument("--out", required=True)
    ing.add_argument("--t0", type=float, default=0.0)
    ing.add_argument("--slice-duration", type=float, default=900.0)
    ing.add_argument("--window-length", type=int, default=4)
    ing.add_argument("--frame-length", type=int, default=24)
    ing.add_argument("--skip-bad-lines", action="store_true")
    return p


def _cmd_gen(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    out = Path(args.out) if args.out else Path(cfg.output_dir) / "data"
    generate_dataset(cfg, out)
    print(f"dataset written to {out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    jobs = args.jobs if args.jobs is not None else _default_jobs()
    if jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    out = run_experiment(cfg, args.data, args.out, jobs=jobs,
                         save_partitions=args.save_partitions)
    print(f"results written to {out}")
    return EXIT_OK


def _cmd_report(args) -> int:
    absent = write_report(args.indir, args.out)
    for a in absent:
        print(f"warning: no results for {a}", file=sys.stderr)
    print(f"report written to {args.out}")
    return EXIT_OK


def _cmd_ingest(args) -> int:
    cfg = TimeConfig(t0=args.t0, slice_duration=args.slice_duration,
                     window_length=args.window_length, frame_length=args.frame_length)
    errors: list | None = [] if args.skip_bad_lines else None
    res = ingest_flows(read_flows(args.flows, errors=errors), cfg)
    write_slices(args.out, res.slices, res.nodes, cfg)
    for e in errors or []:
        print(f"warning: skipped {e}", file=sys.stderr)
    print(f"{res.n_records} records -> {len(res.slices)} slices, {len(res.nodes.names)} nodes "
          f"({res.dropped_self_loops} self-loops, {res.dropped_out_of_range} out of range dropped)")
    return EXIT_OK


COMMANDS = {"gen": _cmd_gen, "run": _cmd_run, "report": _cmd_report, "ingest": _cmd_ingest}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (DataError, FlowFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, PlantError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
