#!/usr/bin/env python3
"""Generate the benchmark, run the full matrix and write the report tables.

    python scripts/run_default.py [--config configs/default.json] [--jobs 4]
"""

import argparse
import logging
import time
from pathlib import Path

from dynbot.experiment import ExperimentConfig, generate_dataset, run_experiment, write_report


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=None, help="JSON config (default: built-in defaults)")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    root = Path(cfg.output_dir)
    t0 = time.perf_counter()
    data = root / "data"
    if not (data / "manifest.json").exists():
        generate_dataset(cfg, data)
    out = run_experiment(cfg, data, root / "results", jobs=args.jobs)
    write_report(out, root / "report")
    print(f"done in {time.perf_counter() - t0:.0f}s; tables in {root / 'report'}")


if __name__ == "__main__":
    main()
