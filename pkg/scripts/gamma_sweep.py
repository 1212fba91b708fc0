#!/usr/bin/env python3
"""Sensitivity of the reinforced scheme to the boost factor.

Runs the all_mapped scenario with several gamma values (both modes) and
prints mean window/frame precision and recall per (mode, gamma, algorithm,
window length).
"""

import argparse
import json
from pathlib import Path

from dynbot.experiment import ExperimentConfig, generate_dataset, run_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=None)
    ap.add_argument("--out", default="runs/gamma_sweep")
    ap.add_argument("--trials", type=int, default=3)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    base = (ExperimentConfig.load(args.config) if args.config else ExperimentConfig()).to_dict()
    base.update(n_trials=args.trials, schemes=["reinforced"], scenarios=[base["scenarios"][0]])
    sweeps = {"multiplicative": [1.0, 1.5, 2.0, 4.0, 8.0], "additive": [0.5, 1.0, 3.0]}
    root = Path(args.out)
    data = None
    for mode, gammas in sweeps.items():
        cfg = ExperimentConfig.from_dict({**base, "gamma_mode": mode, "gammas": gammas})
        if data is None:
            data = generate_dataset(cfg, root / "data")
        out = run_experiment(cfg, data, root / mode, jobs=args.jobs)
        for e in json.loads((out / "aggregate.json").read_text()):
            print(f"{mode:14s} g={e['gamma']:>4s} {e['algorithm']:7s} wl={e['window_length']} "
                  f"P={e['window_precision']['mean']:.3f} R={e['window_recall']['mean']:.3f} "
                  f"frameP={e['frame_precision']['mean']:.3f} frameR={e['frame_recall']['mean']:.3f}")


if __name__ == "__main__":
    main()
