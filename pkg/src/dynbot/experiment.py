"""Experiment matrix: dataset generation, cell execution, result files, reports.

Seed derivation (all randomness flows from ``master_seed``):

* background generator: ``derive_seed(master_seed, 100)`` unless the config pins one
* botnet generator:     ``derive_seed(master_seed, 101)`` unless pinned
* trial ``i``:          ``trial_seed = master_seed + i``
* planting in trial i:  ``derive_seed(trial_seed, 200 + scenario position)``
* detection in trial i: ``ReinforceConfig.rng_seed = trial_seed`` (slice and window
  sub-seeds are derived from it in :mod:`dynbot.reinforce`)
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from dynbot.community import Algorithm, Partition, modularity
from dynbot.evaluate import (aggregate_trials, botnet_community, frame_metrics,
                             window_metrics)
from dynbot.plant import (BackgroundModel, BotnetModel, GroundTruth, PlantScenario,
                          ScenarioKind, background_nodes, gen_background, gen_botnet,
                          model_dict, plant, read_bot_windows, write_bot_windows)
from dynbot.reinforce import ReinforceConfig, ReinforceMode, derive_seed, detect_window
from dynbot.timegraph import (ConfigError, NodeIndex, Scheme, TimeConfig, read_slices,
                              split_windows, write_slices)

log = logging.getLogger(__name__)

FLOAT_FMT = "{:.6f}"
WINDOW_COLUMNS = ["trial", "scenario", "window_length", "scheme", "algorithm", "gamma",
                  "window_index", "tp", "fp", "fn", "recall", "precision", "detected_size",
                  "modularity"]
FRAME_COLUMNS = ["trial", "scenario", "window_length", "scheme", "algorithm", "gamma",
                 "tp", "fp", "fn", "recall", "precision", "detected_size"]


class DataError(RuntimeError):
    """Dataset or results on disk are missing, malformed or inconsistent."""


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    scenario: PlantScenario


@dataclass
class ExperimentConfig:
    time: TimeConfig = field(default_factory=TimeConfig)
    background: BackgroundModel | None = None
    botnet: BotnetModel | None = None
    scenarios: list[ScenarioSpec] = field(default_factory=lambda: [
        ScenarioSpec("all_mapped", PlantScenario(ScenarioKind.ALL_MAPPED)),
        ScenarioSpec("monitored", PlantScenario(ScenarioKind.MONITORED, 0.5)),
    ])
    schemes: list[Scheme] = field(default_factory=lambda: list(Scheme))
    algorithms: list[Algorithm] = field(default_factory=lambda: list(Algorithm))
    window_lengths: list[int] = field(default_factory=lambda: [2, 4, 8])
    gammas: list[float] = field(default_factory=lambda: [2.0])
    gamma_mode: ReinforceMode = ReinforceMode.MULTIPLICATIVE
    n_trials: int = 10
    master_seed: int = 0
    output_dir: str = "runs/default"

    def __post_init__(self):
        # unset generator models follow the time model and derive seeds from master_seed
        if self.background is None:
            self.background = BackgroundModel(n_slices=self.time.n_slices,
                                              rng_seed=derive_seed(self.master_seed, 100))
        if self.botnet is None:
            self.botnet = BotnetModel(n_windows=self.time.n_windows,
                                      rng_seed=derive_seed(self.master_seed, 101))
        self.validate()

    def validate(self) -> None:
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if self.background.n_slices != self.time.n_slices:
            raise ConfigError(f"background.n_slices={self.background.n_slices} but time model "
                              f"has {self.time.n_slices} slices")
        if self.botnet.n_windows != self.time.n_windows:
            raise ConfigError(f"botnet.n_windows={self.botnet.n_windows} but time model "
                              f"has {self.time.n_windows} windows")
        for wl in self.window_lengths:
            self.time.with_window_length(wl)
        names = [s.name for s in self.scenarios]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate scenario names {names}")
        if not (self.scenarios and self.schemes and self.algorithms and self.window_lengths
                and self.gammas):
            raise ConfigError("scenarios, schemes, algorithms, window_lengths and gammas "
                              "must be non-empty")
        for g in self.gammas:
            ReinforceConfig(gamma=g, mode=self.gamma_mode)

    # -- (de)serialisation ---------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {"time", "background", "botnet", "scenarios", "schemes", "algorithms",
                 "window_lengths", "gammas", "gamma_mode", "n_trials", "master_seed",
                 "output_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            master = int(d.get("master_seed", 0))
            time = TimeConfig(**d.get("time", {}))
            bg = dict(d.get("background", {}))
            bg.setdefault("n_slices", time.n_slices)
            bg.setdefault("rng_seed", derive_seed(master, 100))
            bot = dict(d.get("botnet", {}))
            bot.setdefault("n_windows", time.n_windows)
            bot.setdefault("rng_seed", derive_seed(master, 101))
            kwargs = dict(time=time, background=BackgroundModel(**bg), botnet=BotnetModel(**bot),
                          master_seed=master)
            if "scenarios" in d:
                specs = []
                for s in d["scenarios"]:
                    s = dict(s)
                    name = s.pop("name", s.get("kind", "all_mapped"))
                    s.pop("rng_seed", None)
                    specs.append(ScenarioSpec(name, PlantScenario(**s)))
                kwargs["scenarios"] = specs
            if "schemes" in d:
                kwargs["schemes"] = [Scheme(x) for x in d["schemes"]]
            if "algorithms" in d:
                kwargs["algorithms"] = [Algorithm(x) for x in d["algorithms"]]
            for key in ("window_lengths", "gammas", "n_trials", "output_dir"):
                if key in d:
                    kwargs[key] = d[key]
            if "gamma_mode" in d:
                kwargs["gamma_mode"] = ReinforceMode(d["gamma_mode"])
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return {
            "time": self.time.to_dict(),
            "background": model_dict(self.background),
            "botnet": model_dict(self.botnet),
            "scenarios": [{"name": s.name, **{k: v for k, v in model_dict(s.scenario).items()
                                               if k != "rng_seed"}} for s in self.scenarios],
            "schemes": [s.value for s in self.schemes],
            "algorithms": [a.value for a in self.algorithms],
            "window_lengths": list(self.window_lengths),
            "gammas": list(self.gammas),
            "gamma_mode": self.gamma_mode.value,
            "n_trials": self.n_trials,
            "master_seed": self.master_seed,
            "output_dir": self.output_dir,
        }

    def dataset_fingerprint(self) -> str:
        """Hash of every parameter that shapes the generated dataset."""
        d = self.to_dict()
        keep = {k: d[k] for k in ("time", "background", "botnet", "scenarios", "n_trials",
                                  "master_seed")}
        return hashlib.sha256(json.dumps(keep, sort_keys=True).encode()).hexdigest()

    # -- seeds ---------------------------------------------------------------

    def trial_seed(self, trial: int) -> int:
        return self.master_seed + trial

    def scenario_for(self, trial: int, position: int) -> PlantScenario:
        seed = derive_seed(self.trial_seed(trial), 200 + position)
        return replace(self.scenarios[position].scenario, rng_seed=seed)

    # -- run matrix ----------------------------------------------------------

    def cells(self) -> list[tuple]:
        """Every ``(trial, scenario, window_length, scheme, algorithm, gamma)`` cell.

        Only the reinforced scheme varies with gamma; other schemes carry ``None``.
        """
        out = []
        for t in range(self.n_trials):
            for sc in self.scenarios:
                for wl in self.window_lengths:
                    for scheme in self.schemes:
                        gammas = self.gammas if scheme is Scheme.REINFORCED else [None]
                        for alg in self.algorithms:
                            for g in gammas:
                                out.append((t, sc.name, wl, scheme.value, alg.value, g))
        return out


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


# -- small file helpers ------------------------------------------------------

def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return FLOAT_FMT.format(x)
    return str(x)


def _csv_text(columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r[c]) for c in columns])
    return buf.getvalue()


def gamma_tag(g) -> str:
    return "na" if g is None else format(float(g), "g")


def cell_name(cell: tuple) -> str:
    t, sc, wl, scheme, alg, g = cell
    return f"{sc}__wl{wl}__{scheme}__{alg}__g{gamma_tag(g)}__t{t:03d}.json"


# -- gen -----------------------------------------------------------------------

def generate_dataset(cfg: ExperimentConfig, out_dir: str | Path) -> Path:
    """Write background slices, overlay windows, per-trial truth and a manifest."""
    out = Path(out_dir)
    background = gen_background(cfg.background)
    bots = gen_botnet(cfg.botnet)
    nodes = background_nodes(cfg.background.n_nodes)
    write_slices(out / "slices", background, nodes, cfg.time)
    write_bot_windows(out / "bots", bots)
    truth_files = {}
    for t in range(cfg.n_trials):
        for pos, sc in enumerate(cfg.scenarios):
            res = plant(background, bots, cfg.scenario_for(t, pos), cfg.time, nodes)
            rel = f"truth/{sc.name}/trial_{t:03d}.json"
            atomic_write(out / rel, json.dumps(res.truth.to_json(res.nodes), sort_keys=True) + "\n")
            truth_files[f"{sc.name}/{t}"] = rel
    manifest = {
        "fingerprint": cfg.dataset_fingerprint(),
        "config": cfg.to_dict(),
        "seeds": {
            "master_seed": cfg.master_seed,
            "background": cfg.background.rng_seed,
            "botnet": cfg.botnet.rng_seed,
            "trials": {str(t): {"trial_seed": cfg.trial_seed(t),
                                "plant": {sc.name: cfg.scenario_for(t, i).rng_seed
                                          for i, sc in enumerate(cfg.scenarios)}}
                       for t in range(cfg.n_trials)},
        },
        "counts": {"slices": len(background), "bot_windows": len(bots),
                   "background_nodes": len(nodes)},
        "truth_files": truth_files,
    }
    atomic_write(out / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return out


@dataclass
class Dataset:
    slices: list
    nodes: NodeIndex
    bots: list
    manifest: dict
    root: Path


def load_dataset(data_dir: str | Path, cfg: ExperimentConfig) -> Dataset:
    root = Path(data_dir)
    mpath = root / "manifest.json"
    if not mpath.exists():
        raise DataError(f"no manifest.json in {root}")
    manifest = json.loads(mpath.read_text())
    if manifest.get("fingerprint") != cfg.dataset_fingerprint():
        raise DataError(f"dataset {root} was generated with a different configuration "
                        f"(fingerprint mismatch); refusing to run")
    try:
        slices, nodes, time = read_slices(root / "slices")
        bots = read_bot_windows(root / "bots")
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read dataset {root}: {exc}") from exc
    if time != cfg.time or len(slices) != cfg.time.n_slices or len(bots) != cfg.time.n_windows:
        raise DataError(f"dataset {root} does not match the configured time model")
    return Dataset(slices, nodes, bots, manifest, root)


# -- run -----------------------------------------------------------------------

def _partition_rows(p: Partition, nodes: NodeIndex) -> str:
    buf = io.StringIO()
    buf.write("node,community\n")
    for x, c in zip(p.vertices.tolist(), p.labels.tolist()):
        buf.write(f"{nodes.names[x]},{c}\n")
    return buf.getvalue()


def run_unit(cfg: ExperimentConfig, data: Dataset, trial: int, position: int,
             out_dir: Path, save_partitions: bool = False) -> int:
    """Execute every pending cell of one ``(trial, scenario)`` pair.

    Planting is recomputed from the dataset and the trial's seed; the stored
    truth file must agree. Slice-level partitions are shared across window
    lengths and gammas. Returns the number of cells written.
    """
    entry = cfg.scenarios[position]
    todo = [c for c in cfg.cells() if c[0] == trial and c[1] == entry.name
            and not (out_dir / "cells" / cell_name(c)).exists()]
    if not todo:
        return 0
    planted = plant(data.slices, data.bots, cfg.scenario_for(trial, position), cfg.time,
                    data.nodes)
    stored = data.root / data.manifest["truth_files"][f"{entry.name}/{trial}"]
    truth_json = json.loads(stored.read_text())
    if sorted(truth_json["frame"]) != sorted(planted.nodes.names[x]
                                             for x in planted.truth.bot_nodes_frame):
        raise DataError(f"stored ground truth {stored} does not match re-planted data")
    truth = GroundTruth.from_json(truth_json, NodeIndex(planted.nodes.names))
    seed = cfg.trial_seed(trial)
    caches: dict[str, dict] = {}
    written = 0
    for cell in todo:
        _, _, wl, scheme, alg, g = cell
        rcfg = ReinforceConfig(gamma=1.0 if g is None else g, mode=cfg.gamma_mode,
                               algorithm=alg, rng_seed=seed)
        tcfg = cfg.time.with_window_length(wl)
        cache = caches.setdefault(alg, {})
        windows = split_windows(planted.slices, tcfg)
        window_truth = truth.per_window(wl)
        rows, results, parts = [], [], {}
        for w, sl in enumerate(windows):
            if not window_truth[w]:
                log.warning("cell %s window %d has no visible bots; skipped", cell_name(cell), w)
                continue
            graph, part = detect_window(sl, scheme, rcfg, w, cache)
            res = window_metrics(botnet_community(part, window_truth[w]), window_truth[w], w)
            results.append(res)
            rows.append({"window_index": w, "tp": res.tp, "fp": res.fp, "fn": res.fn,
                         "recall": res.recall, "precision": res.precision,
                         "detected_size": len(res.detected),
                         "modularity": modularity(graph, part)})
            if save_partitions:
                parts[w] = _partition_rows(part, planted.nodes)
        fr = frame_metrics(results, truth.bot_nodes_frame)
        union = set().union(*(r.detected for r in results))
        assert union == set(fr.detected)
        payload = {
            "cell": {"trial": trial, "scenario": entry.name, "window_length": wl,
                     "scheme": scheme, "algorithm": alg, "gamma": g},
            "windows": rows,
            "frame": {"tp": fr.tp, "fp": fr.fp, "fn": fr.fn, "recall": fr.recall,
                      "precision": fr.precision, "detected_size": len(fr.detected)},
        }
        for w, text in parts.items():
            atomic_write(out_dir / "partitions" / cell_name(cell).replace(".json", "")
                         / f"window_{w:04d}.csv", text)
        atomic_write(out_dir / "cells" / cell_name(cell), json.dumps(payload, sort_keys=True) + "\n")
        written += 1
    return written


def _unit_worker(args):
    cfg_dict, data_dir, trial, position, out_dir, save_partitions = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    data = load_dataset(data_dir, cfg)
    return run_unit(cfg, data, trial, position, Path(out_dir), save_partitions)


def run_experiment(cfg: ExperimentConfig, data_dir: str | Path, out_dir: str | Path,
                   jobs: int = 1, save_partitions: bool = False) -> Path:
    """Run (or resume) the whole matrix and write merged CSVs and the aggregate JSON."""
    out = Path(out_dir)
    data = load_dataset(data_dir, cfg)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "run_manifest.json", json.dumps(
        {"config": cfg.to_dict(), "fingerprint": cfg.dataset_fingerprint(),
         "data_dir": str(Path(data_dir)),
         "cells": [cell_name(c) for c in cfg.cells()]}, indent=1, sort_keys=True) + "\n")
    units = [(t, p) for t in range(cfg.n_trials) for p in range(len(cfg.scenarios))]
    if jobs > 1 and len(units) > 1:
        args = [(cfg.to_dict(), str(data_dir), t, p, str(out), save_partitions) for t, p in units]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_unit_worker, args))
    else:
        for t, p in units:
            n = run_unit(cfg, data, t, p, out, save_partitions)
            log.info("trial %d scenario %s: %d cells", t, cfg.scenarios[p].name, n)
    merge_results(cfg, out)
    return out


def _read_cells(out: Path, names: list[str]) -> tuple[list[dict], list[str]]:
    found, missing = [], []
    for name in names:
        p = out / "cells" / name
        if p.exists():
            found.append(json.loads(p.read_text()))
        else:
            missing.append(name)
    return found, missing


def _cell_key(c: dict) -> tuple:
    return (c["scenario"], c["window_length"], c["scheme"], c["algorithm"], gamma_tag(c["gamma"]))


def merge_results(cfg: ExperimentConfig, out: Path) -> None:
    cells, missing = _read_cells(out, [cell_name(c) for c in cfg.cells()])
    if missing:
        raise DataError(f"{len(missing)} cells missing after run, e.g. {missing[0]}")
    window_rows, frame_rows = [], []
    for c in cells:
        base = dict(c["cell"])
        for r in c["windows"]:
            window_rows.append({**base, **r})
        frame_rows.append({**base, **c["frame"]})
    sort = lambda r: (r["scenario"], r["window_length"], r["scheme"], r["algorithm"],
                      gamma_tag(r["gamma"]), r["trial"], r.get("window_index", -1))
    window_rows.sort(key=sort)
    frame_rows.sort(key=sort)
    atomic_write(out / "windows.csv", _csv_text(WINDOW_COLUMNS, window_rows))
    atomic_write(out / "frames.csv", _csv_text(FRAME_COLUMNS, frame_rows))
    atomic_write(out / "aggregate.json",
                 json.dumps(aggregate_cells(cells), indent=1, sort_keys=True) + "\n")


def trial_values(cells: list[dict]) -> dict[tuple, dict[str, list[float]]]:
    """Per configuration: one value per trial for each metric.

    Window metrics are averaged over the windows of a trial first.
    """
    grouped: dict[tuple, dict[str, list]] = {}
    for c in sorted(cells, key=lambda c: c["cell"]["trial"]):
        key = _cell_key(c["cell"])
        d = grouped.setdefault(key, {"window_recall": [], "window_precision": [],
                                     "frame_recall": [], "frame_precision": [], "trials": []})
        d["window_recall"].append(float(np.mean([w["recall"] for w in c["windows"]])))
        d["window_precision"].append(float(np.mean([w["precision"] for w in c["windows"]])))
        d["frame_recall"].append(c["frame"]["recall"])
        d["frame_precision"].append(c["frame"]["precision"])
        d["trials"].append(c["cell"]["trial"])
    return grouped


def aggregate_cells(cells: list[dict]) -> list[dict]:
    out = []
    for key, vals in sorted(trial_values(cells).items()):
        scenario, wl, scheme, alg, g = key
        entry = {"scenario": scenario, "window_length": wl, "scheme": scheme,
                 "algorithm": alg, "gamma": g, "n_trials": len(vals["trials"])}
        for metric in ("window_recall", "window_precision", "frame_recall", "frame_precision"):
            xs = vals[metric]
            if len(xs) >= 2:
                mean, half = aggregate_trials(xs)
            else:
                mean, half = float(xs[0]), None
            entry[metric] = {"mean": round(mean, 6),
                             "ci95": None if half is None else round(half, 6)}
        out.append(entry)
    return out


# -- report --------------------------------------------------------------------

REPORT_FILES = {
    "window_recall": "window_recall.csv",
    "window_precision": "window_precision.csv",
    "frame_recall": "frame_recall.csv",
    "frame_precision": "frame_precision.csv",
}
REPORT_COLUMNS = ["scenario", "algorithm", "scheme", "gamma", "window_length", "mean", "ci95",
                  "n_trials"]


def write_report(results_dir: str | Path, out_dir: str | Path) -> list[str]:
    """Tidy per-figure CSVs from a results directory. Returns missing configurations."""
    res = Path(results_dir)
    mpath = res / "run_manifest.json"
    if not mpath.exists():
        raise DataError(f"no run_manifest.json in {res}")
    manifest = json.loads(mpath.read_text())
    cells, missing_cells = _read_cells(res, manifest["cells"])
    if not cells:
        raise DataError(f"no result cells in {res}")
    present = {_cell_key(c["cell"]) for c in cells}
    expected = set()
    for name in manifest["cells"]:
        sc, wl, scheme, alg, g, _ = name[:-len(".json")].split("__")
        expected.add((sc, int(wl[2:]), scheme, alg, g[1:]))
    absent = sorted(expected - present)
    if missing_cells:
        log.warning("%d result cells missing: %s", len(missing_cells), ", ".join(missing_cells))
    if absent:
        log.warning("configurations without any results (rows omitted): %s",
                    "; ".join("/".join(map(str, a)) for a in absent))
    agg = aggregate_cells(cells)
    out = Path(out_dir)
    for metric, fname in REPORT_FILES.items():
        rows = []
        for e in agg:
            rows.append({"scenario": e["scenario"], "algorithm": e["algorithm"],
                         "scheme": e["scheme"], "gamma": e["gamma"],
                         "window_length": e["window_length"], "mean": e[metric]["mean"],
                         "ci95": e[metric]["ci95"], "n_trials": e["n_trials"]})
        rows.sort(key=lambda r: (r["scenario"], r["algorithm"], r["scheme"], r["gamma"],
                                 r["window_length"]))
        atomic_write(out / fname, _csv_text(REPORT_COLUMNS, rows))
    return ["/".join(map(str, a)) for a in absent]
