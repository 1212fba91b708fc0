import csv
import json
import os

import pytest

from dynbot.cli import main
from dynbot.experiment import (DataError, ExperimentConfig, cell_name, generate_dataset,
                               run_experiment, write_report)
from dynbot.timegraph import ConfigError

SMALL = {
    "time": {"window_length": 2, "frame_length": 4},
    "background": {"n_nodes": 300, "edges_per_slice": 500, "always_active_fraction": 0.3},
    "botnet": {"n_bots": 40, "degree": 4},
    "window_lengths": [2, 4],
    "n_trials": 2,
    "master_seed": 3,
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({**SMALL, "output_dir": str(tmp_path / "exp")}))
    return p


def test_default_config_matrix():
    cfg = ExperimentConfig()
    cells = cfg.cells()
    assert len(cells) == 360
    assert cfg.trial_seed(4) == cfg.master_seed + 4
    assert ExperimentConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


@pytest.mark.parametrize("bad", [{"n_trials": 0}, {"window_lengths": [5]}, {"bogus": 1},
                                 {"gammas": [0.5]}, {"schemes": ["nope"]},
                                 {"background": {"n_slices": 3}}])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**SMALL, **bad})


def test_gen_run_report_roundtrip(tmp_path):
    cfg = ExperimentConfig.from_dict(SMALL)
    data = generate_dataset(cfg, tmp_path / "data")
    man = json.loads((data / "manifest.json").read_text())
    assert man["counts"] == {"slices": 8, "bot_windows": 4, "background_nodes": 300}
    assert len(list((data / "slices").glob("slice_*.csv"))) == 8
    out = run_experiment(cfg, data, tmp_path / "res")
    frames = list(csv.DictReader(open(out / "frames.csv")))
    assert len(frames) == len(cfg.cells())
    for r in frames:
        tp, fp, fn = int(r["tp"]), int(r["fp"]), int(r["fn"])
        assert tp + fp == int(r["detected_size"])
        assert 0 <= float(r["recall"]) <= 1 and 0 <= float(r["precision"]) <= 1
    missing = write_report(out, tmp_path / "rep")
    assert missing == []
    for name in ("window_recall", "window_precision", "frame_recall", "frame_precision"):
        rows = list(csv.DictReader(open(tmp_path / "rep" / f"{name}.csv")))
        assert len(rows) == len(frames) // cfg.n_trials


def test_resume_skips_done_cells(tmp_path):
    cfg = ExperimentConfig.from_dict(SMALL)
    data = generate_dataset(cfg, tmp_path / "data")
    out = run_experiment(cfg, data, tmp_path / "res")
    before = (out / "frames.csv").read_bytes()
    victim = out / "cells" / cell_name(cfg.cells()[5])
    victim.unlink()
    stamp = {p.name: p.stat().st_mtime_ns for p in (out / "cells").iterdir()}
    run_experiment(cfg, data, out)
    assert victim.exists()
    assert all((out / "cells" / n).stat().st_mtime_ns == t for n, t in stamp.items())
    assert (out / "frames.csv").read_bytes() == before


def test_parallel_matches_serial(tmp_path):
    cfg = ExperimentConfig.from_dict(SMALL)
    data = generate_dataset(cfg, tmp_path / "data")
    a = run_experiment(cfg, data, tmp_path / "a", jobs=1)
    b = run_experiment(cfg, data, tmp_path / "b", jobs=2)
    for f in ("windows.csv", "frames.csv", "aggregate.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_manifest_mismatch_refused(tmp_path):
    cfg = ExperimentConfig.from_dict(SMALL)
    data = generate_dataset(cfg, tmp_path / "data")
    other = ExperimentConfig.from_dict({**SMALL, "master_seed": 4})
    with pytest.raises(DataError):
        run_experiment(other, data, tmp_path / "res")


def test_report_warns_on_missing(tmp_path, caplog):
    cfg = ExperimentConfig.from_dict(SMALL)
    data = generate_dataset(cfg, tmp_path / "data")
    out = run_experiment(cfg, data, tmp_path / "res")
    for c in cfg.cells():
        if c[2] == 4 and c[3] == "snapshot" and c[4] == "lpa":
            (out / "cells" / cell_name(c)).unlink()
    missing = write_report(out, tmp_path / "rep")
    assert missing == ["all_mapped/4/snapshot/lpa/na", "monitored/4/snapshot/lpa/na"]
    assert "missing" in caplog.text
    with pytest.raises(DataError):
        write_report(tmp_path / "nothing", tmp_path / "rep2")


def test_cli_exit_codes(cfg_path, tmp_path, capsys):
    assert main(["gen", "--config", str(cfg_path)]) == 0
    data = tmp_path / "exp" / "data"
    assert (data / "manifest.json").exists()
    assert main(["run", "--config", str(cfg_path), "--data", str(data),
                 "--out", str(tmp_path / "res"), "--save-partitions"]) == 0
    parts = list((tmp_path / "res" / "partitions").rglob("*.csv"))
    assert parts and parts[0].read_text().startswith("node,community\n")
    assert main(["report", "--in", str(tmp_path / "res"), "--out", str(tmp_path / "rep")]) == 0
    # data errors
    assert main(["run", "--config", str(cfg_path), "--data", str(tmp_path / "nope"),
                 "--out", str(tmp_path / "x")]) == 2
    assert main(["report", "--in", str(tmp_path / "nope"), "--out", str(tmp_path / "x")]) == 2
    # config errors
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["gen", "--config", str(bad)]) == 1
    assert main(["gen", "--config", str(tmp_path / "missing.json")]) == 1
    with pytest.raises(SystemExit) as e:
        main(["run", "--config", str(cfg_path)])
    assert e.value.code == 1


def test_cli_jobs_env(cfg_path, tmp_path, monkeypatch):
    assert main(["gen", "--config", str(cfg_path)]) == 0
    monkeypatch.setenv("DYNBOT_JOBS", "zero")
    assert main(["run", "--config", str(cfg_path), "--data", str(tmp_path / "exp" / "data"),
                 "--out", str(tmp_path / "res")]) == 1


def test_cli_ingest(tmp_path):
    flows = tmp_path / "flows.csv"
    flows.write_text("src,dst,timestamp\na,b,0\nb,c,1000\nbad,row\n")
    assert main(["ingest", "--flows", str(flows), "--out", str(tmp_path / "s"),
                 "--window-length", "1", "--frame-length", "2"]) == 2
    assert main(["ingest", "--flows", str(flows), "--out", str(tmp_path / "s"),
                 "--window-length", "1", "--frame-length", "2", "--skip-bad-lines"]) == 0
    assert (tmp_path / "s" / "slice_0001.csv").read_text() == "u,v,weight\nb,c,1\n"


def test_constructor_and_loader_agree_on_defaults():
    assert ExperimentConfig().to_dict() == ExperimentConfig.from_dict({}).to_dict()
    a, b = ExperimentConfig(master_seed=1), ExperimentConfig(master_seed=2)
    assert a.background.rng_seed != b.background.rng_seed
