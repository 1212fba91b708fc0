import gzip

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynbot.timegraph import (ConfigError, FlowFormatError, FlowRecord, NodeIndex, Scheme,
                              SliceGraph, TimeConfig, build_composite, build_snapshot,
                              canonical_edges, ingest_flows, read_flows, read_slices,
                              split_windows, write_flows, write_slices)

from conftest import random_slices


def test_time_model_defaults():
    cfg = TimeConfig()
    assert cfg.n_slices == 96 and cfg.n_windows == 24
    assert cfg.slice_of(0) == 0 and cfg.slice_of(899.9) == 0 and cfg.slice_of(900) == 1
    assert cfg.window_of(7) == 1
    assert list(cfg.window_slices(2)) == [8, 9, 10, 11]


def test_with_window_length_keeps_horizon():
    cfg = TimeConfig()
    for wl in (1, 2, 4, 8, 96):
        c = cfg.with_window_length(wl)
        assert c.n_slices == 96 and c.window_length == wl
    with pytest.raises(ConfigError):
        cfg.with_window_length(5)


@pytest.mark.parametrize("kw", [{"slice_duration": 0}, {"window_length": 0}, {"frame_length": 0}])
def test_time_config_rejects_bad_values(kw):
    with pytest.raises(ConfigError):
        TimeConfig(**kw)


def test_canonical_edges_orders_and_merges():
    verts, u, v, w = canonical_edges([3, 1, 1, 2], [1, 3, 1, 0], [1.0, 2.0, 5.0, 1.0],
                                     combine="sum")
    assert verts.tolist() == [0, 1, 2, 3]
    assert list(zip(u.tolist(), v.tolist(), w.tolist())) == [(0, 2, 1.0), (1, 3, 3.0)]
    _, _, _, wmax = canonical_edges([3, 1], [1, 3], [1.0, 2.0], combine="max")
    assert wmax.tolist() == [2.0]


def test_ingest_buckets_and_drops():
    cfg = TimeConfig(window_length=2, frame_length=2)  # 4 slices, end 3600
    recs = [("a", "b", 0), ("b", "a", 10), ("a", "c", 950), ("a", "a", 5),
            ("a", "b", 3600), ("x", "y", -1), FlowRecord("c", "d", 2700.5)]
    res = ingest_flows(recs, cfg)
    assert res.n_records == 7 and res.dropped_self_loops == 1 and res.dropped_out_of_range == 2
    names = res.nodes
    e = lambda x, y: tuple(sorted((names.id_of(x), names.id_of(y))))
    assert res.slices[0].edge_dict() == {e("a", "b"): 1.0}
    assert res.slices[1].edge_keys() == {e("a", "c")}
    assert res.slices[2].n_edges == 0
    assert res.slices[3].edge_keys() == {e("c", "d")}


flows = st.lists(st.tuples(st.sampled_from("abcdef"), st.sampled_from("abcdef"),
                           st.floats(min_value=-100, max_value=4000, allow_nan=False)),
                 max_size=60)


@settings(max_examples=60, deadline=None)
@given(flows, st.randoms(use_true_random=False))
def test_ingest_is_order_invariant(recs, rnd):
    cfg = TimeConfig(window_length=2, frame_length=2)
    shuffled = list(recs)
    rnd.shuffle(shuffled)
    a, b = ingest_flows(recs, cfg), ingest_flows(shuffled, cfg)

    def named(res):
        return [{tuple(sorted(res.nodes.to_names(k))) for k in s.edge_keys()} for s in res.slices]

    assert named(a) == named(b)
    for s in a.slices:
        assert np.all(s.weight == 1.0)


def test_flow_io_roundtrip_and_errors(tmp_path):
    recs = [FlowRecord("a", "b", 1), FlowRecord("b", "c", 901.5)]
    for name in ("f.csv", "f.csv.gz"):
        p = tmp_path / name
        write_flows(p, recs)
        assert list(read_flows(p)) == recs
    bad = tmp_path / "bad.csv"
    bad.write_text("src,dst,timestamp\na,b,1\na,b\nc,d,notatime\n")
    with pytest.raises(FlowFormatError, match="line 3"):
        list(read_flows(bad))
    errs = []
    assert list(read_flows(bad, errors=errs)) == [FlowRecord("a", "b", 1)]
    assert len(errs) == 2
    nohdr = tmp_path / "nohdr.csv"
    nohdr.write_text("a,b,1\n")
    with pytest.raises(FlowFormatError):
        list(read_flows(nohdr))


def test_snapshot_and_composite_by_hand():
    s0 = SliceGraph.from_edges(0, [(0, 1), (1, 2)])
    s1 = SliceGraph.from_edges(1, [(1, 0), (2, 3)])
    snap = build_snapshot([s0, s1])
    comp = build_composite([s0, s1])
    assert snap.scheme is Scheme.SNAPSHOT and comp.scheme is Scheme.COMPOSITE
    assert snap.edge_dict() == {(0, 1): 1.0, (1, 2): 1.0, (2, 3): 1.0}
    assert comp.edge_dict() == {(0, 1): 2.0, (1, 2): 1.0, (2, 3): 1.0}
    with pytest.raises(ValueError):
        build_snapshot([])


def test_composite_of_one_slice_is_that_slice():
    s = SliceGraph.from_edges(0, [(0, 1), (2, 5)])
    assert build_composite([s]).same_as(s)


def test_split_windows_shape(rng):
    cfg = TimeConfig(window_length=3, frame_length=2)
    slices = random_slices(rng, 5, 6)
    wins = split_windows(slices, cfg)
    assert [[s.slice_index for s in w] for w in wins] == [[0, 1, 2], [3, 4, 5]]
    with pytest.raises(ConfigError):
        split_windows(slices[:5], cfg)


def test_slice_directory_roundtrip(tmp_path, rng):
    cfg = TimeConfig(window_length=2, frame_length=2)
    slices = random_slices(rng, 6, 4)
    nodes = NodeIndex(f"n{i}" for i in range(6))
    write_slices(tmp_path, slices, nodes, cfg)
    back, nodes2, cfg2 = read_slices(tmp_path)
    assert cfg2 == cfg and nodes2.names == nodes.names
    for a, b in zip(slices, back):
        assert a.edge_dict() == b.edge_dict()
