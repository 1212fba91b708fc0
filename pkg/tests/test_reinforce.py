import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynbot.community import Algorithm, Partition
from dynbot.reinforce import (ReinforceConfig, ReinforceMode, build_reinforced, build_window,
                              derive_seed, detect_window, reinforce_slice, slice_partition,
                              slice_seed, window_seed)
from dynbot.timegraph import Scheme, SliceGraph, build_composite

from conftest import random_slices


def test_config_validation():
    ReinforceConfig(gamma=1.0)
    ReinforceConfig(gamma=0.0, mode="additive")
    with pytest.raises(ValueError):
        ReinforceConfig(gamma=0.5)
    with pytest.raises(ValueError):
        ReinforceConfig(gamma=-1, mode=ReinforceMode.ADDITIVE)
    assert ReinforceConfig(algorithm="lpa").algorithm is Algorithm.LPA


def test_seeds_are_stable_and_stage_separated():
    assert derive_seed(5, 1, 2) == derive_seed(5, 1, 2)
    assert slice_seed(5, 3) != window_seed(5, 3)
    assert slice_seed(5, 3) != slice_seed(6, 3)


def test_reinforce_slice_boosts_only_internal_edges():
    s = SliceGraph.from_edges(0, [(0, 1), (1, 2), (2, 3)])
    p = Partition.from_communities([{0, 1}, {2, 3}])
    mult = reinforce_slice(s, p, ReinforceConfig(gamma=3.0))
    add = reinforce_slice(s, p, ReinforceConfig(gamma=0.5, mode="additive"))
    assert mult.edge_dict() == {(0, 1): 3.0, (1, 2): 1.0, (2, 3): 3.0}
    assert add.edge_dict() == {(0, 1): 1.5, (1, 2): 1.0, (2, 3): 1.5}


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(list(Algorithm)),
       st.floats(1.0, 5.0), st.sampled_from(list(ReinforceMode)))
def test_reinforced_weight_identity(seed, algo, gamma, mode):
    # w_R(e) = sum over slices of (gamma-boosted or plain) presence
    rng = np.random.default_rng(seed)
    slices = [s for s in random_slices(rng, 8, 3, 0.4)]
    if all(s.n_edges == 0 for s in slices):
        return
    cfg = ReinforceConfig(gamma=gamma, mode=mode, algorithm=algo, rng_seed=seed)
    got = build_reinforced(slices, cfg).edge_dict()
    want: dict = {}
    for s in slices:
        if s.n_edges == 0:
            continue
        com = slice_partition(s, cfg).community_of
        for a, b in s.edge_keys():
            boost = com[a] == com[b]
            w = (gamma if mode is ReinforceMode.MULTIPLICATIVE else 1 + gamma) if boost else 1.0
            want[(a, b)] = want.get((a, b), 0.0) + w
    assert got.keys() == want.keys()
    for k in want:
        assert got[k] == pytest.approx(want[k], rel=1e-12)


def test_gamma_one_equals_composite(rng):
    slices = random_slices(rng, 10, 4)
    cfg = ReinforceConfig(gamma=1.0)
    r = build_reinforced(slices, cfg)
    assert r.scheme is Scheme.REINFORCED
    assert r.same_as(build_composite(slices))


def test_empty_slices_are_skipped_and_all_empty_raises():
    s = SliceGraph.from_edges(0, [(0, 1), (1, 2)])
    cfg = ReinforceConfig()
    assert build_reinforced([s, SliceGraph.empty(1)], cfg).edge_keys() == s.edge_keys()
    with pytest.raises(ValueError):
        build_reinforced([SliceGraph.empty(0)], cfg)


def test_slice_cache_reused(rng):
    slices = random_slices(rng, 10, 4)
    cfg = ReinforceConfig(rng_seed=3)
    cache: dict = {}
    build_reinforced(slices[:2], cfg, 0, cache)
    assert set(cache) == {0, 1}
    p0 = cache[0]
    build_reinforced(slices[:2], cfg, 0, cache)
    assert cache[0] is p0


@pytest.mark.parametrize("scheme", list(Scheme))
def test_detect_window_deterministic(scheme, rng):
    slices = random_slices(rng, 20, 4, 0.15)
    cfg = ReinforceConfig(rng_seed=9, algorithm="lpa")
    g1, p1 = detect_window(slices, scheme, cfg, 2)
    g2, p2 = detect_window(slices, scheme, cfg, 2)
    assert g1.same_as(g2) and p1.same_as(p2)
    assert build_window(slices, scheme, cfg).scheme is Scheme(scheme)
