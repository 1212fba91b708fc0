#!/usr/bin/env python3
"""Louvain against the exhaustive optimum on random small graphs.

Prints the share of instances where Louvain reaches a given fraction of the
optimal modularity, for this package and (if installed) networkx.
"""

import argparse

import numpy as np

from dynbot.community import brute_force_best_partition, louvain, modularity
from dynbot.timegraph import SliceGraph


def random_connected_graph(rng, n):
    perm = rng.permutation(n)
    edges = {tuple(sorted((int(perm[i]), int(perm[rng.integers(i)])))) for i in range(1, n)}
    p = rng.uniform(0.1, 0.7)
    edges |= {(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < p}
    weighted = rng.random() < 0.5
    return SliceGraph.from_edges(0, [(a, b, float(rng.integers(1, 6)) if weighted else 1.0)
                                     for a, b in sorted(edges)])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--ratio", type=float, default=0.9)
    args = ap.parse_args()
    try:
        import networkx as nx
    except ImportError:
        nx = None
    rng = np.random.default_rng(args.seed)
    ours = ref = pos = 0
    for i in range(args.n):
        g = random_connected_graph(rng, int(rng.integers(2, 9)))
        _, q_best = brute_force_best_partition(g)
        if q_best <= 0:
            continue
        pos += 1
        ours += modularity(g, louvain(g, i)) >= args.ratio * q_best
        if nx is not None:
            G = nx.Graph()
            G.add_weighted_edges_from(zip(g.u.tolist(), g.v.tolist(), g.weight.tolist()))
            q = nx.community.modularity(G, nx.community.louvain_communities(G, seed=i))
            ref += q >= args.ratio * q_best
    print(f"{pos} instances with positive optimum")
    print(f"dynbot louvain   >= {args.ratio} * optimum: {ours / pos:.3f}")
    if nx is not None:
        print(f"networkx louvain >= {args.ratio} * optimum: {ref / pos:.3f}")


if __name__ == "__main__":
    main()
