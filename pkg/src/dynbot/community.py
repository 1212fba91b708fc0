"""Weighted community detection: Louvain, label propagation, modularity.

The inner loops run as numba kernels over a symmetric CSR adjacency; graph
aggregation between Louvain levels is a sparse ``P.T @ A @ P`` product.
All randomness comes from ``numpy.random.default_rng(seed)`` on the Python
side, so results are reproducible across machines for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numba
import numpy as np
import scipy.sparse as sp

from dynbot.timegraph import WeightedGraph

# strict-improvement threshold on delta-Q
MOVE_EPS = 1e-12
BRUTE_FORCE_MAX_VERTICES = 12


class Algorithm(str, Enum):
    LOUVAIN = "louvain"
    LPA = "lpa"


class PartitionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Partition:
    """Total assignment of a vertex set to communities ``0..k-1``.

    ``vertices`` is sorted; ``labels[i]`` is the community of ``vertices[i]``.
    Community ids are numbered by first appearance in vertex order.
    """

    vertices: np.ndarray
    labels: np.ndarray

    @classmethod
    def from_labels(cls, vertices, labels) -> "Partition":
        vertices = np.asarray(vertices, dtype=np.int64)
        labels = np.asarray(labels)
        order = np.argsort(vertices, kind="stable")
        vertices, labels = vertices[order], labels[order]
        _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
        # relabel so ids follow first appearance
        rank = np.empty(len(first), dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(len(first))
        return cls(vertices, rank[inv.ravel()])

    @classmethod
    def from_communities(cls, communities: Iterable[Iterable[int]]) -> "Partition":
        verts, labs = [], []
        for c, members in enumerate(communities):
            for x in members:
                verts.append(x)
                labs.append(c)
        if len(set(verts)) != len(verts):
            raise PartitionError("communities overlap")
        return cls.from_labels(verts, labs)

    @classmethod
    def singletons(cls, vertices) -> "Partition":
        vertices = np.unique(np.asarray(vertices, dtype=np.int64))
        return cls(vertices, np.arange(len(vertices)))

    @property
    def n_communities(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    @property
    def community_of(self) -> dict[int, int]:
        return dict(zip(self.vertices.tolist(), self.labels.tolist()))

    @property
    def communities(self) -> list[set[int]]:
        out: list[set[int]] = [set() for _ in range(self.n_communities)]
        for x, c in zip(self.vertices.tolist(), self.labels.tolist()):
            out[c].add(x)
        return out

    def labels_for(self, nodes: np.ndarray) -> np.ndarray:
        """Community ids of ``nodes``; raises if any node is not covered."""
        nodes = np.asarray(nodes, dtype=np.int64)
        pos = np.searchsorted(self.vertices, nodes)
        pos = np.minimum(pos, max(len(self.vertices) - 1, 0))
        if len(nodes) and (len(self.vertices) == 0 or not np.array_equal(self.vertices[pos], nodes)):
            raise PartitionError("partition is not total over the graph's vertices")
        return self.labels[pos]

    def same_as(self, other: "Partition") -> bool:
        return (np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.labels, other.labels))


def modularity(g: WeightedGraph, p: Partition) -> float:
    """Weighted Newman-Girvan modularity at resolution 1."""
    if g.n_edges == 0:
        raise ValueError("undefined modularity: graph has no edges")
    lab = p.labels_for(g.vertices)
    lu = lab[np.searchsorted(g.vertices, g.u)]
    lv = lab[np.searchsorted(g.vertices, g.v)]
    m = g.weight.sum()
    k = lab.max() + 1
    internal = np.bincount(lu[lu == lv], weights=g.weight[lu == lv], minlength=k)
    tot = (np.bincount(lu, weights=g.weight, minlength=k)
           + np.bincount(lv, weights=g.weight, minlength=k))
    return float(np.sum(internal / m - (tot / (2 * m)) ** 2))


def adjacency(g: WeightedGraph) -> sp.csr_matrix:
    """Symmetric CSR adjacency over local indices ``0..n-1`` (``g.vertices`` order)."""
    n = g.n_vertices
    iu = np.searchsorted(g.vertices, g.u)
    iv = np.searchsorted(g.vertices, g.v)
    rows = np.concatenate([iu, iv])
    cols = np.concatenate([iv, iu])
    data = np.concatenate([g.weight, g.weight])
    a = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    a.sort_indices()
    return a


def _require_edges(g: WeightedGraph) -> None:
    if g.n_edges == 0:
        raise ValueError("community detection needs a graph with at least one edge")


# -- Louvain ---------------------------------------------------------------

@numba.njit(cache=True)
def _louvain_local_moves(indptr, indices, data, k, comm, tot, order, m2, accept_zero):
    n = len(order)
    link = np.zeros(n)
    seen = np.zeros(n, dtype=np.bool_)
    touched = np.empty(n, dtype=np.int64)
    m = m2 / 2.0
    improved = False
    first_sweep = accept_zero
    for _sweep in range(10_000):
        n_moves = 0
        for idx in range(n):
            i = order[idx]
            ci = comm[i]
            ki = k[i]
            nt = 0
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j == i:
                    continue
                c = comm[j]
                if not seen[c]:
                    seen[c] = True
                    touched[nt] = c
                    nt += 1
                link[c] += data[p]
            tot[ci] -= ki
            own_gain = link[ci] - tot[ci] * ki / m2
            best = ci
            best_gain = -np.inf
            for t in range(nt):
                c = touched[t]
                if c == ci:
                    continue
                gain = link[c] - tot[c] * ki / m2
                if gain > best_gain:
                    best_gain = gain
                    best = c
            if best != ci:
                dq = (best_gain - own_gain) / m
                if dq > MOVE_EPS or (first_sweep and dq >= 0.0):
                    n_moves += 1
                else:
                    best = ci
            tot[best] += ki
            comm[i] = best
            for t in range(nt):
                c = touched[t]
                link[c] = 0.0
                seen[c] = False
        first_sweep = False
        if n_moves == 0:
            break
        improved = True
    return improved


def louvain(g: WeightedGraph, rng_seed: int = 0) -> Partition:
    """Multi-level greedy modularity optimisation (resolution 1).

    Vertices are visited in a seeded random order at every level. A move needs
    a strict delta-Q gain, except in the first sweep over the initial
    singletons, where gains of exactly zero are also taken.
    """
    _require_edges(g)
    rng = np.random.default_rng(rng_seed)
    a = adjacency(g)
    membership = np.arange(g.n_vertices)
    level = 0
    while True:
        n = a.shape[0]
        k = np.asarray(a.sum(axis=1)).ravel()
        m2 = float(k.sum())
        comm = np.arange(n)
        tot = k.copy()
        order = rng.permutation(n)
        moved = _louvain_local_moves(a.indptr, a.indices, a.data, k, comm, tot, order, m2,
                                     level == 0)
        if not moved:
            break
        _, comm = np.unique(comm, return_inverse=True)
        comm = comm.ravel()
        membership = comm[membership]
        n_new = int(comm.max()) + 1
        if n_new == n:
            break
        proj = sp.csr_matrix((np.ones(n), (np.arange(n), comm)), shape=(n, n_new))
        a = (proj.T @ a @ proj).tocsr()
        a.sort_indices()
        level += 1
    return Partition.from_labels(g.vertices, membership)


# -- label propagation -----------------------------------------------------

@numba.njit(cache=True)
def _lpa_sweep(indptr, indices, data, labels, order, rand, acc, seen, cand, ties):
    changed = 0
    for idx in range(len(order)):
        i = order[idx]
        if indptr[i] == indptr[i + 1]:
            continue
        nc = 0
        for p in range(indptr[i], indptr[i + 1]):
            lab = labels[indices[p]]
            if not seen[lab]:
                seen[lab] = True
                cand[nc] = lab
                nc += 1
            acc[lab] += data[p]
        best = 0.0
        for t in range(nc):
            if acc[cand[t]] > best:
                best = acc[cand[t]]
        tol = 1e-12 * best
        own = labels[i]
        if seen[own] and acc[own] >= best - tol:
            new = own
        else:
            nt = 0
            for t in range(nc):
                if acc[cand[t]] >= best - tol:
                    ties[nt] = cand[t]
                    nt += 1
            pick = min(int(rand[i] * nt), nt - 1)
            new = ties[pick]
        for t in range(nc):
            acc[cand[t]] = 0.0
            seen[cand[t]] = False
        if new != labels[i]:
            labels[i] = new
            changed += 1
    return changed


@numba.njit(cache=True)
def _lpa_converged(indptr, indices, data, labels, acc, seen, cand):
    for i in range(len(labels)):
        if indptr[i] == indptr[i + 1]:
            continue
        nc = 0
        for p in range(indptr[i], indptr[i + 1]):
            lab = labels[indices[p]]
            if not seen[lab]:
                seen[lab] = True
                cand[nc] = lab
                nc += 1
            acc[lab] += data[p]
        best = 0.0
        for t in range(nc):
            if acc[cand[t]] > best:
                best = acc[cand[t]]
        own = acc[labels[i]]
        for t in range(nc):
            acc[cand[t]] = 0.0
            seen[cand[t]] = False
        if own < best - 1e-12 * best:
            return False
    return True


def label_propagation(g: WeightedGraph, rng_seed: int = 0, max_iters: int = 100) -> Partition:
    """Asynchronous weighted label propagation.

    A vertex keeps its label while that label is among the heaviest in its
    neighbourhood; otherwise it takes one of the heaviest labels, chosen
    uniformly at random.
    """
    _require_edges(g)
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    rng = np.random.default_rng(rng_seed)
    a = adjacency(g)
    n = a.shape[0]
    labels = np.arange(n)
    acc = np.zeros(n)
    seen = np.zeros(n, dtype=np.bool_)
    cand = np.empty(n, dtype=np.int64)
    ties = np.empty(n, dtype=np.int64)
    for _ in range(max_iters):
        order = rng.permutation(n)
        rand = rng.random(n)
        _lpa_sweep(a.indptr, a.indices, a.data, labels, order, rand, acc, seen, cand, ties)
        if _lpa_converged(a.indptr, a.indices, a.data, labels, acc, seen, cand):
            break
    return Partition.from_labels(g.vertices, labels)


def detect(g: WeightedGraph, algorithm: Algorithm | str, rng_seed: int) -> Partition:
    algorithm = Algorithm(algorithm)
    if algorithm is Algorithm.LOUVAIN:
        return louvain(g, rng_seed)
    return label_propagation(g, rng_seed)


# -- exhaustive oracle -----------------------------------------------------

def set_partitions(n: int) -> np.ndarray:
    """All set partitions of ``n`` items as restricted growth strings (one per row)."""
    rows = np.zeros((1, min(n, 1)), dtype=np.int8)
    peak = np.zeros(1, dtype=np.int8)
    for _ in range(1, n):
        reps = (peak + 2).astype(np.int64)
        base = np.repeat(rows, reps, axis=0)
        nxt = np.concatenate([np.arange(r, dtype=np.int8) for r in reps])
        rows = np.column_stack([base, nxt])
        peak = np.maximum(np.repeat(peak, reps), nxt)
    return rows


def brute_force_best_partition(g: WeightedGraph) -> tuple[Partition, float]:
    """Exact modularity maximum by enumerating every set partition."""
    n = g.n_vertices
    if n > BRUTE_FORCE_MAX_VERTICES:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_MAX_VERTICES} vertices, got {n}")
    _require_edges(g)
    iu = np.searchsorted(g.vertices, g.u)
    iv = np.searchsorted(g.vertices, g.v)
    m = g.weight.sum()
    deg = np.bincount(iu, weights=g.weight, minlength=n) + np.bincount(iv, weights=g.weight, minlength=n)
    best_q, best_row = -np.inf, None
    rgs = set_partitions(n)
    for start in range(0, len(rgs), 200_000):
        chunk = rgs[start:start + 200_000]
        internal = (chunk[:, iu] == chunk[:, iv]).astype(np.float64) @ g.weight / m
        penalty = np.zeros(len(chunk))
        for c in range(n):
            penalty += (((chunk == c).astype(np.float64) @ deg) / (2 * m)) ** 2
        q = internal - penalty
        j = int(np.argmax(q))
        if q[j] > best_q:
            best_q, best_row = float(q[j]), chunk[j]
    p = Partition.from_labels(g.vertices, best_row)
    return p, modularity(g, p)
