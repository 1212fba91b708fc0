"""Discrete time model and slice/window graph construction.

Node identifiers are opaque strings (anonymised addresses, host names). They
are interned once per frame into dense integer indices by :class:`NodeIndex`;
every graph in this package stores integer indices only.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np


class ConfigError(ValueError):
    """Invalid configuration values."""


class FlowFormatError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class Scheme(str, Enum):
    SNAPSHOT = "snapshot"
    COMPOSITE = "composite"
    REINFORCED = "reinforced"


@dataclass(frozen=True)
class TimeConfig:
    t0: int = 0
    slice_duration: float = 900.0
    window_length: int = 4
    frame_length: int = 24

    def __post_init__(self):
        if not self.slice_duration > 0:
            raise ConfigError(f"slice_duration must be > 0, got {self.slice_duration}")
        if self.window_length < 1:
            raise ConfigError(f"window_length must be >= 1, got {self.window_length}")
        if self.frame_length < 1:
            raise ConfigError(f"frame_length must be >= 1, got {self.frame_length}")

    @property
    def n_slices(self) -> int:
        return self.window_length * self.frame_length

    @property
    def n_windows(self) -> int:
        return self.frame_length

    @property
    def end(self) -> float:
        return self.t0 + self.slice_duration * self.n_slices

    def slice_of(self, ts: float) -> int:
        return math.floor((ts - self.t0) / self.slice_duration)

    def window_of(self, slice_index: int) -> int:
        return slice_index // self.window_length

    def window_slices(self, window_index: int) -> range:
        start = window_index * self.window_length
        return range(start, start + self.window_length)

    def with_window_length(self, window_length: int) -> "TimeConfig":
        """Same frame horizon re-cut into windows of ``window_length`` slices."""
        if self.n_slices % window_length:
            raise ConfigError(
                f"window_length {window_length} does not divide {self.n_slices} slices")
        return TimeConfig(self.t0, self.slice_duration, window_length,
                          self.n_slices // window_length)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TimeConfig":
        return cls(**d)


@dataclass(frozen=True)
class FlowRecord:
    src: str
    dst: str
    timestamp: float


class NodeIndex:
    """Bidirectional string <-> dense integer map, append-only."""

    def __init__(self, names: Iterable[str] = ()):
        self.names: list[str] = []
        self._ids: dict[str, int] = {}
        for name in names:
            self.intern(name)

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    def intern(self, name: str) -> int:
        idx = self._ids.get(name)
        if idx is None:
            idx = len(self.names)
            self._ids[name] = idx
            self.names.append(name)
        return idx

    def id_of(self, name: str) -> int:
        return self._ids[name]

    def name_of(self, idx: int) -> str:
        return self.names[idx]

    def to_names(self, ids: Iterable[int]) -> list[str]:
        return [self.names[i] for i in ids]


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Simple undirected weighted graph over integer node indices.

    Edges are stored canonically: ``u < v``, sorted by ``(u, v)``, one entry per
    unordered pair. ``vertices`` is sorted and contains every edge endpoint plus
    any isolated vertices.
    """

    vertices: np.ndarray
    u: np.ndarray
    v: np.ndarray
    weight: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.u)

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())

    def edge_dict(self) -> dict[tuple[int, int], float]:
        return {(int(a), int(b)): float(w) for a, b, w in zip(self.u, self.v, self.weight)}

    def edge_keys(self) -> set[tuple[int, int]]:
        return set(zip(self.u.tolist(), self.v.tolist()))

    def degree_of(self) -> dict[int, int]:
        """Unweighted degree of every vertex (isolated vertices map to 0)."""
        deg = dict.fromkeys(self.vertices.tolist(), 0)
        for a in np.concatenate([self.u, self.v]).tolist():
            deg[a] += 1
        return deg

    def same_as(self, other: "WeightedGraph") -> bool:
        return (np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.u, other.u)
                and np.array_equal(self.v, other.v)
                and np.array_equal(self.weight, other.weight))


def canonical_edges(u, v, weight=None, vertices=None, combine: str = "max"):
    """Collapse raw endpoint arrays into canonical simple-graph arrays.

    Self-loops are dropped. Parallel edges are merged with ``combine``
    (``"max"`` keeps presence semantics, ``"sum"`` adds weights).
    Returns ``(vertices, u, v, weight)``.
    """
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    w = np.ones(len(u)) if weight is None else np.asarray(weight, dtype=np.float64)
    keep = u != v
    u, v, w = u[keep], v[keep], w[keep]
    lo, hi = np.minimum(u, v), np.maximum(u, v)
    if len(lo):
        base = int(hi.max()) + 1
        keys = lo * base + hi
        uniq, inv = np.unique(keys, return_inverse=True)
        if combine == "sum":
            w = np.bincount(inv, weights=w, minlength=len(uniq))
        elif combine == "max":
            out = np.full(len(uniq), -np.inf)
            np.maximum.at(out, inv, w)
            w = out
        else:
            raise ValueError(f"unknown combine mode {combine!r}")
        lo, hi = uniq // base, uniq % base
    verts = np.concatenate([lo, hi])
    if vertices is not None:
        verts = np.concatenate([verts, np.asarray(vertices, dtype=np.int64)])
    return np.unique(verts), lo, hi, np.asarray(w, dtype=np.float64)


@dataclass(frozen=True, eq=False, kw_only=True)
class SliceGraph(WeightedGraph):
    slice_index: int

    @classmethod
    def from_edges(cls, slice_index: int, edges: Iterable[tuple], vertices=None,
                   combine: str = "max") -> "SliceGraph":
        u, v, w = _split_edges(edges)
        return cls(*canonical_edges(u, v, w, vertices, combine), slice_index=slice_index)

    @classmethod
    def empty(cls, slice_index: int) -> "SliceGraph":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, np.zeros(0), slice_index=slice_index)

    def with_weights(self, weight: np.ndarray) -> "SliceGraph":
        return SliceGraph(self.vertices, self.u, self.v,
                          np.asarray(weight, dtype=np.float64), slice_index=self.slice_index)


@dataclass(frozen=True, eq=False, kw_only=True)
class WindowGraph(WeightedGraph):
    window_index: int
    scheme: Scheme


def _split_edges(edges):
    edges = list(edges)
    if not edges:
        return [], [], None
    u = [e[0] for e in edges]
    v = [e[1] for e in edges]
    w = [e[2] if len(e) > 2 else 1.0 for e in edges]
    return u, v, w


@dataclass
class IngestResult:
    slices: list[SliceGraph]
    nodes: NodeIndex
    n_records: int = 0
    dropped_self_loops: int = 0
    dropped_out_of_range: int = 0
    errors: list[FlowFormatError] = field(default_factory=list)


def ingest_flows(records: Iterable[FlowRecord | tuple], cfg: TimeConfig,
                 nodes: NodeIndex | None = None) -> IngestResult:
    """Bucket flow records into one presence-weighted slice graph per slice.

    Records can arrive in any order. Repeated contacts between a pair inside
    one slice collapse to a single weight-1 edge; out-of-frame records and
    self-contacts are counted and dropped.
    """
    nodes = NodeIndex() if nodes is None else nodes
    n = cfg.n_slices
    bucket_u: list[list[int]] = [[] for _ in range(n)]
    bucket_v: list[list[int]] = [[] for _ in range(n)]
    res = IngestResult(slices=[], nodes=nodes)
    for rec in records:
        src, dst, ts = (rec.src, rec.dst, rec.timestamp) if isinstance(rec, FlowRecord) else rec
        res.n_records += 1
        if not cfg.t0 <= ts < cfg.end:
            res.dropped_out_of_range += 1
            continue
        if src == dst:
            res.dropped_self_loops += 1
            continue
        s = cfg.slice_of(ts)
        bucket_u[s].append(nodes.intern(src))
        bucket_v[s].append(nodes.intern(dst))
    for s in range(n):
        if bucket_u[s]:
            res.slices.append(SliceGraph(*canonical_edges(bucket_u[s], bucket_v[s]), slice_index=s))
        else:
            res.slices.append(SliceGraph.empty(s))
    return res


def _open_text(path: str | Path, mode: str = "rt"):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode, newline="")
    return open(path, mode, newline="")


def read_flows(path: str | Path, errors: list | None = None) -> Iterator[FlowRecord]:
    """Yield records from a ``src,dst,timestamp`` CSV (optionally gzipped).

    Malformed rows raise :class:`FlowFormatError`, unless an ``errors`` list is
    given, in which case they are appended there and skipped.
    """
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["src", "dst", "timestamp"]:
            raise FlowFormatError(1, "expected header 'src,dst,timestamp'")
        for lineno, row in enumerate(reader, start=2):
            try:
                yield _parse_flow(lineno, row)
            except FlowFormatError as exc:
                if errors is None:
                    raise
                errors.append(exc)


def _parse_flow(lineno: int, row: list[str]) -> FlowRecord:
    if len(row) < 3 or not row[0].strip() or not row[1].strip():
        raise FlowFormatError(lineno, f"missing field in {row!r}")
    raw = row[2].strip()
    try:
        ts = int(raw)
    except ValueError:
        try:
            ts = float(raw)
        except ValueError:
            raise FlowFormatError(lineno, f"unparseable timestamp {raw!r}") from None
        if not math.isfinite(ts):
            raise FlowFormatError(lineno, f"unparseable timestamp {raw!r}")
    return FlowRecord(row[0].strip(), row[1].strip(), ts)


def write_flows(path: str | Path, records: Iterable[FlowRecord]) -> None:
    with _open_text(path, "wt") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["src", "dst", "timestamp"])
        for r in records:
            w.writerow([r.src, r.dst, r.timestamp])


def _check_window(slices: Sequence[SliceGraph]) -> None:
    if len(slices) == 0:
        raise ValueError("window needs at least one slice")


def build_snapshot(slices: Sequence[SliceGraph], window_index: int = 0) -> WindowGraph:
    """Union of the slice graphs with all temporal weight erased."""
    _check_window(slices)
    verts, u, v, _ = canonical_edges(
        np.concatenate([s.u for s in slices]), np.concatenate([s.v for s in slices]),
        vertices=np.concatenate([s.vertices for s in slices]), combine="max")
    return WindowGraph(verts, u, v, np.ones(len(u)), window_index=window_index,
                       scheme=Scheme.SNAPSHOT)


def build_composite(slices: Sequence[SliceGraph], window_index: int = 0,
                    scheme: Scheme = Scheme.COMPOSITE) -> WindowGraph:
    """Union of the slice graphs; parallel edges merged by summing weights."""
    _check_window(slices)
    verts, u, v, w = canonical_edges(
        np.concatenate([s.u for s in slices]), np.concatenate([s.v for s in slices]),
        np.concatenate([s.weight for s in slices]),
        vertices=np.concatenate([s.vertices for s in slices]), combine="sum")
    keep = w > 0
    return WindowGraph(verts, u[keep], v[keep], w[keep], window_index=window_index,
                       scheme=scheme)


def split_windows(slices: Sequence[SliceGraph], cfg: TimeConfig) -> list[list[SliceGraph]]:
    if len(slices) != cfg.n_slices:
        raise ConfigError(f"expected {cfg.n_slices} slices, got {len(slices)}")
    return [[slices[i] for i in cfg.window_slices(w)] for w in range(cfg.n_windows)]


# -- edge-list interchange ---------------------------------------------------

def write_graph_csv(path: str | Path, g: WeightedGraph, nodes: NodeIndex) -> None:
    """Write ``u,v,weight`` rows using node names."""
    names = nodes.names
    buf = io.StringIO()
    buf.write("u,v,weight\n")
    for a, b, w in zip(g.u.tolist(), g.v.tolist(), g.weight.tolist()):
        buf.write(f"{names[a]},{names[b]},{format_weight(w)}\n")
    with _open_text(path, "wt") as fh:
        fh.write(buf.getvalue())


def format_weight(w: float) -> str:
    return str(int(w)) if float(w).is_integer() else format(w, ".10g")


def read_graph_csv(path: str | Path, nodes: NodeIndex) -> tuple[list[int], list[int], list[float]]:
    u, v, w = [], [], []
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["u", "v", "weight"]:
            raise FlowFormatError(1, f"expected header 'u,v,weight' in {path}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise FlowFormatError(lineno, f"bad edge row {row!r} in {path}")
            try:
                weight = float(row[2])
            except ValueError:
                raise FlowFormatError(lineno, f"bad weight {row[2]!r} in {path}") from None
            u.append(nodes.intern(row[0]))
            v.append(nodes.intern(row[1]))
            w.append(weight)
    return u, v, w


def write_slices(directory: str | Path, slices: Sequence[SliceGraph], nodes: NodeIndex,
                 cfg: TimeConfig) -> None:
    """Write one edge-list CSV per slice plus a ``graph.json`` sidecar."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for s in slices:
        write_graph_csv(d / f"slice_{s.slice_index:04d}.csv", s, nodes)
    sidecar = {"time": cfg.to_dict(), "kind": "slices", "n_slices": len(slices),
               "nodes": nodes.names}
    (d / "graph.json").write_text(json.dumps(sidecar, indent=1) + "\n")


def read_slices(directory: str | Path) -> tuple[list[SliceGraph], NodeIndex, TimeConfig]:
    d = Path(directory)
    meta = json.loads((d / "graph.json").read_text())
    nodes = NodeIndex(meta["nodes"])
    cfg = TimeConfig.from_dict(meta["time"])
    slices = []
    for i in range(meta["n_slices"]):
        u, v, w = read_graph_csv(d / f"slice_{i:04d}.csv", nodes)
        if u:
            slices.append(SliceGraph(*canonical_edges(u, v, w, combine="sum"), slice_index=i))
        else:
            slices.append(SliceGraph.empty(i))
    return slices, nodes, cfg


def write_window_graph(path: str | Path, g: WindowGraph, nodes: NodeIndex,
                       cfg: TimeConfig) -> None:
    """Edge list plus a JSON sidecar recording the construction scheme."""
    path = Path(path)
    write_graph_csv(path, g, nodes)
    sidecar = {"time": cfg.to_dict(), "kind": "window", "window_index": g.window_index,
               "scheme": g.scheme.value, "nodes": nodes.names}
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=1) + "\n")
