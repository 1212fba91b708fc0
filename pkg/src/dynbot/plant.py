"""Synthetic benchmark: background traffic, churning P2P overlay, planting.

Background node ``i`` is named ``h{i}``. Bots that are not mapped onto a
background node get names from the reserved ``ext:`` namespace, which no
background id can take.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from dynbot.timegraph import (NodeIndex, Scheme, SliceGraph, TimeConfig, WindowGraph,
                              canonical_edges)

EXTERNAL_PREFIX = "ext:"


class PlantError(ValueError):
    pass


@dataclass(frozen=True)
class BackgroundModel:
    n_nodes: int = 5000
    edges_per_slice: int = 8000
    degree_exponent: float = 2.2
    always_active_fraction: float = 0.2
    n_slices: int = 96
    rng_seed: int = 0
    n_groups: int = 1
    mixing: float = 0.1
    clients_from_core: bool = False
    n_contacts: int = 0
    persistence: float = 0.0

    def __post_init__(self):
        if not 1 <= self.n_groups <= self.n_nodes:
            raise PlantError("n_groups must be in [1, n_nodes]")
        if not 0 <= self.mixing <= 1:
            raise PlantError("mixing must be in [0, 1]")
        if self.n_contacts < 0:
            raise PlantError("n_contacts must be >= 0")
        if not 0 <= self.persistence <= 1 or (self.persistence > 0 and self.n_contacts == 0):
            raise PlantError("persistence must be in [0, 1] and needs n_contacts >= 1")
        if self.n_nodes < 2:
            raise PlantError("n_nodes must be >= 2")
        if self.edges_per_slice < 1:
            raise PlantError("edges_per_slice must be >= 1")
        if not 0 < self.always_active_fraction <= 1:
            raise PlantError("always_active_fraction must be in (0, 1]")
        if not self.degree_exponent > 1:
            raise PlantError("degree_exponent must be > 1")
        if self.n_slices < 1:
            raise PlantError("n_slices must be >= 1")

    @property
    def core_size(self) -> int:
        return math.ceil(self.always_active_fraction * self.n_nodes)


@dataclass(frozen=True)
class BotnetModel:
    n_bots: int = 500
    degree: int = 8
    churn_leave_prob: float = 0.05
    churn_join_prob: float = 0.2
    n_windows: int = 24
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_bots < 2:
            raise PlantError("n_bots must be >= 2")
        if self.degree < 1:
            raise PlantError("degree must be >= 1")
        for p in (self.churn_leave_prob, self.churn_join_prob):
            if not 0 <= p <= 1:
                raise PlantError("churn probabilities must be in [0, 1]")
        if self.n_windows < 1:
            raise PlantError("n_windows must be >= 1")


class ScenarioKind(str, Enum):
    ALL_MAPPED = "all_mapped"
    MONITORED = "monitored"


class Replication(str, Enum):
    ALL_SLICES = "all"
    ONE_SLICE = "one"


@dataclass(frozen=True)
class PlantScenario:
    kind: ScenarioKind = ScenarioKind.ALL_MAPPED
    monitored_fraction: float = 0.5
    rng_seed: int = 0
    replication: Replication = Replication.ALL_SLICES

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        object.__setattr__(self, "replication", Replication(self.replication))
        if not 0 < self.monitored_fraction <= 1:
            raise PlantError("monitored_fraction must be in (0, 1]")


def background_nodes(n_nodes: int) -> NodeIndex:
    return NodeIndex(f"h{i}" for i in range(n_nodes))


def _fitness(n: int, exponent: float, rng: np.random.Generator) -> np.ndarray:
    # Chung-Lu style expected degrees, randomly assigned to node ids
    w = np.arange(1, n + 1, dtype=np.float64) ** (-1.0 / (exponent - 1.0))
    w = w[rng.permutation(n)]
    return w / w.sum()


class _EndpointSampler:
    """Degree-biased endpoint sampling with group locality.

    Groups are contiguous, near-equal id blocks. A partner is drawn
    from the first endpoint's group, or from all nodes with prob ``mixing``.
    """

    def __init__(self, model: "BackgroundModel", rng: np.random.Generator):
        n = model.n_nodes
        self.n = n
        self.mixing = model.mixing
        self.cdf = np.cumsum(_fitness(n, model.degree_exponent, rng))
        self.cdf[-1] = 1.0
        g = model.n_groups
        sizes = np.full(g, n // g, dtype=np.int64)
        sizes[: n % g] += 1
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        self.group = np.repeat(np.arange(g), sizes)
        padded = np.concatenate([[0.0], self.cdf])
        self.lo = padded[bounds[:-1]]
        self.hi = padded[bounds[1:]]
        self.persistence = model.persistence
        self.contacts = None
        if model.n_contacts:
            a = np.repeat(np.arange(n), model.n_contacts)
            self.contacts = self._fresh(rng, a).reshape(n, model.n_contacts)

    def set_core(self, core, from_core):
        self.core = core
        self.from_core = from_core
        w = np.diff(np.concatenate([[0.0], self.cdf]))[core]
        self.core_cdf = np.cumsum(w / w.sum())
        self.core_cdf[-1] = 1.0

    def first(self, rng, k):
        if self.from_core:
            return self.core[np.minimum(np.searchsorted(self.core_cdf, rng.random(k), side="right"), len(self.core) - 1)]
        # client side: uniform over nodes
        return rng.integers(0, self.n, size=k)

    def partner(self, rng, a):
        b = self._fresh(rng, a)
        if self.contacts is not None:
            k = self.contacts.shape[1]
            pick = self.contacts[a, rng.integers(0, k, size=len(a))]
            b = np.where(rng.random(len(a)) < self.persistence, pick, b)
        return b

    def _fresh(self, rng, a):
        k = len(a)
        r = rng.random(k)
        g = self.group[a]
        local = self.lo[g] + r * (self.hi[g] - self.lo[g])
        x = np.where(rng.random(k) < self.mixing, r, local)
        b = np.minimum(np.searchsorted(self.cdf, x, side="right"), self.n - 1)
        return b


def gen_background(model: BackgroundModel) -> list[SliceGraph]:
    """Per-slice degree-biased random graphs with an always-active core.

    Every core node gets one edge to a degree-biased partner in each slice;
    the rest of the slice's ``edges_per_slice`` distinct edges join two
    degree-biased endpoints.
    """
    n = model.n_nodes
    if model.core_size > model.edges_per_slice:
        raise PlantError(f"always-active core of {model.core_size} nodes cannot be covered "
                         f"by {model.edges_per_slice} edges per slice")
    max_edges = n * (n - 1) // 2
    if model.edges_per_slice > max_edges:
        raise PlantError(f"{model.edges_per_slice} edges do not fit on {n} nodes")
    rng = np.random.default_rng(model.rng_seed)
    sampler = _EndpointSampler(model, rng)
    core = np.sort(rng.choice(n, size=model.core_size, replace=False))
    sampler.set_core(core, model.clients_from_core)
    slices = []
    for s in range(model.n_slices):
        partner = sampler.partner(rng, core)
        partner = np.where(partner == core, (partner + 1) % n, partner)
        lo, hi = np.minimum(core, partner), np.maximum(core, partner)
        keys = lo * n + hi
        _, first = np.unique(keys, return_index=True)
        keys = keys[np.sort(first)]
        while len(keys) < model.edges_per_slice:
            need = model.edges_per_slice - len(keys)
            a = sampler.first(rng, int(need * 1.2) + 16)
            b = sampler.partner(rng, a)
            ok = a != b
            extra = np.minimum(a[ok], b[ok]) * n + np.maximum(a[ok], b[ok])
            allk = np.concatenate([keys, extra])
            _, first = np.unique(allk, return_index=True)
            keys = allk[np.sort(first)][:model.edges_per_slice]
        slices.append(SliceGraph(*canonical_edges(keys // n, keys % n), slice_index=s))
    return slices


def always_active_nodes(slices: Sequence[SliceGraph]) -> set[int]:
    """Nodes with at least one incident edge in every slice."""
    if not slices:
        raise ValueError("need at least one slice")
    active = None
    for s in slices:
        ends = set(np.concatenate([s.u, s.v]).tolist())
        active = ends if active is None else active & ends
        if not active:
            break
    return active


def _components(n, u, v):
    g = csr_matrix((np.ones(len(u)), (u, v)), shape=(n, n))
    return connected_components(g, directed=False)


def _overlay_edges(active: np.ndarray, keep: set, degree: int, rng) -> set:
    """Top up ``keep`` (edges among ``active``) to near-regular degree, then connect."""
    pos = {b: i for i, b in enumerate(active.tolist())}
    deg = np.zeros(len(active), dtype=np.int64)
    for a, b in keep:
        deg[pos[a]] += 1
        deg[pos[b]] += 1
    edges = set(keep)
    stubs = np.repeat(active, np.maximum(degree - deg, 0))
    for _ in range(4):
        if len(stubs) < 2:
            break
        stubs = stubs[rng.permutation(len(stubs))]
        left = []
        for a, b in zip(stubs[0::2].tolist(), stubs[1::2].tolist()):
            e = (min(a, b), max(a, b))
            if a == b or e in edges:
                left.extend((a, b))
            else:
                edges.add(e)
        if len(stubs) % 2:
            left.append(int(stubs[-1]))
        stubs = np.asarray(left, dtype=np.int64)
    # link every minor component to the largest one
    if edges:
        eu = np.array([pos[a] for a, _ in edges])
        ev = np.array([pos[b] for _, b in edges])
    else:
        eu = ev = np.zeros(0, dtype=np.int64)
    n_comp, comp = _components(len(active), eu, ev)
    if n_comp > 1:
        giant = np.bincount(comp).argmax()
        giant_members = active[comp == giant]
        for c in range(n_comp):
            if c == giant:
                continue
            a = int(rng.choice(active[comp == c]))
            b = int(rng.choice(giant_members))
            edges.add((min(a, b), max(a, b)))
    return edges


def gen_botnet(model: BotnetModel) -> list[WindowGraph]:
    """Per-window overlay graphs over bot ids ``0..n_bots-1`` with churn.

    Edges between bots that stay active persist into the next window; new and
    under-connected bots are topped up to ``degree`` by random stub matching,
    and any disconnected pieces are linked to the largest component.
    """
    if model.degree >= model.n_bots:
        raise PlantError(f"degree {model.degree} >= {model.n_bots} bots")
    rng = np.random.default_rng(model.rng_seed)
    is_active = np.ones(model.n_bots, dtype=bool)
    edges: set = set()
    out = []
    for w in range(model.n_windows):
        if w > 0:
            r = rng.random(model.n_bots)
            leave = is_active & (r < model.churn_leave_prob)
            join = ~is_active & (r < model.churn_join_prob)
            nxt = (is_active & ~leave) | join
            if nxt.sum() < 2:
                # keep at least two bots alive
                nxt[np.flatnonzero(is_active)[:2]] = True
            is_active = nxt
        active = np.flatnonzero(is_active)
        if model.degree >= len(active):
            raise PlantError(f"degree {model.degree} >= {len(active)} active bots in window {w}")
        edges = {e for e in edges if is_active[e[0]] and is_active[e[1]]}
        edges = _overlay_edges(active, edges, model.degree, rng)
        ordered = sorted(edges)
        u = np.array([a for a, _ in ordered], dtype=np.int64)
        v = np.array([b for _, b in ordered], dtype=np.int64)
        out.append(WindowGraph(active, u, v, np.ones(len(u)), window_index=w,
                               scheme=Scheme.SNAPSHOT))
    return out


@dataclass
class GroundTruth:
    """True bot nodes by slice, window and frame, plus the bot -> node mapping."""

    mapping: dict[int, int]
    monitored: list[int]
    bot_nodes_per_slice: list[set[int]]
    window_length: int
    bot_nodes_per_window: list[set[int]] = field(default_factory=list)
    bot_nodes_frame: set[int] = field(default_factory=set)

    def __post_init__(self):
        if not self.bot_nodes_per_window:
            self.bot_nodes_per_window = self.per_window(self.window_length)
        if not self.bot_nodes_frame:
            self.bot_nodes_frame = set().union(*self.bot_nodes_per_slice)

    def per_window(self, window_length: int) -> list[set[int]]:
        n = len(self.bot_nodes_per_slice)
        if n % window_length:
            raise ValueError(f"window_length {window_length} does not divide {n} slices")
        return [set().union(*self.bot_nodes_per_slice[i:i + window_length])
                for i in range(0, n, window_length)]

    def to_json(self, nodes: NodeIndex) -> dict:
        names = nodes.names
        return {
            "mapping": {str(b): names[x] for b, x in sorted(self.mapping.items())},
            "monitored": sorted(self.monitored),
            "window_length": self.window_length,
            "per_slice": [sorted(names[x] for x in s) for s in self.bot_nodes_per_slice],
            "per_window": [sorted(names[x] for x in s) for s in self.bot_nodes_per_window],
            "frame": sorted(names[x] for x in self.bot_nodes_frame),
        }

    @classmethod
    def from_json(cls, d: dict, nodes: NodeIndex) -> "GroundTruth":
        return cls(
            mapping={int(b): nodes.intern(x) for b, x in d["mapping"].items()},
            monitored=list(d["monitored"]),
            bot_nodes_per_slice=[{nodes.intern(x) for x in s} for s in d["per_slice"]],
            window_length=d["window_length"],
            bot_nodes_per_window=[{nodes.intern(x) for x in s} for s in d["per_window"]],
            bot_nodes_frame={nodes.intern(x) for x in d["frame"]},
        )


@dataclass
class PlantResult:
    slices: list[SliceGraph]
    truth: GroundTruth
    nodes: NodeIndex


def plant(background: Sequence[SliceGraph], bots: Sequence[WindowGraph],
          scenario: PlantScenario, cfg: TimeConfig, nodes: NodeIndex) -> PlantResult:
    """Merge per-window bot overlays into background slices.

    ``cfg.window_length`` is the overlay's window granularity: window ``w``'s
    visible bot edges are copied into its slices (all of them, or one random
    slice, per ``scenario.replication``). Colliding edges keep weight 1.
    """
    if len(background) != cfg.n_slices:
        raise PlantError(f"expected {cfg.n_slices} background slices, got {len(background)}")
    if len(bots) != cfg.n_windows:
        raise PlantError(f"expected {cfg.n_windows} bot windows, got {len(bots)}")
    rng = np.random.default_rng(scenario.rng_seed)
    all_bots = np.unique(np.concatenate([b.vertices for b in bots]))
    hosts = np.array(sorted(always_active_nodes(background)), dtype=np.int64)

    if scenario.kind is ScenarioKind.ALL_MAPPED:
        monitored = all_bots
    else:
        k = math.ceil(scenario.monitored_fraction * len(all_bots))
        monitored = np.sort(rng.choice(all_bots, size=k, replace=False))
    if len(monitored) > len(hosts):
        raise PlantError(f"{len(monitored)} bots to map but only {len(hosts)} always-active nodes")
    targets = rng.choice(hosts, size=len(monitored), replace=False)
    nodes = NodeIndex(nodes.names)
    mapping = dict(zip(monitored.tolist(), targets.tolist()))
    for b in all_bots.tolist():
        if b not in mapping:
            mapping[b] = nodes.intern(f"{EXTERNAL_PREFIX}bot{b}")
    is_mon = np.zeros(int(all_bots.max()) + 1, dtype=bool)
    is_mon[monitored] = True

    lut = np.zeros(len(is_mon), dtype=np.int64)
    for b, x in mapping.items():
        lut[b] = x
    merged = list(background)
    truth_slices: list[set[int]] = [set() for _ in range(cfg.n_slices)]
    for bw in bots:
        vis = is_mon[bw.u] | is_mon[bw.v]
        pu, pv = lut[bw.u[vis]], lut[bw.v[vis]]
        targets_s = list(cfg.window_slices(bw.window_index))
        if scenario.replication is Replication.ONE_SLICE:
            targets_s = [targets_s[int(rng.integers(len(targets_s)))]]
        ends = set(np.concatenate([pu, pv]).tolist())
        for s in targets_s:
            bg = merged[s]
            merged[s] = SliceGraph(*canonical_edges(
                np.concatenate([bg.u, pu]), np.concatenate([bg.v, pv]),
                np.concatenate([bg.weight, np.ones(len(pu))]),
                vertices=bg.vertices, combine="max"), slice_index=s)
            truth_slices[s] |= ends
    truth = GroundTruth(mapping=mapping, monitored=monitored.tolist(),
                        bot_nodes_per_slice=truth_slices, window_length=cfg.window_length)
    return PlantResult(merged, truth, nodes)


# -- overlay interchange ---------------------------------------------------

def write_bot_windows(directory: str | Path, bots: Sequence[WindowGraph]) -> None:
    """One ``window,u,v`` CSV per window, bot ids as plain integers."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for bw in bots:
        rows = ["window,u,v"] + [f"{bw.window_index},{a},{b}"
                                 for a, b in zip(bw.u.tolist(), bw.v.tolist())]
        (d / f"window_{bw.window_index:04d}.csv").write_text("\n".join(rows) + "\n")
    active = {str(bw.window_index): bw.vertices.tolist() for bw in bots}
    (d / "active.json").write_text(json.dumps({"n_windows": len(bots), "active": active}) + "\n")


def read_bot_windows(directory: str | Path) -> list[WindowGraph]:
    """Read overlay windows; bot ids may be arbitrary strings in user data."""
    d = Path(directory)
    meta_path = d / "active.json"
    files = sorted(d.glob("window_*.csv"))
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else None
    ids = NodeIndex()
    raw = []
    for f in files:
        lines = f.read_text().splitlines()
        if not lines or lines[0].strip() != "window,u,v":
            raise PlantError(f"{f}: expected header 'window,u,v'")
        rows = [ln.split(",") for ln in lines[1:] if ln.strip()]
        raw.append(rows)
    numeric = all(x.strip().isdigit() for rows in raw for r in rows for x in r[1:3])
    if meta is not None:
        numeric = numeric and all(str(x).isdigit() for a in meta["active"].values() for x in a)

    def key(x):
        return int(x) if numeric else ids.intern(x.strip())

    out = []
    for f, rows in zip(files, raw):
        w = int(f.stem.split("_")[1])
        u = [key(r[1]) for r in rows]
        v = [key(r[2]) for r in rows]
        extra = [key(str(x)) for x in meta["active"][str(w)]] if meta else None
        verts, cu, cv, _ = canonical_edges(u, v, vertices=extra)
        out.append(WindowGraph(verts, cu, cv, np.ones(len(cu)), window_index=w,
                               scheme=Scheme.SNAPSHOT))
    return out


def model_dict(obj) -> dict:
    d = asdict(obj)
    return {k: (v.value if isinstance(v, Enum) else v) for k, v in d.items()}
