"""Realizing community sequences and pairing their half-edges.

Half-edges are numbered globally: community by community, vertex by vertex
within a community, and slot by slot within a vertex.  A half-edge is thus
identified equally well by its global index or by the triple
``(community, vertex, slot)``.

Randomness
----------
Every random routine takes ``seed``: anything accepted by
:func:`numpy.random.default_rng`.  Independent streams for replicas are
derived with :func:`rng_stream`, which spawns a child of
``SeedSequence(master)`` keyed by integers (replica index, n index, ...).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .community import Community, CommunityDistribution, CommunityError


def rng_stream(master: int, *keys: int) -> np.random.Generator:
    """Generator for the stream ``keys`` below the 64-bit ``master`` seed."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(ss)


def _pad(rows: Sequence[Sequence[int]], fill=0, width=None) -> np.ndarray:
    width = max([len(r) for r in rows] + [0]) if width is None else width
    out = np.full((len(rows), max(width, 1)), fill, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, :len(r)] = r
    return out


@dataclass(frozen=True, eq=False)
class CommunitySequence:
    """Ordered communities, stored as distinct shapes plus a shape index per community."""

    shapes: tuple[Community, ...]
    shape_index: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        idx = np.asarray(self.shape_index, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= len(self.shapes)):
            raise ValueError("shape index out of range")
        idx.setflags(write=False)
        object.__setattr__(self, "shape_index", idx)

    @classmethod
    def from_communities(cls, communities: Sequence[Community], metadata=None) -> "CommunitySequence":
        lookup: dict[Community, int] = {}
        idx = np.empty(len(communities), dtype=np.int64)
        for i, c in enumerate(communities):
            idx[i] = lookup.setdefault(c, len(lookup))
        return cls(tuple(lookup), idx, dict(metadata or {}))

    def __len__(self):
        return len(self.shape_index)

    def __getitem__(self, i) -> Community:
        return self.shapes[self.shape_index[i]]

    @property
    def communities(self) -> list[Community]:
        return [self.shapes[j] for j in self.shape_index]

    @property
    def n(self) -> int:
        return len(self.shape_index)

    @cached_property
    def _shape_degree(self) -> np.ndarray:
        return np.array([c.degree for c in self.shapes], dtype=np.int64)

    @cached_property
    def degrees(self) -> np.ndarray:
        return self._shape_degree[self.shape_index]

    @cached_property
    def vertex_counts(self) -> np.ndarray:
        return np.array([c.vertex_count for c in self.shapes], dtype=np.int64)[self.shape_index]

    @cached_property
    def sizes(self) -> np.ndarray:
        """Community sizes (vertex counts unless a size weight overrides them)."""
        return np.array([c.size for c in self.shapes], dtype=float)[self.shape_index]

    @cached_property
    def internal_surplus(self) -> np.ndarray:
        return np.array([c.surplus for c in self.shapes], dtype=np.int64)[self.shape_index]

    @property
    def ell(self) -> int:
        return int(self.degrees.sum())

    @property
    def N(self) -> int:
        return int(self.vertex_counts.sum())

    @property
    def s_max(self) -> int:
        return int(self.vertex_counts.max()) if self.n else 0

    @property
    def d_max(self) -> int:
        return int(self.degrees.max()) if self.n else 0

    @cached_property
    def he_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.degrees)])

    @cached_property
    def vertex_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.vertex_counts)])

    @cached_property
    def he_community(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), self.degrees)

    def _he_tables(self):
        verts, slots = [], []
        for c in self.shapes:
            v = np.repeat(np.arange(c.vertex_count), c.out_degrees)
            verts.append(v)
            slots.append(np.concatenate([np.arange(d) for d in c.out_degrees]) if c.vertex_count else [])
        return _pad(verts), _pad(slots)

    @cached_property
    def _he_local(self):
        vt, st = self._he_tables()
        rank = np.arange(self.ell) - self.he_offsets[self.he_community]
        sh = self.shape_index[self.he_community]
        return vt[sh, rank], st[sh, rank]

    @property
    def he_vertex(self) -> np.ndarray:
        """Local vertex label of each half-edge."""
        return self._he_local[0]

    @property
    def he_slot(self) -> np.ndarray:
        return self._he_local[1]

    @cached_property
    def he_global_vertex(self) -> np.ndarray:
        return self.vertex_offsets[self.he_community] + self.he_vertex

    def half_edge_index(self, community: int, vertex: int, slot: int) -> int:
        c = self[community]
        if not (0 <= vertex < c.vertex_count and 0 <= slot < c.out_degrees[vertex]):
            raise IndexError(f"no half-edge ({community}, {vertex}, {slot})")
        return int(self.he_offsets[community] + sum(c.out_degrees[:vertex]) + slot)

    @cached_property
    def internal_edges(self) -> np.ndarray:
        """Internal edges on global vertex labels, in community order."""
        parts, owners = [], []
        for j, c in enumerate(self.shapes):
            if not c.edges:
                continue
            members = np.flatnonzero(self.shape_index == j)
            if not members.size:
                continue
            e = np.asarray(c.edges, dtype=np.int64)
            parts.append((self.vertex_offsets[members][:, None, None] + e[None]).reshape(-1, 2))
            owners.append(np.repeat(members, len(c.edges)))
        if not parts:
            return np.empty((0, 2), dtype=np.int64)
        edges, own = np.concatenate(parts), np.concatenate(owners)
        return edges[np.argsort(own, kind="stable")]

    @cached_property
    def vertex_community(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), self.vertex_counts)

    def same_as(self, other: "CommunitySequence") -> bool:
        return self.communities == other.communities


def _largest_remainder(weights: np.ndarray, n: int) -> np.ndarray:
    raw = weights * n
    counts = np.floor(raw).astype(np.int64)
    rest = n - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:rest]] += 1
    return counts


def realize_sequence(dist: CommunityDistribution, n: int, seed=None, mode: str = "iid") -> CommunitySequence:
    """Draw ``n`` communities from ``dist``.

    ``mode="iid"`` samples independently; ``mode="exact"`` uses the exact
    proportional counts (largest-remainder rounding, or the distribution's own
    counts when they sum to ``n``) in catalog order.  An odd half-edge total
    is fixed by adding one half-edge to a uniformly chosen vertex that already
    has one; the fix is recorded in ``metadata["parity_fix"]``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if not dist.entries:
        raise CommunityError("empty distribution")
    rng = np.random.default_rng(seed)
    shapes = tuple(dist.communities)
    w = dist.weights
    if mode == "iid":
        idx = rng.choice(len(shapes), size=n, p=w / w.sum())
    elif mode == "exact":
        if dist.counts is not None and sum(dist.counts) == n:
            counts = np.asarray(dist.counts)
        else:
            counts = _largest_remainder(w / w.sum(), n)
        idx = np.repeat(np.arange(len(shapes)), counts)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    seq = CommunitySequence(shapes, idx, {"mode": mode})
    if seq.ell % 2 == 0:
        return seq

    # parity fix-up: one extra half-edge on a uniform vertex with d_v >= 1
    carriers = np.array([sum(d > 0 for d in c.out_degrees) for c in shapes])[idx]
    i = int(rng.choice(n, p=carriers / carriers.sum()))
    comm = shapes[idx[i]]
    candidates = [v for v, d in enumerate(comm.out_degrees) if d > 0]
    v = candidates[int(rng.integers(len(candidates)))]
    outd = list(comm.out_degrees)
    outd[v] += 1
    fixed = comm.with_out_degrees(outd)
    new_shapes = shapes + (fixed,)
    new_idx = idx.copy()
    new_idx[i] = len(shapes)
    return CommunitySequence(new_shapes, new_idx, {"mode": mode, "parity_fix": (i, v)})


@dataclass(frozen=True, eq=False)
class Pairing:
    """Perfect matching of half-edges: ``partner[a]`` is the half-edge paired with ``a``."""

    partner: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.partner, dtype=np.int64)
        p.setflags(write=False)
        object.__setattr__(self, "partner", p)

    def validate(self, ell: int | None = None) -> None:
        p = self.partner
        if ell is not None and len(p) != ell:
            raise ValueError(f"pairing covers {len(p)} half-edges, sequence has {ell}")
        if len(p) == 0:
            return
        if p.min() < 0 or p.max() >= len(p):
            raise ValueError("pairing references out-of-range half-edges")
        idx = np.arange(len(p))
        if np.any(p == idx):
            raise ValueError("pairing has a fixed point")
        if np.any(p[p] != idx):
            raise ValueError("pairing is not an involution")

    def pairs(self) -> np.ndarray:
        a = np.flatnonzero(self.partner > np.arange(len(self.partner)))
        return np.column_stack([a, self.partner[a]])


def pair_half_edges(seq: CommunitySequence, seed=None) -> Pairing:
    """Uniform perfect matching: shuffle the half-edges and pair consecutive entries."""
    ell = seq.ell
    if ell % 2:
        raise ValueError(f"odd number of half-edges ({ell})")
    perm = np.random.default_rng(seed).permutation(ell)
    partner = np.empty(ell, dtype=np.int64)
    partner[perm[0::2]] = perm[1::2]
    partner[perm[1::2]] = perm[0::2]
    return Pairing(partner)


@dataclass(frozen=True, eq=False)
class HCMGraph:
    """Two-level graph: communities joined by a pairing of their half-edges.

    The vertex graph is a multigraph; a pairing may create self-loops and
    parallel edges, and they are kept.
    """

    sequence: CommunitySequence
    pairing: Pairing

    @property
    def n(self) -> int:
        return self.sequence.n

    @property
    def N(self) -> int:
        return self.sequence.N

    @property
    def ell(self) -> int:
        return self.sequence.ell

    @property
    def partner(self) -> np.ndarray:
        return self.pairing.partner

    @cached_property
    def inter_edges(self) -> np.ndarray:
        """Paired half-edges ``(a, partner[a])`` with ``a < partner[a]``."""
        return self.pairing.pairs()

    @cached_property
    def vertex_edges(self) -> np.ndarray:
        gv = self.sequence.he_global_vertex
        inter = gv[self.inter_edges] if self.ell else np.empty((0, 2), dtype=np.int64)
        return np.concatenate([self.sequence.internal_edges, inter.reshape(-1, 2)])

    @cached_property
    def community_edges(self) -> np.ndarray:
        hc = self.sequence.he_community
        return hc[self.inter_edges].reshape(-1, 2)

    def vertex_degrees(self) -> np.ndarray:
        e = self.vertex_edges
        return np.bincount(e.ravel(), minlength=self.N)

    def community_degrees(self) -> np.ndarray:
        return np.bincount(self.community_edges.ravel(), minlength=self.n)


def build_graph(seq: CommunitySequence, pairing: Pairing) -> HCMGraph:
    pairing.validate(seq.ell)
    return HCMGraph(seq, pairing)


def generate(dist: CommunityDistribution, n: int, seed=None, mode: str = "iid") -> HCMGraph:
    """Sequence, pairing and graph from one seed (two child streams)."""
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    s_seq, s_pair = ss.spawn(2)
    seq = realize_sequence(dist, n, s_seq, mode=mode)
    return build_graph(seq, pair_half_edges(seq, s_pair))


def configuration_model(degrees: Sequence[int], seed=None) -> np.ndarray:
    """Plain configuration model: edge list from a shuffled stub list.

    Uses the same shuffle-and-pair convention as :func:`pair_half_edges`, so a
    sequence of single-vertex communities yields the same multigraph for the
    same seed.
    """
    degrees = np.asarray(degrees, dtype=np.int64)
    stubs = np.repeat(np.arange(len(degrees)), degrees)
    if len(stubs) % 2:
        raise ValueError("degree sum must be even")
    perm = np.random.default_rng(seed).permutation(len(stubs))
    return stubs[perm].reshape(-1, 2)


# ---------------------------------------------------------------------------
# text serialization

def serialize_graph(g: HCMGraph) -> str:
    """Header ``n N ell``, one line per community, then one line per pair.

    Community lines read ``s d | out-degrees | u v u v ...``; pair lines give
    the two half-edges as ``community vertex slot`` triples.
    """
    seq = g.sequence
    out = ["# hcm-graph v1", f"{seq.n} {seq.N} {seq.ell}", "communities"]
    cache = {}
    for j in seq.shape_index:
        if j not in cache:
            c = seq.shapes[j]
            edges = " ".join(f"{u} {v}" for u, v in c.edges)
            cache[j] = f"{c.vertex_count} {c.degree} | {' '.join(map(str, c.out_degrees))} | {edges}".rstrip()
        out.append(cache[j])
    out.append("pairing")
    hc, hv, hs = seq.he_community, seq.he_vertex, seq.he_slot
    for a, b in g.inter_edges:
        out.append(f"{hc[a]} {hv[a]} {hs[a]} {hc[b]} {hv[b]} {hs[b]}")
    return "\n".join(out) + "\n"


def parse_graph(text: str) -> HCMGraph:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    n, N, ell = map(int, lines[0].split())
    if lines[1] != "communities":
        raise ValueError("expected 'communities' section")
    comms = []
    for ln in lines[2:2 + n]:
        head, outd, edges = (part.split() for part in ln.split("|"))
        s = int(head[0])
        ev = list(map(int, edges))
        comms.append(Community(s, tuple(zip(ev[0::2], ev[1::2])), tuple(map(int, outd))))
    seq = CommunitySequence.from_communities(comms)
    if seq.N != N or seq.ell != ell:
        raise ValueError("header does not match community table")
    if lines[2 + n] != "pairing":
        raise ValueError("expected 'pairing' section")
    partner = np.full(ell, -1, dtype=np.int64)
    for ln in lines[3 + n:]:
        c1, v1, k1, c2, v2, k2 = map(int, ln.split())
        a = seq.half_edge_index(c1, v1, k1)
        b = seq.half_edge_index(c2, v2, k2)
        partner[a], partner[b] = b, a
    return build_graph(seq, Pairing(partner))


def write_graph(g: HCMGraph, path) -> None:
    Path(path).write_text(serialize_graph(g))


def read_graph(path) -> HCMGraph:
    return parse_graph(Path(path).read_text())
