"""Bond percolation on the community model.

Two routes are provided.  The indirect one percolates inside communities,
explodes each surviving half-edge with probability ``1 - sqrt(pi)`` onto a
clone of its percolated community, re-pairs all half-edges uniformly and then
deletes the clones.  The direct one removes every edge of the vertex graph
independently and serves as ground truth.
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .community import Community, CommunityDistribution, _components
from .generator import CommunitySequence, HCMGraph, Pairing, build_graph, pair_half_edges


class Mode(str, Enum):
    S4 = "algorithm2_S4"
    S4_PRIME = "algorithm2_S4prime"
    DIRECT = "direct"


@dataclass(frozen=True)
class PercolationConfig:
    pi: float
    mode: Mode | str = Mode.S4
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.pi <= 1.0:
            raise ValueError(f"pi must lie in [0, 1], got {self.pi}")
        object.__setattr__(self, "mode", Mode(self.mode))


@dataclass
class Provenance:
    """Where each percolated piece came from.

    ``parent[j]`` is the original community of piece ``j``; ``vertex_map`` and
    ``he_map`` send new global vertex / half-edge labels to the old ones.
    """

    parent: np.ndarray
    vertex_map: np.ndarray
    he_map: np.ndarray


@dataclass
class ExplosionRecord:
    source: np.ndarray          # community (in the exploded sequence) that lost the half-edge
    source_he: np.ndarray       # half-edge label before explosion
    clone_index: np.ndarray     # index of the clone in the exploded sequence
    n_plus: Counter = field(default_factory=Counter)  # clones per clone shape
    n_bar: int = 0
    n_tilde: int = 0

    def __post_init__(self):
        if self.n_tilde != self.n_bar + sum(self.n_plus.values()):
            raise AssertionError("clone count does not add up")


# ---------------------------------------------------------------------------
# pieces of a percolated shape

_piece_cache: dict[tuple[Community, bytes], tuple[list[Community], np.ndarray]] = {}


def _pieces(shape: Community, kept: np.ndarray) -> tuple[list[Community], np.ndarray]:
    """Components of ``shape`` with only the ``kept`` edges.

    Pieces are ordered by their smallest vertex and keep vertices in
    increasing order; the second output lists the old vertex labels in the
    concatenated piece order.
    """
    key = (shape, np.packbits(kept).tobytes() + bytes([len(kept) % 8]))
    hit = _piece_cache.get(key)
    if hit is not None:
        return hit
    edges = [e for e, k in zip(shape.edges, kept) if k]
    roots = _components(shape.vertex_count, edges)
    groups: dict[int, list[int]] = {}
    for v, r in enumerate(roots):
        groups.setdefault(r, []).append(v)
    parts = sorted(groups.values(), key=lambda g: g[0])
    pieces = [shape.induced(p, edges) for p in parts]
    if shape.weight is not None:
        # split an overriding size weight proportionally to vertex counts
        pieces = [Community(p.vertex_count, p.edges, p.out_degrees,
                            shape.weight * p.vertex_count / shape.vertex_count) for p in pieces]
    out = (pieces, np.array([v for p in parts for v in p], dtype=np.int64))
    if len(_piece_cache) > 200_000:
        _piece_cache.clear()
    _piece_cache[key] = out
    return out


def _vertex_out_degrees(seq: CommunitySequence) -> np.ndarray:
    return np.bincount(seq.he_global_vertex, minlength=seq.N).astype(np.int64)


def _he_map_from_vertex_map(seq_old: CommunitySequence, vertex_map: np.ndarray) -> np.ndarray:
    """Half-edges follow their vertex; slots keep their order."""
    outd = _vertex_out_degrees(seq_old)
    start = np.concatenate([[0], np.cumsum(outd)])[:-1]
    new_outd = outd[vertex_map]
    total = int(new_outd.sum())
    owner = np.repeat(np.arange(len(vertex_map)), new_outd)
    slot = np.arange(total) - np.repeat(np.cumsum(new_outd) - new_outd, new_outd)
    return start[vertex_map[owner]] + slot


def _intra(seq: CommunitySequence, kept: np.ndarray) -> tuple[CommunitySequence, Provenance]:
    """Split every community along the ``kept`` mask over ``seq.internal_edges``."""
    n = seq.n
    n_edges = np.array([c.n_edges for c in seq.shapes], dtype=np.int64)[seq.shape_index]
    e_off = np.concatenate([[0], np.cumsum(n_edges)])
    lookup: dict[Community, int] = {}
    shapes: list[Community] = []

    def sid(c):
        j = lookup.get(c)
        if j is None:
            j = lookup[c] = len(shapes)
            shapes.append(c)
        return j

    n_pieces = np.ones(n, dtype=np.int64)
    classes = []
    vo = seq.vertex_offsets
    vertex_map = np.arange(seq.N, dtype=np.int64)
    for j, shape in enumerate(seq.shapes):
        members = np.flatnonzero(seq.shape_index == j)
        if not members.size:
            continue
        E = shape.n_edges
        if E == 0:
            classes.append((members, [sid(shape)]))
            continue
        rows = kept[e_off[members][:, None] + np.arange(E)]
        uniq, inv = np.unique(rows, axis=0, return_inverse=True)
        inv = inv.ravel()
        for u in range(len(uniq)):
            mem = members[inv == u]
            pieces, order = _pieces(shape, uniq[u])
            n_pieces[mem] = len(pieces)
            classes.append((mem, [sid(p) for p in pieces]))
            if not np.array_equal(order, np.arange(shape.vertex_count)):
                vertex_map[vo[mem][:, None] + np.arange(shape.vertex_count)] = vo[mem][:, None] + order
    p_off = np.concatenate([[0], np.cumsum(n_pieces)])
    new_index = np.empty(p_off[-1], dtype=np.int64)
    for mem, ids in classes:
        for k, s in enumerate(ids):
            new_index[p_off[mem] + k] = s
    parent = np.repeat(np.arange(n), n_pieces)
    new_seq = CommunitySequence(tuple(shapes), new_index, dict(seq.metadata))
    return new_seq, Provenance(parent, vertex_map, _he_map_from_vertex_map(seq, vertex_map))


def percolate_intra(seq: CommunitySequence, pi: float, seed=None) -> tuple[CommunitySequence, Provenance]:
    """Keep each internal edge with probability ``pi`` and split into pieces.

    Pieces of one community are consecutive, ordered by their smallest
    vertex, and carry the out-degrees of their vertices.
    """
    u = np.random.default_rng(seed).random(len(seq.internal_edges))
    return _intra(seq, u < pi)


# ---------------------------------------------------------------------------
# structural edits

def _concat(a: CommunitySequence, b_shapes: list[Community], b_index: np.ndarray) -> CommunitySequence:
    lookup = {c: i for i, c in enumerate(a.shapes)}
    shapes = list(a.shapes)
    remap = []
    for c in b_shapes:
        if c not in lookup:
            lookup[c] = len(shapes)
            shapes.append(c)
        remap.append(lookup[c])
    remap = np.asarray(remap, dtype=np.int64)
    idx = np.concatenate([a.shape_index, remap[b_index] if len(b_index) else b_index.astype(np.int64)])
    return CommunitySequence(tuple(shapes), idx, dict(a.metadata))


def remove_half_edges(seq: CommunitySequence, drop_he: np.ndarray, partner: np.ndarray | None = None,
                      drop_comm: np.ndarray | None = None):
    """Delete half-edges and whole communities, keeping everything else in order.

    With a ``partner`` array, a half-edge whose partner is removed is removed
    too, and the surviving pairing is returned relabelled.  Returns
    ``(sequence, partner or None, old_he_of_new)``.
    """
    drop = np.asarray(drop_he, dtype=bool).copy()
    if drop_comm is not None:
        drop_comm = np.asarray(drop_comm, dtype=bool)
        drop |= drop_comm[seq.he_community]
    if partner is not None:
        drop |= drop[partner]
    keep_he = ~drop
    gv = seq.he_global_vertex
    new_outd = np.bincount(gv[keep_he], minlength=seq.N)
    touched = np.zeros(seq.n, dtype=bool)
    touched[np.unique(seq.he_community[drop])] = True
    idx = seq.shape_index.copy()
    shapes = list(seq.shapes)
    lookup = {c: i for i, c in enumerate(shapes)}
    vo = seq.vertex_offsets
    for j, shape in enumerate(seq.shapes):
        mem = np.flatnonzero(touched & (seq.shape_index == j))
        if not mem.size:
            continue
        s = shape.vertex_count
        rows = new_outd[vo[mem][:, None] + np.arange(s)]
        uniq, inv = np.unique(rows, axis=0, return_inverse=True)
        inv = inv.ravel()
        for u in range(len(uniq)):
            c = shape.with_out_degrees(uniq[u].tolist())
            k = lookup.get(c)
            if k is None:
                k = lookup[c] = len(shapes)
                shapes.append(c)
            idx[mem[inv == u]] = k
    keep_comm = np.ones(seq.n, dtype=bool) if drop_comm is None else ~drop_comm
    # compact shapes so unused ones do not linger
    used = np.unique(idx[keep_comm])
    compact = np.full(len(shapes), -1, dtype=np.int64)
    compact[used] = np.arange(len(used))
    new_seq = CommunitySequence(tuple(shapes[k] for k in used), compact[idx[keep_comm]], dict(seq.metadata))
    old_of_new = np.flatnonzero(keep_he)
    new_partner = None
    if partner is not None:
        new_label = np.cumsum(keep_he) - 1
        new_partner = new_label[partner[old_of_new]]
    assert new_seq.ell == len(old_of_new)
    return new_seq, new_partner, old_of_new


# ---------------------------------------------------------------------------
# explosion

def explode(seq: CommunitySequence, pi: float, seed=None) -> tuple[CommunitySequence, ExplosionRecord]:
    """Detach each half-edge with probability ``1 - sqrt(pi)`` onto a clone.

    The clone copies the percolated community (vertices and internal edges)
    and carries only the detached half-edge.  Clones are appended after the
    ``n_bar`` original communities in half-edge order.
    """
    rng = np.random.default_rng(seed)
    boom = rng.random(seq.ell) >= np.sqrt(pi)
    hc, hv = seq.he_community, seq.he_vertex
    src_he = np.flatnonzero(boom)
    base, _, _ = remove_half_edges(seq, boom)
    clone_shapes: list[Community] = []
    keys = seq.shape_index[hc[src_he]] * (seq.s_max + 1) + hv[src_he]
    uk, inv = np.unique(keys, return_inverse=True)
    for u, key in enumerate(uk):
        j, v = divmod(int(key), seq.s_max + 1)
        shape = seq.shapes[j]
        outd = [0] * shape.vertex_count
        outd[v] = 1
        clone_shapes.append(shape.with_out_degrees(outd))
    clone_idx = inv.ravel().astype(np.int64)
    out = _concat(base, clone_shapes, clone_idx)
    n_plus = Counter()
    for u, c in enumerate(np.bincount(clone_idx, minlength=len(uk))):
        n_plus[clone_shapes[u]] += int(c)
    rec = ExplosionRecord(source=hc[src_he], source_he=src_he,
                          clone_index=np.arange(seq.n, seq.n + len(src_he)),
                          n_plus=n_plus, n_bar=seq.n, n_tilde=out.n)
    return out, rec


# ---------------------------------------------------------------------------
# full percolation

@dataclass
class PercolationResult:
    graph: HCMGraph
    record: ExplosionRecord | None = None
    pre_deletion: HCMGraph | None = None
    deleted_vertices: int = 0
    n_bar: int | None = None
    provenance: Provenance | None = None   # direct mode: vertex of the output -> input vertex


def _direct(g: HCMGraph, pi: float, seed) -> PercolationResult:
    rng = np.random.default_rng(seed)
    seq = g.sequence
    # internal edges first, then inter-community pairs: the draws do not
    # depend on pi, so runs with a common seed are monotonically coupled
    u_int = rng.random(len(seq.internal_edges))
    pairs = g.inter_edges
    u_ext = rng.random(len(pairs))
    new_seq, prov = _intra(seq, u_int < pi)
    drop_old = np.zeros(g.ell, dtype=bool)
    lost = pairs[u_ext >= pi]
    drop_old[lost.ravel()] = True
    # relabel the pairing onto the pieces
    new_of_old = np.empty(g.ell, dtype=np.int64)
    new_of_old[prov.he_map] = np.arange(g.ell)
    partner = np.empty(g.ell, dtype=np.int64)
    partner[new_of_old] = new_of_old[g.partner]
    drop_new = drop_old[prov.he_map]
    out_seq, out_partner, _ = remove_half_edges(new_seq, drop_new, partner)
    return PercolationResult(build_graph(out_seq, Pairing(out_partner)), n_bar=new_seq.n, provenance=prov)


def percolate_hcm(g: HCMGraph, cfg: PercolationConfig) -> PercolationResult:
    """Bond percolation with parameter ``cfg.pi`` by the chosen route."""
    pi = cfg.pi
    if cfg.mode is Mode.DIRECT:
        return _direct(g, pi, cfg.seed)
    s1, s2, s3, s4 = np.random.SeedSequence(cfg.seed).spawn(4)
    bar, _ = percolate_intra(g.sequence, pi, s1)
    tilde, rec = explode(bar, pi, s2)
    pairing = pair_half_edges(tilde, s3)
    pre = build_graph(tilde, pairing)
    if cfg.mode is Mode.S4:
        doomed = np.zeros(tilde.n, dtype=bool)
        doomed[rec.clone_index] = True
    else:
        doomed = np.zeros(tilde.n, dtype=bool)
        rng = np.random.default_rng(s4)
        deg1 = tilde.degrees == 1
        for shape, count in sorted(rec.n_plus.items(), key=lambda kv: str(kv[0])):
            j = tilde.shapes.index(shape)
            cand = np.flatnonzero((tilde.shape_index == j) & deg1)
            assert len(cand) >= count, "not enough degree-one communities to delete"
            doomed[rng.choice(cand, size=count, replace=False)] = True
    removed = int(tilde.vertex_counts[doomed].sum())
    out_seq, out_partner, _ = remove_half_edges(tilde, np.zeros(tilde.ell, dtype=bool),
                                                pairing.partner, drop_comm=doomed)
    if cfg.mode is Mode.S4:
        assert out_seq.N == g.N and removed == tilde.N - g.N
    return PercolationResult(build_graph(out_seq, Pairing(out_partner)), rec, pre, removed, bar.n)


# ---------------------------------------------------------------------------
# Monte Carlo moments of the percolated community law

MOMENT_NAMES = ("E[S]", "E[D]", "E[DS]", "E[D^3]")


def _sample_sequence(dist: CommunityDistribution, reps: int, rng) -> CommunitySequence:
    w = dist.weights
    idx = rng.choice(len(w), size=reps, p=w / w.sum())
    return CommunitySequence(tuple(dist.communities), idx)


def percolated_moments(dist: CommunityDistribution, pi: float, reps: int, seed=None,
                       exploded: bool = False) -> dict[str, tuple[float, float]]:
    """Estimates ``(value, stderr)`` of moments of a uniform percolated piece.

    ``reps`` communities are drawn from ``dist`` and percolated; each moment
    is a ratio of per-community sums, with a delta-method standard error.
    With ``exploded=True`` the clones of the explosion step are included and
    degrees are taken after explosion.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if dist.mean_degree == 0:
        raise ValueError("E[D] = 0: no inter-community half-edges")
    rng = np.random.default_rng(seed)
    seq = _sample_sequence(dist, reps, rng)
    bar, prov = percolate_intra(seq, pi, rng)
    owner = prov.parent
    if exploded:
        bar, rec = explode(bar, pi, rng)
        owner = np.concatenate([owner, owner[rec.source]])
    S = bar.sizes
    D = bar.degrees.astype(float)
    count = np.bincount(owner, minlength=reps).astype(float)
    out = {}
    for name, f in zip(MOMENT_NAMES, (S, D, D * S, D ** 3)):
        A = np.bincount(owner, weights=f, minlength=reps)
        est = A.sum() / count.sum()
        resid = A - est * count
        se = np.sqrt(resid.var(ddof=1) / reps) / count.mean() if reps > 1 else np.nan
        out[name] = (float(est), float(se))
    return out


def write_summary_csv(rows, path) -> None:
    """One line per replica: pi, mode, n, n_bar, n_tilde, deleted vertices, top-10 sizes."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pi", "mode", "n", "n_bar", "n_tilde", "deleted_vertices"] + [f"C{i}" for i in range(1, 11)])
        for r in rows:
            top = list(r["top"])[:10]
            w.writerow([r["pi"], r["mode"], r["n"], r["n_bar"], r["n_tilde"], r["deleted_vertices"]]
                       + top + [""] * (10 - len(top)))
