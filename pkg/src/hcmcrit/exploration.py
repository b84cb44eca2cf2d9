"""Depth-first exploration of the community-level multigraph.

One community is discovered per step.  Active half-edges form a stack, so the
most recently discovered community is explored first; when no half-edge is
active a new component is started from a uniformly chosen sleeping half-edge,
which discovers communities size-biased by their inter-community degree.

The walk ``Q(i) = sum_{j<=i} (d_(j) - 2 - 2 c_(j))`` hits ``-2k`` for the first
time exactly when the ``k``-th component is complete, and
``Z(i) = sum_{j<=i} s_(j)`` accumulates the vertices discovered.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .generator import HCMGraph


@njit(cache=True)
def _explore_kernel(he_offsets, he_comm, partner, sleep_order):
    n = len(he_offsets) - 1
    ell = len(partner)
    status = np.zeros(ell, np.int8)  # 0 sleeping, 1 active, 2 dead
    discovered = np.zeros(n, np.bool_)
    stack = np.empty(ell + 1, np.int64)
    top = 0
    n_active = 0
    order = np.empty(n, np.int64)
    cycles = np.zeros(n, np.int64)
    step = 0
    ptr = 0
    while True:
        fresh = -1
        if n_active > 0:
            while True:
                top -= 1
                a = stack[top]
                if status[a] == 1:
                    break
            status[a] = 2
            n_active -= 1
            b = partner[a]
            status[b] = 2
            comm = he_comm[b]
        else:
            while ptr < ell and status[sleep_order[ptr]] != 0:
                ptr += 1
            if ptr == ell:
                break
            fresh = sleep_order[ptr]
            comm = he_comm[fresh]
        discovered[comm] = True
        c = 0
        lo = he_offsets[comm]
        hi = he_offsets[comm + 1]
        # other half-edges in index order, then the starting half-edge on top
        for j in range(lo, hi + 1):
            if j == hi:
                if fresh < 0:
                    break
                h = fresh
            else:
                h = j
                if h == fresh:
                    continue
            if status[h] == 2:
                continue
            p = partner[h]
            if lo <= p < hi:
                # community self-loop
                status[h] = 2
                status[p] = 2
                c += 1
            elif status[p] == 1:
                # closes a cycle or parallel edge with an active half-edge
                status[p] = 2
                status[h] = 2
                n_active -= 1
                c += 1
            else:
                status[h] = 1
                stack[top] = h
                top += 1
                n_active += 1
        order[step] = comm
        cycles[step] = c
        step += 1
    # communities without half-edges are never drawn; each is its own component
    for i in range(n):
        if not discovered[i]:
            order[step] = i
            step += 1
    return order, cycles


@dataclass
class ExplorationTrace:
    """Result of exploring one graph.

    ``Q`` and ``Z`` have length ``n + 1`` with ``Q[0] = Z[0] = 0``; arrays
    indexed by step (``order``, ``cycles``, ...) have length ``n`` and entry
    ``i - 1`` belongs to step ``i``.
    """

    order: np.ndarray
    degrees: np.ndarray
    sizes: np.ndarray
    cycles: np.ndarray
    internal_surplus: np.ndarray
    Q: np.ndarray
    Z: np.ndarray
    tau: np.ndarray

    @property
    def n(self) -> int:
        return len(self.order)


def explore(g: HCMGraph, seed=None) -> ExplorationTrace:
    """Run the depth-first exploration on ``g``.

    ``seed`` drives only the choice of sleeping half-edges at component starts.
    """
    seq = g.sequence
    rng = np.random.default_rng(seed)
    sleep_order = rng.permutation(g.ell).astype(np.int64)
    order, cycles = _explore_kernel(seq.he_offsets.astype(np.int64),
                                    seq.he_community.astype(np.int64),
                                    np.ascontiguousarray(g.partner, dtype=np.int64),
                                    sleep_order)
    deg = seq.degrees[order]
    weighted = any(c.weight is not None for c in seq.shapes)
    sizes = seq.sizes[order] if weighted else seq.vertex_counts[order]
    Q = np.concatenate([[0], np.cumsum(deg - 2 - 2 * cycles)])
    Z = np.concatenate([[0], np.cumsum(sizes)])
    return ExplorationTrace(order=order, degrees=deg, sizes=sizes, cycles=cycles,
                            internal_surplus=seq.internal_surplus[order],
                            Q=Q, Z=Z, tau=hitting_times(Q))


def hitting_times(Q: np.ndarray) -> np.ndarray:
    """``tau_k = inf{i : Q(i) = -2k}`` for every level reached by ``Q``."""
    Q = np.asarray(Q)
    prev_min = np.minimum.accumulate(Q)[:-1]
    new_low = np.flatnonzero(Q[1:] < prev_min) + 1
    return new_low[Q[new_low] % 2 == 0] if new_low.size else new_low


class MalformedTrace(ValueError):
    pass


@dataclass
class ComponentStats:
    v: float
    vH: int
    SP: int
    SPH: int
    vH_by_degree: dict[int, int] = field(default_factory=dict)
    communities: np.ndarray | None = field(default=None, repr=False)

    def key(self):
        return (self.v, self.vH, self.SP, self.SPH)


def component_arrays(t: ExplorationTrace):
    """Per-component ``(v, vH, SP, SPH, start, stop)`` arrays in discovery order.

    Steps ``start[k]+1 .. stop[k]`` form the ``k``-th component.
    """
    tau = t.tau
    Q = t.Q
    k = np.arange(1, len(tau) + 1)
    if not np.array_equal(Q[tau], -2 * k):
        raise MalformedTrace("Q does not hit -2k at the component ends")
    if len(tau) == 0 or tau[-1] != t.n:
        raise MalformedTrace("exploration does not end at a component boundary")
    start = np.concatenate([[0], tau[:-1]])
    vH = tau - start
    v = t.Z[tau] - t.Z[start]
    csum_c = np.concatenate([[0], np.cumsum(t.cycles)])
    csum_sp = np.concatenate([[0], np.cumsum(t.internal_surplus)])
    SPH = csum_c[tau] - csum_c[start]
    SP = SPH + csum_sp[tau] - csum_sp[start]
    return v, vH, SP, SPH, start, tau


def components_from_trace(t: ExplorationTrace) -> list[ComponentStats]:
    """Components delimited by the hitting times, largest ``v`` first."""
    v, vH, SP, SPH, start, stop = component_arrays(t)
    out = []
    for k in np.argsort(-v, kind="stable"):
        sl = slice(start[k], stop[k])
        degs, cnt = np.unique(t.degrees[sl], return_counts=True)
        out.append(ComponentStats(v=v[k].item(), vH=int(vH[k]), SP=int(SP[k]), SPH=int(SPH[k]),
                                  vH_by_degree=dict(zip(degs.tolist(), cnt.tolist())),
                                  communities=t.order[sl]))
    return out


def _labels(n_nodes: int, edges: np.ndarray) -> np.ndarray:
    if n_nodes == 0:
        return np.empty(0, dtype=np.int64)
    e = np.asarray(edges).reshape(-1, 2)
    adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n_nodes, n_nodes))
    return connected_components(adj, directed=False)[1]


def components_union_find(g: HCMGraph) -> list[ComponentStats]:
    """Connected components of the vertex graph, computed without exploring.

    Independent check on :func:`components_from_trace`.
    """
    seq = g.sequence
    lab = _labels(g.N, g.vertex_edges)
    comm_lab = lab[seq.vertex_offsets[:-1]]
    ncomp = lab.max() + 1 if lab.size else 0
    vcount = np.bincount(lab, minlength=ncomp)
    weighted = any(c.weight is not None for c in seq.shapes)
    v = np.bincount(comm_lab, weights=seq.sizes, minlength=ncomp) if weighted else vcount
    vH = np.bincount(comm_lab, minlength=ncomp)
    ecount = np.bincount(lab[g.vertex_edges[:, 0]], minlength=ncomp) if len(g.vertex_edges) \
        else np.zeros(ncomp, dtype=np.int64)
    ce = g.community_edges
    icount = np.bincount(comm_lab[ce[:, 0]], minlength=ncomp) if len(ce) else np.zeros(ncomp, dtype=np.int64)
    SP = ecount - vcount + 1
    SPH = icount - vH + 1
    members = np.argsort(comm_lab, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(vH)])
    out = []
    for k in np.argsort(-v, kind="stable"):
        mem = members[bounds[k]:bounds[k + 1]]
        degs, cnt = np.unique(seq.degrees[mem], return_counts=True)
        out.append(ComponentStats(v=v[k].item(), vH=int(vH[k]), SP=int(SP[k]), SPH=int(SPH[k]),
                                  vH_by_degree=dict(zip(degs.tolist(), cnt.tolist())),
                                  communities=mem))
    return out


def surplus(g: HCMGraph, component) -> tuple[int, int]:
    """``(SP, SPH)`` of a connected set of communities.

    ``component`` is a :class:`ComponentStats` or a collection of community
    indices.  SP counts edges minus vertices plus one in the vertex graph,
    SPH the same on the community graph.
    """
    members = component.communities if isinstance(component, ComponentStats) else component
    members = np.unique(np.asarray(members, dtype=np.int64))
    seq = g.sequence
    in_comp = np.zeros(g.n, dtype=bool)
    in_comp[members] = True
    vmask = in_comp[seq.vertex_community]
    e = g.vertex_edges
    keep = vmask[e[:, 0]] & vmask[e[:, 1]]
    crossing = vmask[e[:, 0]] ^ vmask[e[:, 1]]
    if crossing.any():
        raise ValueError("component is not closed: it has edges leaving it")
    verts = np.flatnonzero(vmask)
    relabel = np.full(g.N, -1)
    relabel[verts] = np.arange(len(verts))
    sub = relabel[e[keep]]
    if len(np.unique(_labels(len(verts), sub))) != 1:
        raise ValueError("component is not connected")
    ce = g.community_edges
    n_inter = int(np.sum(in_comp[ce[:, 0]])) if len(ce) else 0
    return int(keep.sum() - len(verts) + 1), n_inter - len(members) + 1


def rescaled_walks(t: ExplorationTrace, n: int, grid) -> tuple[np.ndarray, np.ndarray]:
    """``n^{-1/3} Q(floor(t n^{2/3}))`` and ``n^{-2/3} Z(floor(t n^{2/3}))`` on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    idx = np.minimum(np.floor(grid * n ** (2 / 3)).astype(np.int64), t.n)
    return t.Q[idx] * n ** (-1 / 3), t.Z[idx] * n ** (-2 / 3)


def z_slope(t: ExplorationTrace, n: int, t_max: float = 1.0) -> float:
    """Least-squares slope through the origin of ``n^(-2/3) Z`` against ``i n^(-2/3)``.

    Uses every step ``i <= t_max n^(2/3)``.
    """
    m = min(int(np.floor(t_max * n ** (2 / 3))), t.n)
    i = np.arange(1, m + 1, dtype=float)
    return float(np.dot(i, t.Z[1:m + 1]) / np.dot(i, i))


def z_drift_error(t: ExplorationTrace, n: int, slope: float, t_max: float = 1.0) -> float:
    """``sup_{t<=t_max} |n^{-2/3} Z(t n^{2/3}) - slope * t|`` over all steps."""
    m = min(int(np.floor(t_max * n ** (2 / 3))), t.n)
    i = np.arange(m + 1)
    return float(np.max(np.abs(t.Z[:m + 1] * n ** (-2 / 3) - slope * i * n ** (-2 / 3))))


def write_components_csv(t: ExplorationTrace, path) -> None:
    v, vH, SP, SPH, _, tau = component_arrays(t)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "tau_k", "v", "vH", "SP", "SPH"])
        for k in range(len(tau)):
            w.writerow([k + 1, tau[k], v[k], vH[k], SP[k], SPH[k]])


def write_walk_csv(t: ExplorationTrace, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "Q", "Z"])
        for i in range(len(t.Q)):
            w.writerow([i, t.Q[i], t.Z[i]])
