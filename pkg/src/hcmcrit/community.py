"""Community shapes, weighted catalogs of shapes, and their moments.

A community is a small connected simple graph whose vertices carry a number
of inter-community half-edges.  Vertex labels are dense 0-based integers and
equality is label sensitive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np


class CommunityError(ValueError):
    """Raised for malformed community definitions or community files."""


def _components(n_vertices: int, edges: Iterable[tuple[int, int]]) -> list[int]:
    parent = list(range(n_vertices))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)
    return [find(x) for x in range(n_vertices)]


@dataclass(frozen=True)
class Community:
    """Connected simple graph plus per-vertex inter-community half-edge counts.

    Parameters
    ----------
    vertex_count : int
        Number of vertices ``s_H``.
    edges : tuple of (int, int)
        Internal edges, stored as sorted ``(u, v)`` pairs with ``u < v``.
    out_degrees : tuple of int
        Inter-community half-edges per vertex.
    weight : float, optional
        Overrides the community size when vertices carry attributes.
    """

    vertex_count: int
    edges: tuple[tuple[int, int], ...]
    out_degrees: tuple[int, ...]
    weight: float | None = None

    def __post_init__(self):
        s = int(self.vertex_count)
        if s < 1:
            raise CommunityError("a community needs at least one vertex")
        edges = tuple(sorted((min(u, v), max(u, v)) for u, v in self.edges))
        outd = tuple(int(d) for d in self.out_degrees)
        if len(outd) != s:
            raise CommunityError(f"expected {s} out-degrees, got {len(outd)}")
        if any(d < 0 for d in outd):
            raise CommunityError("out-degrees must be nonnegative")
        for u, v in edges:
            if u == v:
                raise CommunityError(f"self-loop on vertex {u}")
            if not (0 <= u < s and 0 <= v < s):
                raise CommunityError(f"edge ({u}, {v}) out of range for {s} vertices")
        if len(set(edges)) != len(edges):
            raise CommunityError("duplicate internal edge")
        if len(set(_components(s, edges))) != 1:
            raise CommunityError("internal graph is not connected")
        if self.weight is not None and self.weight < 0:
            raise CommunityError("size weight must be nonnegative")
        object.__setattr__(self, "vertex_count", s)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "out_degrees", outd)

    @property
    def degree(self) -> int:
        """Inter-community degree ``d_H``."""
        return sum(self.out_degrees)

    @property
    def size(self) -> float:
        return self.vertex_count if self.weight is None else self.weight

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def surplus(self) -> int:
        """Internal surplus, edges minus vertices plus one."""
        return len(self.edges) - self.vertex_count + 1

    def internal_degrees(self) -> tuple[int, ...]:
        deg = [0] * self.vertex_count
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return tuple(deg)

    def total_degrees(self) -> tuple[int, ...]:
        return tuple(a + b for a, b in zip(self.out_degrees, self.internal_degrees()))

    def with_out_degrees(self, out_degrees: Sequence[int]) -> "Community":
        return Community(self.vertex_count, self.edges, tuple(out_degrees), self.weight)

    def induced(self, vertices: Sequence[int], edges: Iterable[tuple[int, int]] | None = None,
                out_degrees: Sequence[int] | None = None) -> "Community":
        """Community on ``vertices`` (relabelled in the given order).

        ``edges`` restricts the candidate edges, e.g. to those kept by
        percolation; by default every internal edge between the vertices.
        """
        index = {v: i for i, v in enumerate(vertices)}
        cand = self.edges if edges is None else edges
        sub = [(index[u], index[v]) for u, v in cand if u in index and v in index]
        outd = [self.out_degrees[v] for v in vertices] if out_degrees is None else out_degrees
        return Community(len(vertices), tuple(sub), tuple(outd))

    def __str__(self):
        return f"Community(s={self.vertex_count}, d={self.degree}, |E|={self.n_edges})"


def make_single_vertex(d: int) -> Community:
    if d < 0:
        raise CommunityError("d must be nonnegative")
    return Community(1, (), (d,))


def make_star(l: int) -> Community:
    """Centre vertex 0 (no half-edges) joined to ``l`` leaves with one half-edge each."""
    if l < 1:
        raise CommunityError("a star needs at least one leaf")
    return Community(l + 1, tuple((0, i) for i in range(1, l + 1)), (0,) + (1,) * l)


def make_line(L: int) -> Community:
    """Path on ``L`` vertices; only the two endpoints carry a half-edge."""
    if L < 2:
        raise CommunityError("a line needs at least two vertices")
    outd = [0] * L
    outd[0] = outd[-1] = 1
    return Community(L, tuple((i, i + 1) for i in range(L - 1)), tuple(outd))


def make_household(k: int) -> Community:
    """Complete graph on ``k`` vertices, each with one half-edge."""
    if k < 1:
        raise CommunityError("a household needs at least one member")
    edges = tuple((i, j) for i in range(k) for j in range(i + 1, k))
    return Community(k, edges, (1,) * k)


FAMILIES: dict[str, Callable[[int], Community]] = {
    "single_vertex": make_single_vertex,
    "star": make_star,
    "line": make_line,
    "household": make_household,
}


def _as_weight(w) -> Fraction | float:
    if isinstance(w, Fraction):
        return w
    if isinstance(w, int):
        return Fraction(w)
    if isinstance(w, str):
        return Fraction(w.strip())
    if isinstance(w, Real):
        return float(w)
    raise TypeError(f"cannot interpret weight {w!r}")


@dataclass(frozen=True)
class CommunityDistribution:
    """Weighted catalog of community shapes.

    Weights given as ints, strings like ``"1/2"`` or Fractions are kept exact;
    floats stay floats.  They are only converted to float inside moment sums.
    """

    entries: tuple[tuple[Community, Fraction | float], ...]
    counts: tuple[int, ...] | None = None

    def __post_init__(self):
        if not self.entries:
            raise CommunityError("empty community distribution")
        merged: dict[Community, Fraction | float] = {}
        for comm, w in self.entries:
            w = _as_weight(w)
            if w < 0:
                raise CommunityError("weights must be nonnegative")
            merged[comm] = merged.get(comm, 0) + w
        total = sum(merged.values())
        if isinstance(total, Fraction):
            if total != 1:
                raise CommunityError(f"weights sum to {total}, not 1")
        elif abs(total - 1.0) > 1e-9:
            raise CommunityError(f"weights sum to {total}, not 1")
        if self.counts is not None and len(self.counts) != len(self.entries):
            raise CommunityError("counts must align with entries")
        if self.counts is None:
            object.__setattr__(self, "entries", tuple(merged.items()))
        else:
            object.__setattr__(self, "entries", tuple((c, _as_weight(w)) for c, w in self.entries))

    @classmethod
    def from_dict(cls, mapping: dict[Community, object]) -> "CommunityDistribution":
        return cls(tuple(mapping.items()))

    @classmethod
    def single(cls, comm: Community) -> "CommunityDistribution":
        return cls(((comm, Fraction(1)),))

    @property
    def communities(self) -> list[Community]:
        return [c for c, _ in self.entries]

    @property
    def weights(self) -> np.ndarray:
        return np.array([float(w) for _, w in self.entries])

    def expect(self, f: Callable[[Community], float]) -> float:
        return math.fsum(float(w) * f(c) for c, w in self.entries)

    def moment(self, d_power: int = 0, s_power: int = 0) -> float:
        """``E[D^a S^b]`` over the catalog."""
        return self.expect(lambda c: c.degree ** d_power * c.size ** s_power)

    @property
    def mean_size(self) -> float:
        return self.moment(0, 1)

    @property
    def mean_degree(self) -> float:
        return self.moment(1, 0)

    @property
    def nu(self) -> float:
        """``E[D(D-1)] / E[D]``; raises when ``E[D] = 0``."""
        ed = self.mean_degree
        if ed == 0:
            raise CommunityError("nu_D undefined: E[D] = 0")
        return self.expect(lambda c: c.degree * (c.degree - 1)) / ed

    def prob_degree(self, k: int) -> float:
        return self.expect(lambda c: float(c.degree == k))

    @property
    def s_max(self) -> float:
        return max(c.size for c, w in self.entries if w > 0)

    @property
    def d_max(self) -> int:
        return max(c.degree for c, w in self.entries if w > 0)

    def mixed_with(self, other: "CommunityDistribution", w) -> "CommunityDistribution":
        """``w * self + (1 - w) * other``."""
        w = _as_weight(w)
        merged: dict[Community, Fraction | float] = {}
        for c, p in self.entries:
            merged[c] = merged.get(c, 0) + w * p
        for c, p in other.entries:
            merged[c] = merged.get(c, 0) + (1 - w) * p
        return CommunityDistribution(tuple((c, p) for c, p in merged.items() if p != 0))


def tune_mixture(a: CommunityDistribution, b: CommunityDistribution, target_nu) -> CommunityDistribution:
    """Mix ``a`` and ``b`` so that the mixture has ``nu_D == target_nu``.

    The mixing weight solves a linear equation, computed exactly when the
    target and the catalog weights are rational.
    """
    t = _as_weight(target_nu)
    if isinstance(t, float):
        t = Fraction(t).limit_denominator(10**15)

    def exact(dist, f):
        return sum(Fraction(w) * f(c) for c, w in dist.entries)

    a1, a2 = exact(a, lambda c: c.degree), exact(a, lambda c: c.degree * (c.degree - 1))
    b1, b2 = exact(b, lambda c: c.degree), exact(b, lambda c: c.degree * (c.degree - 1))
    denom = (a2 - b2) - t * (a1 - b1)
    if denom == 0:
        raise CommunityError("mixture nu does not depend on the weight")
    w = (t * b1 - b2) / denom
    if not 0 <= w <= 1:
        raise CommunityError(f"target nu={float(t)} unreachable by mixing (weight {float(w)})")
    return a.mixed_with(b, w)


@dataclass
class ConditionReport:
    n: int
    lam: float
    mean_size: float
    mean_degree: float
    mean_degree2: float
    mean_degree3: float
    mean_ds: float
    mean_d2s: float
    nu: float | None
    s_max: float
    d_max: int
    s_max_ratio: float
    s_max_ok: bool
    d_max_ok: bool
    p_degree_one_ok: bool
    p_degree_zero_ok: bool
    nu_gap: float | None
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors and self.s_max_ok and self.d_max_ok and self.p_degree_one_ok \
            and self.p_degree_zero_ok


def check_conditions(dist: CommunityDistribution, n: int, lam: float = 0.0) -> ConditionReport:
    """Finite-n regularity and connectivity diagnostics for a catalog.

    ``s_max_ratio`` is ``s_max log(n) / n^(2/3)``, reported as a number since
    the asymptotic requirement has no finite-n constant.  ``nu_gap`` is the
    distance of ``nu_D`` from ``1 + lam n^(-1/3)``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    errors = []
    ed = dist.mean_degree
    nu = None
    if ed == 0:
        errors.append("E[D] = 0: nu_D undefined")
    else:
        nu = dist.nu
    p1 = dist.prob_degree(1)
    p0 = dist.prob_degree(0)
    if p0 >= 1:
        errors.append("P(D = 0) = 1: no inter-community half-edges")
    ratio = dist.s_max * math.log(n) / n ** (2 / 3) if n > 1 else 0.0
    return ConditionReport(
        n=n, lam=lam,
        mean_size=dist.mean_size, mean_degree=ed,
        mean_degree2=dist.moment(2), mean_degree3=dist.moment(3),
        mean_ds=dist.moment(1, 1), mean_d2s=dist.moment(2, 1),
        nu=nu, s_max=dist.s_max, d_max=dist.d_max,
        s_max_ratio=ratio, s_max_ok=ratio < 1,
        d_max_ok=dist.d_max <= n ** (1 / 3),
        p_degree_one_ok=0 < p1 < 1, p_degree_zero_ok=p0 < 1,
        nu_gap=None if nu is None else nu - (1 + lam * n ** (-1 / 3)),
        errors=errors,
    )


# ---------------------------------------------------------------------------
# file formats

def serialize_community(comm: Community) -> str:
    lines = [f"{comm.vertex_count} {comm.degree}", " ".join(map(str, comm.out_degrees))]
    lines += [f"{u} {v}" for u, v in comm.edges]
    return "\n".join(lines) + "\n"


def parse_community(text: str) -> Community:
    """Parse the plain-text community format.

    Line 1 is ``s d_total``, line 2 holds ``s`` out-degrees, and every later
    line is one internal edge ``u v`` with 0-based labels.
    """
    rows = [(i + 1, ln.split("#", 1)[0].strip()) for i, ln in enumerate(text.splitlines())]
    rows = [(i, ln) for i, ln in rows if ln]
    if len(rows) < 2:
        raise CommunityError("community file needs a header and an out-degree line")

    def ints(lineno, line):
        try:
            return [int(x) for x in line.split()]
        except ValueError:
            raise CommunityError(f"line {lineno}: expected integers, got {line!r}") from None

    (l1, h), (l2, dl) = rows[0], rows[1]
    head = ints(l1, h)
    if len(head) != 2:
        raise CommunityError(f"line {l1}: header must be 's d_total'")
    s, d_total = head
    if s < 1:
        raise CommunityError(f"line {l1}: vertex count must be positive")
    outd = ints(l2, dl)
    if len(outd) != s:
        raise CommunityError(f"line {l2}: expected {s} out-degrees, got {len(outd)}")
    if any(d < 0 for d in outd):
        raise CommunityError(f"line {l2}: negative out-degree")
    if sum(outd) != d_total:
        raise CommunityError(f"line {l2}: out-degrees sum to {sum(outd)}, header says {d_total}")
    seen = set()
    edges = []
    for lineno, line in rows[2:]:
        e = ints(lineno, line)
        if len(e) != 2:
            raise CommunityError(f"line {lineno}: an edge is two vertex labels")
        u, v = e
        if u == v:
            raise CommunityError(f"line {lineno}: self-loop {u} {v}")
        if not (0 <= u < s and 0 <= v < s):
            raise CommunityError(f"line {lineno}: vertex out of range 0..{s - 1}")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise CommunityError(f"line {lineno}: duplicate edge {u} {v}")
        seen.add(key)
        edges.append(key)
    if len(set(_components(s, edges))) != 1:
        last = rows[-1][0]
        raise CommunityError(f"line {last}: internal graph is not connected")
    return Community(s, tuple(edges), tuple(outd))


def read_community(path) -> Community:
    return parse_community(Path(path).read_text())


def write_community(comm: Community, path) -> None:
    Path(path).write_text(serialize_community(comm))


def _community_from_spec(spec, base: Path | None) -> Community:
    if isinstance(spec, Community):
        return spec
    if isinstance(spec, dict):
        if "family" in spec:
            fam = spec["family"]
            if fam not in FAMILIES:
                raise CommunityError(f"unknown family {fam!r}")
            comm = FAMILIES[fam](int(spec["param"]))
        else:
            comm = Community(int(spec["vertex_count"]),
                             tuple(tuple(e) for e in spec.get("edges", [])),
                             tuple(spec["out_degrees"]))
        if spec.get("weight") is not None:
            comm = Community(comm.vertex_count, comm.edges, comm.out_degrees, float(spec["weight"]))
        return comm
    if isinstance(spec, str):
        if "\n" in spec.strip():
            return parse_community(spec)
        path = Path(spec)
        if base is not None and not path.is_absolute():
            path = base / path
        return read_community(path)
    raise CommunityError(f"cannot interpret community spec {spec!r}")


def distribution_from_config(config, base: Path | None = None) -> CommunityDistribution:
    """Build a distribution from a parsed config.

    ``config`` is a list of ``{community, weight, count}`` mappings (or a
    mapping with an ``entries`` list).  ``community`` may be a family mapping
    such as ``{family: star, param: 5}``, an explicit mapping, inline
    community text, or a path to a community file.
    """
    items = config["entries"] if isinstance(config, dict) else config
    entries, counts = [], []
    for item in items:
        comm = _community_from_spec(item["community"], base)
        entries.append((comm, item.get("weight")))
        counts.append(item.get("count"))
    if all(c is not None for c in counts):
        total = sum(counts)
        entries = [(c, Fraction(k, total) if w is None else w) for (c, w), k in zip(entries, counts)]
        return CommunityDistribution(tuple(entries), tuple(int(k) for k in counts))
    if any(w is None for _, w in entries):
        raise CommunityError("every entry needs a weight unless all give counts")
    return CommunityDistribution(tuple(entries))


def read_distribution(path) -> CommunityDistribution:
    """Load a distribution file (YAML or JSON; JSON is valid YAML)."""
    import yaml

    path = Path(path)
    return distribution_from_config(yaml.safe_load(path.read_text()), base=path.parent)


def distribution_to_config(dist: CommunityDistribution) -> list[dict]:
    out = []
    for i, (c, w) in enumerate(dist.entries):
        item = {
            "community": {"vertex_count": c.vertex_count,
                          "edges": [list(e) for e in c.edges],
                          "out_degrees": list(c.out_degrees)},
            "weight": str(w) if isinstance(w, Fraction) else w,
        }
        if c.weight is not None:
            item["community"]["weight"] = c.weight
        if dist.counts is not None:
            item["count"] = dist.counts[i]
        out.append(item)
    return out


# ---------------------------------------------------------------------------
# catalogs used throughout the experiments

def star_catalog(l: int = 5) -> CommunityDistribution:
    return CommunityDistribution.single(make_star(l))


def line_single_catalog() -> CommunityDistribution:
    """Half lines of length 5, half single vertices of degree 3."""
    return CommunityDistribution(((make_line(5), Fraction(1, 2)),
                                  (make_single_vertex(3), Fraction(1, 2))))


def critical_cm_catalog(lam: float = 0.0, n: int | None = None) -> CommunityDistribution:
    """Size-one communities with degrees 1 and 3 tuned to ``nu = 1 + lam n^(-1/3)``."""
    ones = CommunityDistribution.single(make_single_vertex(1))
    threes = CommunityDistribution.single(make_single_vertex(3))
    target = Fraction(1) if lam == 0 or n is None else 1 + lam * n ** (-1 / 3)
    return tune_mixture(ones, threes, target)


def critical_household_catalog(lam: float = 0.0, n: int | None = None) -> CommunityDistribution:
    """Households of one and three members tuned to ``nu = 1 + lam n^(-1/3)``."""
    ones = CommunityDistribution.single(make_household(1))
    threes = CommunityDistribution.single(make_household(3))
    target = Fraction(1) if lam == 0 or n is None else 1 + lam * n ** (-1 / 3)
    return tune_mixture(ones, threes, target)


def make_pendant_path(L: int, out: int = 1) -> Community:
    """Path on ``L`` vertices with ``out`` half-edges on vertex 0 only."""
    edges = tuple((i, i + 1) for i in range(L - 1))
    return Community(L, edges, (out,) + (0,) * (L - 1))


def critical_mixed_catalog() -> CommunityDistribution:
    """Critical catalog with ``E[DS]/E[D] = 3`` that contains three-person households.

    Households of three (weight 1/4), single vertices of degree one (3/8) and
    five-vertex paths with one half-edge at an end (3/8): ``nu = 1`` and
    ``E[DS] = 9/2``, ``E[D] = 3/2``.
    """
    return CommunityDistribution(((make_household(3), Fraction(1, 4)),
                                  (make_single_vertex(1), Fraction(3, 8)),
                                  (make_pendant_path(5), Fraction(3, 8))))


def heavy_size_catalog(n: int, eps: float = 1.0, lam: float = 0.0) -> CommunityDistribution:
    """Critical configuration-model catalog plus isolated paths with ``E[S^2] ~ eps n^(1/3)``.

    The paths have ``ceil(n^(2/3) / log n)`` vertices and no half-edges, so
    they do not change ``nu`` but each one is a component of order
    ``n^(2/3) / log n``.
    """
    L = max(2, math.ceil(n ** (2 / 3) / math.log(n)))
    q = Fraction(eps * n ** (1 / 3) / L ** 2).limit_denominator(10 ** 9)
    big = make_pendant_path(L, out=0)
    base = critical_cm_catalog(lam, n)
    return CommunityDistribution(tuple((c, w * (1 - q)) for c, w in base.entries) + ((big, q),))
