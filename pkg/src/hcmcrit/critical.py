"""Connectivity kernels inside percolated communities and the critical window.

For a community ``H`` and a vertex ``v``, ``B(H, v, k, pi)`` is the probability
that, after keeping each internal edge with probability ``pi``, the piece
containing ``v`` carries at least ``k`` half-edges; ``g`` is the probability of
exactly ``k``.  Both are polynomials in ``pi``: one enumeration over all edge
subsets records, per vertex, how many subsets of each cardinality give each
(half-edge count, piece size) pair.  Any ``pi`` is then a cheap dot product.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from math import comb

import numpy as np
from numba import njit

from .community import Community, CommunityDistribution

ENUMERATION_CAP = 25
_CHUNK = 1 << 16


class EnumerationCapExceeded(ValueError):
    pass


class OutsideWindow(ValueError):
    """The requested criticality target cannot be reached on ``(0, 1]``."""


# ---------------------------------------------------------------------------
# numba kernels

@njit(cache=True)
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True)
def _piece_stats(s, eu, ew, outd, mask, skip, parent, he, size, K, S):
    """Per-vertex half-edge count ``K`` and piece size ``S`` for one edge mask."""
    for i in range(s):
        parent[i] = i
        he[i] = 0
        size[i] = 0
    for e in range(len(eu)):
        if e != skip and (mask >> e) & 1:
            a = _find(parent, eu[e])
            b = _find(parent, ew[e])
            if a != b:
                if a < b:
                    parent[b] = a
                else:
                    parent[a] = b
    for i in range(s):
        r = _find(parent, i)
        he[r] += outd[i]
        size[r] += 1
    for i in range(s):
        r = _find(parent, i)
        K[i] = he[r]
        S[i] = size[r]


@njit(cache=True)
def _popcount(x):
    c = 0
    while x:
        x &= x - 1
        c += 1
    return c


@njit(cache=True)
def _enumerate(s, eu, ew, outd, lo, hi, table):
    """Add subsets ``lo <= mask < hi`` to ``table[v, K, S, m]``."""
    parent = np.empty(s, np.int64)
    he = np.empty(s, np.int64)
    size = np.empty(s, np.int64)
    K = np.empty(s, np.int64)
    S = np.empty(s, np.int64)
    for mask in range(lo, hi):
        _piece_stats(s, eu, ew, outd, mask, -1, parent, he, size, K, S)
        m = _popcount(mask)
        for v in range(s):
            table[v, K[v], S[v], m] += 1


@njit(cache=True)
def _enumerate_pivotal(s, eu, ew, outd, lo, hi, piv):
    """``piv[v, k, m]``: present edges whose removal drops ``K(v)`` below ``k``."""
    E = len(eu)
    parent = np.empty(s, np.int64)
    he = np.empty(s, np.int64)
    size = np.empty(s, np.int64)
    K = np.empty(s, np.int64)
    S = np.empty(s, np.int64)
    K2 = np.empty(s, np.int64)
    for mask in range(lo, hi):
        _piece_stats(s, eu, ew, outd, mask, -1, parent, he, size, K, S)
        m = _popcount(mask)
        for e in range(E):
            if not (mask >> e) & 1:
                continue
            _piece_stats(s, eu, ew, outd, mask, e, parent, he, size, K2, S)
            for v in range(s):
                for k in range(K2[v] + 1, K[v] + 1):
                    piv[v, k, m] += 1


@njit(cache=True)
def _sample_K(s, eu, ew, outd, kept):
    """``K[r, v]`` for each row ``r`` of a boolean kept-edge matrix."""
    reps = kept.shape[0]
    parent = np.empty(s, np.int64)
    he = np.empty(s, np.int64)
    out = np.empty((reps, s), np.int64)
    for r in range(reps):
        for i in range(s):
            parent[i] = i
            he[i] = 0
        for e in range(len(eu)):
            if kept[r, e]:
                a = _find(parent, eu[e])
                b = _find(parent, ew[e])
                if a != b:
                    parent[max(a, b)] = min(a, b)
        for i in range(s):
            he[_find(parent, i)] += outd[i]
        for i in range(s):
            out[r, i] = he[_find(parent, i)]
    return out


def _arrays(H: Community):
    e = np.asarray(H.edges, dtype=np.int64).reshape(-1, 2)
    return (H.vertex_count, np.ascontiguousarray(e[:, 0]), np.ascontiguousarray(e[:, 1]),
            np.asarray(H.out_degrees, dtype=np.int64))


# ---------------------------------------------------------------------------
# kernel tables

def _binom_weights(E: int, pi: float) -> np.ndarray:
    m = np.arange(E + 1)
    return pi ** m * (1.0 - pi) ** (E - m)


def _binom_weights_prime(E: int, pi: float) -> np.ndarray:
    """``d/dpi`` of the subset weights, for the polynomial derivative."""
    m = np.arange(E + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(m > 0, m * pi ** np.maximum(m - 1, 0), 0.0) * (1.0 - pi) ** (E - m)
        b = np.where(E - m > 0, (E - m) * (1.0 - pi) ** np.maximum(E - m - 1, 0), 0.0) * pi ** m
    return a - b


class ConnectivityKernel:
    """Exact ``g``, ``B`` and ``dB/dpi`` for one community shape.

    ``counts[v, k, s, m]`` is the number of edge subsets with ``m`` edges in
    which the piece of ``v`` has ``k`` half-edges and ``s`` vertices.
    """

    def __init__(self, H: Community):
        if H.n_edges > ENUMERATION_CAP:
            raise EnumerationCapExceeded(
                f"{H.n_edges} internal edges exceed the enumeration cap of {ENUMERATION_CAP}")
        self.H = H
        self.E = H.n_edges
        s, eu, ew, outd = _arrays(H)
        d = H.degree
        table = np.zeros((s, d + 1, s + 1, self.E + 1), dtype=np.int64)
        total = 1 << self.E
        for lo in range(0, total, _CHUNK):
            _enumerate(s, eu, ew, outd, lo, min(lo + _CHUNK, total), table)
        self.counts = table
        # tail sums over k give B, exact in integers
        self._ge = np.flip(np.cumsum(np.flip(table.sum(axis=2), axis=1), axis=1), axis=1)
        self._piv = None
        self._lock = threading.Lock()

    @property
    def pivotal(self) -> np.ndarray:
        """``piv[v, k, m]`` from the Russo enumeration (computed on first use)."""
        with self._lock:
            if self._piv is None:
                s, eu, ew, outd = _arrays(self.H)
                piv = np.zeros((s, self.H.degree + 1, self.E + 1), dtype=np.int64)
                total = 1 << self.E
                for lo in range(0, total, _CHUNK):
                    _enumerate_pivotal(s, eu, ew, outd, lo, min(lo + _CHUNK, total), piv)
                self._piv = piv
        return self._piv

    def _check(self, v: int, k: int):
        if not 0 <= v < self.H.vertex_count:
            raise IndexError(f"vertex {v} out of range")
        return k

    def g(self, v: int, k: int, pi: float) -> float:
        self._check(v, k)
        if k < 0 or k > self.H.degree:
            return 0.0
        return float(self.counts[v, k].sum(axis=0) @ _binom_weights(self.E, pi))

    def B(self, v: int, k: int, pi: float) -> float:
        self._check(v, k)
        if k <= 0:
            return 1.0
        if k > self.H.degree:
            return 0.0
        return float(self._ge[v, k] @ _binom_weights(self.E, pi))

    def B_prime(self, v: int, k: int, pi: float) -> float:
        """Russo form: sum over present pivotal edges of ``pi^(m-1) (1-pi)^(E-m)``."""
        self._check(v, k)
        if k <= 0 or k > self.H.degree or self.E == 0:
            return 0.0
        m = np.arange(self.E + 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(m > 0, pi ** np.maximum(m - 1, 0), 0.0) * (1.0 - pi) ** (self.E - m)
        return float(self.pivotal[v, k] @ w)

    def B_prime_poly(self, v: int, k: int, pi: float) -> float:
        """Derivative of the ``B`` polynomial; an independent check on :meth:`B_prime`."""
        self._check(v, k)
        if k <= 0 or k > self.H.degree:
            return 0.0
        return float(self._ge[v, k] @ _binom_weights_prime(self.E, pi))

    def excess(self, pi: float) -> float:
        """``sum_v d_v sum_{k=1}^{d_H-1} B(v, k+1, pi)``."""
        w = _binom_weights(self.E, pi)
        d = self.H.degree
        tot = 0.0
        for v, dv in enumerate(self.H.out_degrees):
            if dv:
                tot += dv * float(self._ge[v, 2:d + 1].sum(axis=0) @ w)
        return tot

    def excess_prime(self, pi: float) -> float:
        d = self.H.degree
        return sum(dv * sum(self.B_prime(v, k + 1, pi) for k in range(1, d))
                   for v, dv in enumerate(self.H.out_degrees) if dv)

    def piece_law(self, pi: float) -> dict[tuple[int, int], float]:
        """Expected number of pieces with ``(half-edges, vertices)`` per community."""
        w = _binom_weights(self.E, pi)
        per = self.counts.sum(axis=0) @ w  # [k, s]
        out = {}
        for k, s in zip(*np.nonzero(per)):
            out[(int(k), int(s))] = float(per[k, s]) / s
        return out


_KERNELS: dict[Community, ConnectivityKernel] = {}
_KLOCK = threading.Lock()


def kernel(H: Community) -> ConnectivityKernel:
    """Memoized kernel table for ``H`` (one enumeration per shape)."""
    k = _KERNELS.get(H)
    if k is None:
        built = ConnectivityKernel(H)
        with _KLOCK:
            k = _KERNELS.setdefault(H, built)
    return k


def exact_g(H: Community, v: int, k: int, pi: float) -> float:
    return kernel(H).g(v, k, pi)


def exact_B(H: Community, v: int, k: int, pi: float) -> float:
    """Probability that ``v``'s piece keeps at least ``k`` half-edges."""
    return kernel(H).B(v, k, pi)


def B_prime(H: Community, v: int, k: int, pi: float) -> float:
    return kernel(H).B_prime(v, k, pi)


def _sampled_K(H: Community, pi: float, reps: int, seed) -> np.ndarray:
    s, eu, ew, outd = _arrays(H)
    u = np.random.default_rng(seed).random((reps, H.n_edges))
    return _sample_K(s, eu, ew, outd, u < pi)


def monte_carlo_B(H: Community, v: int, k: int, pi: float, reps: int, seed=None) -> tuple[float, float]:
    """Frequency estimate of ``B`` and its binomial standard error.

    The uniforms do not depend on ``pi``, so estimates for a fixed seed are
    monotone in ``pi``.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    K = _sampled_K(H, pi, reps, seed)[:, v]
    p = float(np.mean(K >= k))
    return p, float(np.sqrt(p * (1 - p) / reps))


# ---------------------------------------------------------------------------
# criticality of the percolated law

def _excess(H: Community, pi: float, mc_reps: int | None, seed) -> float:
    try:
        return kernel(H).excess(pi)
    except EnumerationCapExceeded:
        if mc_reps is None:
            raise
    # sum_{k>=1} P(K >= k+1) = E[K - 1] since 1 <= K <= d_H when d_v >= 1
    K = _sampled_K(H, pi, mc_reps, seed)
    d = np.asarray(H.out_degrees)
    return float(np.mean((K - 1).clip(min=0) @ d))


def nu_percolated(dist: CommunityDistribution, pi: float, mc_reps: int | None = None, seed=0) -> float:
    """Criticality parameter of the community law after intra-percolation.

    Shapes with more than ``ENUMERATION_CAP`` internal edges need ``mc_reps``.
    """
    ED = dist.mean_degree
    if ED <= 0:
        raise ValueError("E[D] = 0: no inter-community half-edges")
    num = sum(float(w) * _excess(H, pi, mc_reps, seed) for H, w in dist.entries if H.degree)
    return num / ED


def _target(n, lam) -> float:
    return 1.0 if n is None or lam == 0 else 1.0 + lam * float(n) ** (-1 / 3)


def _bisect(f, target, lo, hi, tol):
    flo = f(lo)
    for _ in range(400):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm < target:
            lo, flo = mid, fm
        else:
            hi = mid
    fhi = f(hi)
    return lo if abs(flo - target) <= abs(fhi - target) else hi


@dataclass
class CriticalWindowSolution:
    lam: float
    n: int | None
    pi: float
    nu_at_pi: float
    c_star: float
    pi_approx: float
    residual: float
    supercritical_intra: bool

    def row(self) -> dict:
        return {"lambda": self.lam, "n": self.n, "pi_exact": self.pi, "pi_approx": self.pi_approx,
                "c_star": self.c_star, "nu_at_pi": self.nu_at_pi, "residual": self.residual}


def _solve(dist, target, tol=1e-14, mc_reps=None, seed=0):
    if target <= 0:
        raise OutsideWindow(f"target 1 + lambda n^(-1/3) = {target:.6g} is not positive")

    def f(p):
        return p * nu_percolated(dist, p, mc_reps, seed)

    top = f(1.0)
    if target > top:
        raise OutsideWindow(f"target {target:.6g} exceeds nu at pi = 1 ({top:.6g})")
    grid = np.linspace(0.0, 1.0, 21)
    lo = 0.0
    for p in grid[1:]:
        if f(p) < target:
            lo = float(p)
        else:
            break
    return _bisect(f, target, lo, min(lo + 0.05, 1.0), tol)


def c_star(dist: CommunityDistribution, n: int | None = None, lam: float = 0.0,
           finite_n: bool = False) -> float:
    """Narrowing constant of the critical window.

    Evaluated at the solution of ``pi nu(pi) = 1``; with ``finite_n`` at the
    solution for ``1 + lam n^(-1/3)`` instead.
    """
    pi = _solve(dist, _target(n, lam) if finite_n else 1.0)
    ED = dist.mean_degree
    d = sum(float(w) * kernel(H).excess_prime(pi) for H, w in dist.entries if H.degree)
    return ED / (ED + pi ** 2 * d)


def pi_window_approx(dist: CommunityDistribution, n: int, lam: float, cs: float | None = None) -> float:
    """First-order window ``pi_n(0) (1 + c* lam / n^(1/3))``."""
    cs = c_star(dist) if cs is None else cs
    return _solve(dist, 1.0) * (1 + cs * lam / n ** (1 / 3))


def solve_pi_critical(dist: CommunityDistribution, n: int | None, lam: float = 0.0,
                      mc_reps: int | None = None, seed=0, finite_c_star: bool = False) -> CriticalWindowSolution:
    """Solve ``pi nu(pi) = 1 + lam n^(-1/3)`` for ``pi`` by bisection."""
    target = _target(n, lam)
    pi = _solve(dist, target, mc_reps=mc_reps, seed=seed)
    nu = nu_percolated(dist, pi, mc_reps, seed)
    try:
        cs = c_star(dist, n, lam, finite_n=finite_c_star)
        approx = pi_window_approx(dist, n, lam, cs) if n is not None else pi
    except EnumerationCapExceeded:
        cs, approx = float("nan"), float("nan")
    return CriticalWindowSolution(lam=lam, n=n, pi=pi, nu_at_pi=nu, c_star=cs, pi_approx=approx,
                                  residual=abs(pi * nu - target), supercritical_intra=nu > 1)


@dataclass
class PinPoutCurve:
    pi_in: np.ndarray
    pi_out: np.ndarray
    intersection: float


def pin_pout_curve(dist: CommunityDistribution, n: int, lam: float, grid) -> PinPoutCurve:
    """``pi_out = (1 + lam n^(-1/3)) / nu(pi_in)`` and its crossing with the diagonal."""
    grid = np.asarray(grid, dtype=float)
    if np.any((grid <= 0) | (grid > 1)):
        raise ValueError("grid must lie in (0, 1]")
    target = _target(n, lam)
    nus = np.array([nu_percolated(dist, p) for p in grid])
    with np.errstate(divide="ignore"):
        out = np.where(nus > 0, target / nus, np.inf)
    if np.all(nus <= target):
        raise OutsideWindow("pi_out >= 1 on the whole grid: no crossing with the diagonal")

    def h(p):
        nu = nu_percolated(dist, p)
        return p - (target / nu if nu > 0 else np.inf)

    lo, hi = 1e-12, 1.0
    if h(hi) < 0:
        raise OutsideWindow("no crossing with the diagonal on (0, 1]")
    while hi - lo > 1e-14:
        mid = 0.5 * (lo + hi)
        if h(mid) < 0:
            lo = mid
        else:
            hi = mid
    return PinPoutCurve(grid, out, 0.5 * (lo + hi))


# ---------------------------------------------------------------------------
# exact moments of the percolated and exploded community laws

def piece_law(dist: CommunityDistribution, pi: float, exploded: bool = False) -> dict[tuple[int, float], float]:
    """Law of ``(D, S)`` for a uniformly chosen percolated piece.

    With ``exploded`` each half-edge leaves with probability ``1 - sqrt(pi)``
    onto a clone of the same size and degree one, and the clones join the
    population.
    """
    mass: dict[tuple[int, float], float] = {}
    r = np.sqrt(pi)
    for H, w in dist.entries:
        scale = 1.0 if H.weight is None else H.weight / H.vertex_count
        for (k, s), cnt in kernel(H).piece_law(pi).items():
            size = s * scale
            if not exploded:
                mass[(k, size)] = mass.get((k, size), 0.0) + float(w) * cnt
                continue
            for j in range(k + 1):
                pj = comb(k, j) * r ** j * (1 - r) ** (k - j)
                mass[(j, size)] = mass.get((j, size), 0.0) + float(w) * cnt * pj
            if k:
                mass[(1, size)] = mass.get((1, size), 0.0) + float(w) * cnt * k * (1 - r)
    total = sum(mass.values())
    return {key: m / total for key, m in mass.items() if m > 0}


def percolated_moment(dist: CommunityDistribution, pi: float, d_power: int = 0, s_power: int = 0,
                      exploded: bool = False) -> float:
    law = piece_law(dist, pi, exploded)
    return sum(p * k ** d_power * s ** s_power for (k, s), p in law.items())


def pieces_per_community(dist: CommunityDistribution, pi: float, exploded: bool = False) -> float:
    """Expected pieces (plus clones when ``exploded``) per original community."""
    tot = 0.0
    for H, w in dist.entries:
        for (k, _), cnt in kernel(H).piece_law(pi).items():
            tot += float(w) * cnt * (1 + (k * (1 - np.sqrt(pi)) if exploded else 0))
    return tot
