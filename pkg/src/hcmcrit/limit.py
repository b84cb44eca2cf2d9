"""Reflected Brownian motion with parabolic drift and its excursions.

``B(t) = (sqrt(eta)/mu) W(t) + lam t - eta t^2 / (2 mu^3)`` is simulated on a
grid by an Euler scheme and reflected at its running minimum.  The ordered
excursion lengths of the reflected path are the limit of rescaled critical
component sizes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np
from scipy import stats

from .community import CommunityDistribution


@dataclass(frozen=True)
class LimitParams:
    mu: float
    eta: float
    lam: float = 0.0

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")

    @classmethod
    def from_moments(cls, m1: float, m2: float, m3: float, lam: float = 0.0) -> "LimitParams":
        return cls(mu=m1, eta=m3 * m1 - m2 ** 2, lam=lam)

    @classmethod
    def from_distribution(cls, dist: CommunityDistribution, lam: float = 0.0) -> "LimitParams":
        return cls.from_moments(dist.moment(1), dist.moment(2), dist.moment(3), lam)

    @classmethod
    def from_percolated(cls, dist: CommunityDistribution, pi: float, lam: float = 0.0) -> "LimitParams":
        """Parameters built from the exploded percolated degree law."""
        from .critical import percolated_moment
        m = [percolated_moment(dist, pi, p, 0, exploded=True) for p in (1, 2, 3)]
        return cls.from_moments(*m, lam=lam)

    def drift(self, t):
        t = np.asarray(t, dtype=float)
        return self.lam * t - self.eta * t ** 2 / (2 * self.mu ** 3)


@dataclass
class LimitPath:
    dt: float
    B: np.ndarray
    W: np.ndarray

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self.W)) * self.dt

    @property
    def T(self) -> float:
        return (len(self.W) - 1) * self.dt

    @classmethod
    def from_W(cls, W, dt: float) -> "LimitPath":
        W = np.asarray(W, dtype=float)
        return cls(dt=dt, B=W.copy(), W=W)


def simulate_W(params: LimitParams, T: float = 20.0, dt: float | None = None, seed=None) -> LimitPath:
    """One Euler path of ``B`` on ``[0, T]`` and its reflection ``W = B - min B``."""
    if T <= 0:
        raise ValueError("T must be positive")
    dt = 1e-4 * T if dt is None else dt
    if dt <= 0:
        raise ValueError("dt must be positive")
    steps = int(round(T / dt))
    rng = np.random.default_rng(seed)
    noise = np.sqrt(params.eta) / params.mu * np.sqrt(dt) * rng.standard_normal(steps)
    t = np.arange(steps + 1) * dt
    B = np.concatenate([[0.0], np.cumsum(noise)]) + params.drift(t)
    W = B - np.minimum.accumulate(B)
    return LimitPath(dt=dt, B=B, W=W)


@dataclass
class ExcursionSet:
    lengths: np.ndarray
    start: np.ndarray   # grid index of the zero opening each excursion
    stop: np.ndarray    # grid index of the closing zero (or the path end)
    marks: np.ndarray | None = None

    def __len__(self):
        return len(self.lengths)

    def top(self, k: int) -> np.ndarray:
        out = np.zeros(k)
        m = min(k, len(self.lengths))
        out[:m] = self.lengths[:m]
        return out


def _runs(W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pos = W > 0
    if not pos.any():
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    edge = np.diff(pos.astype(np.int8))
    first = np.flatnonzero(edge == 1) + 1
    last = np.flatnonzero(edge == -1) + 1
    if pos[0]:
        first = np.concatenate([[0], first])
    if pos[-1]:
        last = np.concatenate([last, [len(W) - 1]])
    # an excursion spans from the zero before it to the zero after it
    start = np.maximum(first - 1, 0)
    return start, last


def extract_excursions(path: LimitPath, floor: float | None = None) -> ExcursionSet:
    """Maximal intervals on which ``W > 0``, longest first, shorter than ``floor`` dropped.

    A value of exactly zero after reflection counts as a return to zero.  An
    excursion still open at ``T`` runs to ``T``.
    """
    floor = 10 * path.dt if floor is None else floor
    start, stop = _runs(path.W)
    lengths = (stop - start) * path.dt
    keep = lengths >= floor
    order = np.argsort(-lengths[keep], kind="stable")
    return ExcursionSet(lengths[keep][order], start[keep][order], stop[keep][order])


def simulate_marks(path: LimitPath, mu: float, seed=None, excursions: ExcursionSet | None = None) -> np.ndarray:
    """Marks with intensity ``W / mu`` counted per excursion.

    Each grid step is marked with probability ``W dt / mu``.  Counts follow the
    order of ``excursions`` (by default all excursions, longest first).
    """
    ex = extract_excursions(path, floor=0.0) if excursions is None else excursions
    rng = np.random.default_rng(seed)
    p = np.clip(path.W[1:] * path.dt / mu, 0.0, 1.0)
    hit = rng.random(len(p)) < p
    cum = np.concatenate([[0], np.cumsum(hit)])
    counts = cum[ex.stop] - cum[ex.start]
    ex.marks = counts
    return counts


def limit_constant_thm1(dist: CommunityDistribution) -> float:
    """``E[S]^(-2/3) E[DS] / E[S]``, the prefactor of the vertex-count limit."""
    ES = dist.mean_size
    return ES ** (-2 / 3) * dist.moment(1, 1) / ES


def limit_constant_drift(dist: CommunityDistribution) -> float:
    """``E[S]^(-2/3) E[DS] / E[D]``: the prefactor implied by the drift of ``Z``.

    Component sizes in communities scale like ``gamma n^(2/3)`` and vertices
    accrue at rate ``E[DS]/E[D]`` per community, while ``N = E[S] n``.
    """
    return dist.mean_size ** (-2 / 3) * dist.moment(1, 1) / dist.mean_degree


@dataclass(frozen=True)
class TildeMoments:
    ES: float
    ED: float
    EDS: float


def tilde_moments(dist: CommunityDistribution, pi: float) -> TildeMoments:
    from .critical import percolated_moment
    return TildeMoments(ES=percolated_moment(dist, pi, 0, 1, exploded=True),
                        ED=percolated_moment(dist, pi, 1, 0, exploded=True),
                        EDS=percolated_moment(dist, pi, 1, 1, exploded=True))


def limit_constant_thm3(tm: TildeMoments, pi: float) -> float:
    """``E[S~]^(-2/3) E[D~ S~] / E[D~] sqrt(pi)`` for the percolated model.

    At ``pi = 1`` the tilde moments are the unpercolated ones, so this equals
    :func:`limit_constant_drift`, not :func:`limit_constant_thm1`.
    """
    if tm.ES <= 0 or tm.ED <= 0:
        raise ValueError("tilde moments must be positive")
    return tm.ES ** (-2 / 3) * tm.EDS / tm.ED * np.sqrt(pi)


@dataclass
class Comparison:
    statistic: float
    pvalue: float
    n_empirical: int
    n_limit: int

    def to_json(self, **extra) -> str:
        return json.dumps({**asdict(self), **extra}, indent=2, default=float)


def compare_distributions(empirical, limit) -> Comparison:
    """Two-sample Kolmogorov-Smirnov test."""
    a = np.asarray(empirical, dtype=float)
    b = np.asarray(limit, dtype=float)
    if not a.size or not b.size:
        raise ValueError("both samples must be nonempty")
    res = stats.ks_2samp(a, b)
    return Comparison(float(res.statistic), float(res.pvalue), a.size, b.size)


def sample_gamma(params: LimitParams, paths: int, seed=None, T: float = 20.0, dt: float | None = None,
                 k: int = 3) -> np.ndarray:
    """Top ``k`` excursion lengths for ``paths`` independent paths (rows)."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    out = np.zeros((paths, k))
    for i, child in enumerate(ss.spawn(paths)):
        out[i] = extract_excursions(simulate_W(params, T, dt, child)).top(k)
    return out
