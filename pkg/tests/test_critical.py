import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import optimize, stats

from hcmcrit import critical as cr
from hcmcrit.community import (Community, CommunityDistribution, line_single_catalog, make_household,
                               make_line, make_single_vertex, make_star, star_catalog)
from strategies import communities


def brute_g(H: Community, v: int, pi: float) -> dict[int, float]:
    """Law of the half-edge count of v's piece by direct summation over edge subsets."""
    out = {}
    E = len(H.edges)
    for mask in itertools.product((0, 1), repeat=E):
        parent = list(range(H.vertex_count))

        def find(x):
            while parent[x] != x:
                x = parent[x]
            return x

        for keep, (a, b) in zip(mask, H.edges):
            if keep:
                parent[find(a)] = find(b)
        root = find(v)
        k = sum(d for u, d in enumerate(H.out_degrees) if find(u) == root)
        m = sum(mask)
        out[k] = out.get(k, 0.0) + pi ** m * (1 - pi) ** (E - m)
    return out


def test_single_vertex_B():
    H = make_single_vertex(3)
    for pi in (0.0, 0.4, 1.0):
        assert [cr.exact_B(H, 0, k, pi) for k in range(5)] == [1, 1, 1, 1, 0]


def test_line2_B():
    H = make_line(2)
    for pi in (0.1, 0.5, 0.9):
        assert cr.exact_B(H, 0, 2, pi) == pytest.approx(pi, abs=1e-15)


@pytest.mark.parametrize("l", [3, 5, 7])
def test_star_leaf_B(l):
    H = make_star(l)
    for pi in (0.2, 0.63, 0.95):
        for k in range(2, l + 1):
            want = pi * stats.binom.sf(k - 2, l - 1, pi)
            assert cr.exact_B(H, 1, k, pi) == pytest.approx(want, abs=1e-14)
        # sum over k >= 2 of P(K >= k) is the expected extra half-edges
        assert sum(cr.exact_B(H, 1, k, pi) for k in range(2, l + 1)) == pytest.approx((l - 1) * pi ** 2)


@settings(max_examples=30)
@given(communities(max_vertices=5), st.floats(0.01, 0.99))
def test_kernel_matches_brute_force(H, pi):
    K = cr.kernel(H)
    for v in range(H.vertex_count):
        law = brute_g(H, v, pi)
        for k in range(H.degree + 1):
            assert K.g(v, k, pi) == pytest.approx(law.get(k, 0.0), abs=1e-12)
        assert sum(K.g(v, k, pi) for k in range(H.degree + 1)) == pytest.approx(1.0, abs=1e-12)
        for k in range(1, H.degree + 1):
            tail = sum(K.g(v, j, pi) for j in range(k, H.degree + 1))
            assert K.B(v, k, pi) == pytest.approx(tail, abs=1e-12)


@settings(max_examples=30)
@given(communities(max_vertices=5), st.floats(0.05, 0.9), st.floats(0.01, 0.09))
def test_B_monotone(H, pi, dp):
    K = cr.kernel(H)
    for v in range(H.vertex_count):
        Bs = [K.B(v, k, pi) for k in range(H.degree + 2)]
        assert all(a >= b - 1e-15 for a, b in zip(Bs, Bs[1:]))
        for k in range(H.degree + 1):
            assert K.B(v, k, pi + dp) >= K.B(v, k, pi) - 1e-13


@settings(max_examples=30)
@given(communities(max_vertices=5), st.floats(0.1, 0.9))
def test_russo_derivative(H, pi):
    K = cr.kernel(H)
    h = 1e-5
    for v in range(H.vertex_count):
        for k in range(1, H.degree + 1):
            fd = (K.B(v, k, pi + h) - K.B(v, k, pi - h)) / (2 * h)
            r = K.B_prime(v, k, pi)
            assert r == pytest.approx(fd, abs=1e-6)
            assert r == pytest.approx(K.B_prime_poly(v, k, pi), abs=1e-11)
            assert -1e-12 <= r <= (H.vertex_count - 1) / pi + 1e-12


def test_star_nu():
    for l in (2, 5, 8):
        d = star_catalog(l)
        for pi in (0.3, 0.7, 1.0):
            assert cr.nu_percolated(d, pi) == pytest.approx((l - 1) * pi ** 2, rel=1e-12)


def test_line_mix_nu():
    d = line_single_catalog()
    for pi in (0.2, 0.75, 1.0):
        assert cr.nu_percolated(d, pi) == pytest.approx((pi ** 4 + 3) / 2.5, rel=1e-12)


@settings(max_examples=25)
@given(st.lists(communities(max_vertices=4, allow_isolated_degree=False), min_size=1, max_size=3))
def test_nu_at_one_is_unpercolated(shapes):
    shapes = list(dict.fromkeys(shapes))
    d = CommunityDistribution(tuple((H, Fraction(1, len(shapes))) for H in shapes))
    assert cr.nu_percolated(d, 1.0) == pytest.approx(float(d.nu), rel=1e-12)


def test_solver_against_brentq():
    d = line_single_catalog()
    for n, lam in ((10 ** 5, -10), (10 ** 5, 0), (10 ** 6, 1), (10 ** 6, 10)):
        target = 1 + lam * n ** (-1 / 3)
        ref = optimize.brentq(lambda p: p * (p ** 4 + 3) - 2.5 * target, 0, 1, xtol=1e-15)
        sol = cr.solve_pi_critical(d, n, lam)
        assert sol.pi == pytest.approx(ref, abs=1e-9)
        assert sol.residual <= 1e-9


@pytest.mark.parametrize("l", range(2, 9))
def test_star_critical_point(l):
    sol = cr.solve_pi_critical(star_catalog(l), None)
    assert sol.pi == pytest.approx((l - 1) ** (-1 / 3), abs=1e-12)
    assert cr.c_star(star_catalog(l)) == pytest.approx(1 / 3, abs=1e-9)


def test_c_star_line_mix():
    assert cr.c_star(line_single_catalog()) == pytest.approx(0.72112, abs=1e-5)


def test_c_star_is_window_slope():
    d = line_single_catalog()
    n = 10 ** 15
    p0 = cr.solve_pi_critical(d, None).pi
    p1 = cr.solve_pi_critical(d, n, 1.0).pi
    assert (p1 / p0 - 1) * n ** (1 / 3) == pytest.approx(cr.c_star(d), rel=1e-3)


def test_window_approx_at_zero():
    d = star_catalog(5)
    assert cr.pi_window_approx(d, 10 ** 5, 0.0) == pytest.approx(4 ** (-1 / 3), abs=1e-12)


def test_pinpout_star():
    c = cr.pin_pout_curve(star_catalog(5), 10 ** 5, 0.0, np.linspace(0.1, 1, 10))
    assert np.allclose(c.pi_out, 1 / (4 * c.pi_in ** 2))
    assert c.intersection == pytest.approx(4 ** (-1 / 3), abs=1e-12)


@settings(max_examples=15)
@given(st.lists(communities(max_vertices=4, allow_isolated_degree=False), min_size=1, max_size=3),
       st.sampled_from([-1.0, 0.0, 1.0]))
def test_pinpout_crossing_is_solution(shapes, lam):
    shapes = list(dict.fromkeys(shapes))
    d = CommunityDistribution(tuple((H, Fraction(1, len(shapes))) for H in shapes))
    n = 10 ** 6
    target = 1 + lam * n ** (-1 / 3)
    assume(cr.nu_percolated(d, 1.0) > target * 1.01)
    c = cr.pin_pout_curve(d, n, lam, np.linspace(0.05, 1, 20))
    assert c.intersection == pytest.approx(cr.solve_pi_critical(d, n, lam).pi, abs=1e-9)


def test_pi_nu_monotone():
    for d in (star_catalog(5), line_single_catalog(), CommunityDistribution.single(make_household(4))):
        f = [p * cr.nu_percolated(d, p) for p in np.linspace(0, 1, 41)]
        assert np.all(np.diff(f) >= -1e-14)


def test_outside_window():
    with pytest.raises(cr.OutsideWindow):
        cr.solve_pi_critical(star_catalog(5), 1000, -100.0)
    with pytest.raises(cr.OutsideWindow):
        cr.solve_pi_critical(star_catalog(5), 8, 10.0)


def test_enumeration_cap():
    H = make_household(8)
    assert H.n_edges > cr.ENUMERATION_CAP
    with pytest.raises(cr.EnumerationCapExceeded):
        cr.kernel(H)
    d = CommunityDistribution.single(H)
    with pytest.raises(cr.EnumerationCapExceeded):
        cr.nu_percolated(d, 0.5)
    # the sampled route still works and agrees with the exact excess where both exist
    assert cr.nu_percolated(d, 0.9, mc_reps=2000, seed=1) == pytest.approx(7.0, rel=0.02)


def test_sampled_excess_matches_exact():
    H = make_household(5)
    d = CommunityDistribution.single(H)
    exact = cr.kernel(H).excess(0.4)
    K = cr._sampled_K(H, 0.4, 40000, 3)
    vals = (K - 1) @ np.asarray(H.out_degrees)
    assert abs(vals.mean() - exact) < 4 * vals.std() / np.sqrt(len(vals))


@pytest.mark.parametrize("H", [make_star(4), make_household(4), make_line(4)])
def test_monte_carlo_B(H):
    for pi in (0.3, 0.8):
        for k in range(2, H.degree + 1):
            v = 1 if H.out_degrees[0] == 0 else 0
            p, se = cr.monte_carlo_B(H, v, k, pi, 20000, 7)
            assert abs(p - cr.exact_B(H, v, k, pi)) <= 3 * se + 1e-3


def test_monte_carlo_B_coupled():
    H = make_household(4)
    a = [cr.monte_carlo_B(H, 0, 3, p, 2000, 5)[0] for p in (0.2, 0.5, 0.8)]
    assert a == sorted(a)


def test_piece_law_is_distribution():
    d = line_single_catalog()
    for exploded in (False, True):
        law = cr.piece_law(d, 0.6, exploded)
        assert sum(law.values()) == pytest.approx(1.0)
    # pieces per community: one single vertex plus 1 + 4(1-pi) pieces of the line
    assert cr.pieces_per_community(d, 0.6) == pytest.approx(0.5 + 0.5 * (1 + 4 * 0.4))


def test_index_errors():
    with pytest.raises(IndexError):
        cr.exact_B(make_line(3), 5, 1, 0.5)
