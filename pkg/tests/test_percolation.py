import numpy as np
import pytest
from hypothesis import given, strategies as st

from hcmcrit.community import (CommunityDistribution, line_single_catalog, make_household, make_line,
                               make_single_vertex, make_star)
from hcmcrit.critical import percolated_moment, pieces_per_community
from hcmcrit.exploration import component_arrays, components_union_find, explore
from hcmcrit.generator import CommunitySequence, generate, realize_sequence
from hcmcrit.percolation import (MOMENT_NAMES, Mode, PercolationConfig, explode, percolate_hcm,
                                 percolate_intra, percolated_moments, remove_half_edges,
                                 write_summary_csv)

household3 = CommunityDistribution.single(make_household(3))


def test_config_validation():
    with pytest.raises(ValueError):
        PercolationConfig(1.5)
    assert PercolationConfig(0.5, "direct").mode is Mode.DIRECT


def test_intra_identity_at_one():
    seq = realize_sequence(line_single_catalog(), 200, 1)
    bar, prov = percolate_intra(seq, 1.0, 2)
    assert bar.same_as(seq)
    assert np.array_equal(prov.parent, np.arange(seq.n))
    assert np.array_equal(prov.vertex_map, np.arange(seq.N))


def test_intra_shatters_at_zero():
    seq = realize_sequence(line_single_catalog(), 200, 1)
    bar, _ = percolate_intra(seq, 0.0, 2)
    assert bar.n == seq.N and np.all(bar.vertex_counts == 1)
    assert bar.ell == seq.ell


def test_intra_line_piece_count():
    seq = CommunitySequence.from_communities([make_line(5)] * 20000)
    bar, prov = percolate_intra(seq, 0.5, 3)
    mean = bar.n / seq.n
    se = np.sqrt(4 * 0.25 / seq.n)
    assert abs(mean - 3) < 4 * se


def test_intra_keeps_out_degrees_and_vertices():
    seq = realize_sequence(CommunityDistribution(((make_star(4), "1/2"), (make_household(4), "1/2"))), 300, 5)
    bar, prov = percolate_intra(seq, 0.4, 6)
    assert bar.N == seq.N and bar.ell == seq.ell
    outd_old = np.bincount(seq.he_global_vertex, minlength=seq.N)
    outd_new = np.bincount(bar.he_global_vertex, minlength=bar.N)
    assert np.array_equal(outd_new, outd_old[prov.vertex_map])
    assert np.array_equal(seq.he_global_vertex[prov.he_map], prov.vertex_map[bar.he_global_vertex])
    assert np.all(np.diff(prov.parent) >= 0)


def test_explode_extremes():
    seq = realize_sequence(line_single_catalog(), 100, 1)
    same, rec = explode(seq, 1.0, 0)
    assert same.same_as(seq) and rec.n_tilde == rec.n_bar
    allgone, rec = explode(seq, 0.0, 0)
    assert np.all(allgone.degrees[:seq.n] == 0)
    assert np.all(allgone.degrees[seq.n:] == 1)
    assert rec.n_tilde == seq.n + seq.ell


def test_explode_count_mean():
    pi = 0.5
    seq = realize_sequence(household3, 10 ** 5, 3)
    bar, _ = percolate_intra(seq, pi, 4)
    tilde, rec = explode(bar, pi, 5)
    ed = bar.degrees.mean()
    expected = 1 + ed * (1 - np.sqrt(pi))
    q = 1 - np.sqrt(pi)
    se = np.sqrt(bar.ell * q * (1 - q)) / bar.n
    assert abs(tilde.n / bar.n - expected) < 3 * se


def test_clone_shape_and_sizes():
    seq = realize_sequence(CommunityDistribution.single(make_star(4)), 500, 1)
    bar, _ = percolate_intra(seq, 0.6, 2)
    tilde, rec = explode(bar, 0.6, 3)
    for j, src in zip(rec.clone_index[:50], rec.source[:50]):
        clone, piece = tilde[j], bar[src]
        assert clone.degree == 1
        assert clone.vertex_count == piece.vertex_count and clone.edges == piece.edges
    assert tilde.N == bar.N + int(sum(c.vertex_count * k for c, k in rec.n_plus.items()))


def test_direct_identity_at_one():
    g = generate(line_single_catalog(), 400, 1)
    res = percolate_hcm(g, PercolationConfig(1.0, "direct", 2))
    assert res.graph.sequence.same_as(g.sequence)
    assert np.array_equal(res.graph.partner, g.partner)


@pytest.mark.parametrize("mode", list(Mode))
def test_pi_zero_no_inter_edges(mode):
    g = generate(household3, 300, 1)
    res = percolate_hcm(g, PercolationConfig(0.0, mode, 2))
    assert res.graph.ell == 0
    assert res.graph.N == g.N
    assert np.all(res.graph.sequence.vertex_counts == 1)


@pytest.mark.parametrize("mode", [Mode.S4, Mode.S4_PRIME])
def test_algorithm2_bookkeeping(mode):
    g = generate(CommunityDistribution(((make_household(3), "1/2"), (make_star(3), "1/2"))), 500, 4)
    res = percolate_hcm(g, PercolationConfig(0.7, mode, 5))
    assert res.record.n_tilde == res.record.n_bar + sum(res.record.n_plus.values())
    pre = res.pre_deletion
    clones = pre.sequence.degrees[res.record.clone_index]
    assert np.all(clones == 1)
    if mode is Mode.S4:
        assert res.graph.N == g.N
        assert res.deleted_vertices == pre.N - g.N
        assert res.graph.n == res.record.n_bar
    comps = components_union_find(res.graph)
    assert sum(c.v for c in comps) == res.graph.N


def _labels(res):
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    h = res.graph
    e = h.vertex_edges
    adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(h.N, h.N))
    lab = connected_components(adj, directed=False)[1]
    out = np.empty(h.N, dtype=np.int64)
    out[res.provenance.vertex_map] = lab
    return out


def test_direct_monotone_coupling():
    g = generate(CommunityDistribution(((make_household(3), "1/2"), (make_star(3), "1/2"))), 800, 7)
    prev = None
    for pi in (0.2, 0.4, 0.6, 0.8, 1.0):
        lab = _labels(percolate_hcm(g, PercolationConfig(pi, "direct", 99)))
        if prev is not None:
            # each component at the smaller pi sits inside one component at the larger pi
            pairs = np.unique(np.c_[prev, lab], axis=0)
            assert len(pairs) == len(np.unique(prev))
        prev = lab


def test_explosion_binomial_rate():
    for pi in (0.5, 0.8):
        seq = realize_sequence(household3, 50000, 1)
        bar, _ = percolate_intra(seq, pi, 2)
        tilde, rec = explode(bar, pi, 3)
        src_shape = bar.shape_index[rec.source]
        q = 1 - np.sqrt(pi)
        for j, shape in enumerate(bar.shapes):
            nbar = int(np.sum(bar.shape_index == j))
            if nbar < 10 ** 4 or shape.degree == 0:
                continue
            trials = shape.degree * nbar
            hits = int(np.sum(src_shape == j))
            assert abs(hits / trials - q) <= 3 * np.sqrt(q * (1 - q) / trials)


def test_remove_half_edges_pairs_consistently():
    g = generate(line_single_catalog(), 100, 3)
    drop = np.zeros(g.ell, dtype=bool)
    drop[::7] = True
    seq, partner, old = remove_half_edges(g.sequence, drop, g.partner)
    assert seq.ell == len(partner)
    idx = np.arange(len(partner))
    assert np.all(partner[partner] == idx) and np.all(partner != idx)
    assert np.all(g.partner[old][partner] == old) or np.array_equal(old[partner], g.partner[old])


def test_moments_single_vertex_independent_of_pi():
    d = CommunityDistribution.single(make_single_vertex(3))
    a = percolated_moments(d, 0.2, 200, 1)
    b = percolated_moments(d, 0.9, 200, 1)
    for k in MOMENT_NAMES:
        assert a[k][0] == b[k][0]


def test_moments_at_one_are_unpercolated():
    d = line_single_catalog()
    m = percolated_moments(d, 1.0, 5000, 2)
    assert m["E[S]"][0] == pytest.approx(d.mean_size, rel=0.05)
    assert m["E[DS]"][0] == pytest.approx(d.moment(1, 1), rel=0.05)


@pytest.mark.parametrize("exploded", [False, True])
@pytest.mark.parametrize("pi", [0.3, 0.7])
def test_moments_mc_vs_exact(pi, exploded):
    d = CommunityDistribution(((make_line(5), "1/2"), (make_household(3), "1/4"), (make_star(3), "1/4")))
    mc = percolated_moments(d, pi, 40000, 8, exploded=exploded)
    exact = {"E[S]": (0, 1), "E[D]": (1, 0), "E[DS]": (1, 1), "E[D^3]": (3, 0)}
    for name, (dp, sp) in exact.items():
        val = percolated_moment(d, pi, dp, sp, exploded=exploded)
        est, se = mc[name]
        assert abs(est - val) <= 4 * se, (name, est, val, se)


def test_pieces_per_community_line():
    assert pieces_per_community(CommunityDistribution.single(make_line(5)), 0.5) == pytest.approx(3.0)


def test_moments_errors():
    with pytest.raises(ValueError):
        percolated_moments(CommunityDistribution.single(make_single_vertex(0)), 0.5, 10)
    with pytest.raises(ValueError):
        percolated_moments(household3, 0.5, 0)


def test_summary_csv(tmp_path):
    g = generate(household3, 200, 1)
    res = percolate_hcm(g, PercolationConfig(0.7, "algorithm2_S4", 1))
    v = np.sort(component_arrays(explore(res.graph, 1))[0])[::-1]
    write_summary_csv([{"pi": 0.7, "mode": "algorithm2_S4", "n": 200, "n_bar": res.n_bar,
                        "n_tilde": res.record.n_tilde, "deleted_vertices": res.deleted_vertices,
                        "top": v[:10].tolist()}], tmp_path / "s.csv")
    head, row = (tmp_path / "s.csv").read_text().splitlines()
    assert head.startswith("pi,mode,n,n_bar,n_tilde,deleted_vertices,C1")
