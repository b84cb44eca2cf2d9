import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from hcmcrit.community import (Community, CommunityDistribution, critical_cm_catalog,
                               critical_household_catalog, make_household, make_line,
                               make_single_vertex, make_star)
from hcmcrit.exploration import (ExplorationTrace, MalformedTrace, component_arrays,
                                 components_from_trace, components_union_find, explore,
                                 hitting_times, rescaled_walks, surplus, write_components_csv,
                                 write_walk_csv, z_drift_error, z_slope)
from hcmcrit.generator import CommunitySequence, Pairing, build_graph, generate, pair_half_edges

from strategies import communities


def graph(comms, partner):
    seq = CommunitySequence.from_communities(comms)
    return build_graph(seq, Pairing(np.asarray(partner)))


def keys(cs):
    return sorted(c.key() for c in cs)


def test_tree_walk():
    # degrees (2, 1, 1): half-edges 0,1 | 2 | 3, pairs (0,2), (1,3)
    g = graph([make_single_vertex(2), make_single_vertex(1), make_single_vertex(1)], [2, 3, 0, 1])
    t = explore(g, seed=0)
    assert t.Q[0] == 0 and t.Q[-1] == -2
    assert t.tau.tolist() == [3]
    assert len(components_from_trace(t)) == 1 and components_from_trace(t)[0].vH == 3
    if t.order[0] == 0:
        assert t.Q.tolist() == [0, 0, -1, -2]
    # the expected walk starting from a leaf
    for s in range(20):
        t = explore(g, seed=s)
        if t.order[0] != 0:
            assert t.Q.tolist()[:2] == [0, -1]
            break


def test_cycle_walk():
    # three degree-2 vertices in a cycle: 0-1 | 2-3 | 4-5, pairs (1,2), (3,4), (5,0)
    g = graph([make_single_vertex(2)] * 3, [5, 2, 1, 4, 3, 0])
    t = explore(g, seed=0)
    assert t.Q.tolist() == [0, 0, 0, -2]
    assert t.cycles.tolist() == [0, 0, 1]
    (c,) = components_from_trace(t)
    assert (c.SP, c.SPH) == (1, 1)
    assert surplus(g, c) == (1, 1)


def test_z_running_sum():
    comms = [make_line(2), make_line(3), make_line(5)]
    comms = [Community(c.vertex_count, c.edges, (1,) + (0,) * (c.vertex_count - 2) + (1,)) for c in comms]
    # chain them: he 0,1 | 2,3 | 4,5 with pairs (1,2), (3,4), (5,0), a ring
    g = graph(comms, [5, 2, 1, 4, 3, 0])
    for s in range(10):
        t = explore(g, seed=s)
        assert t.Z[-1] == 10
        assert np.all(np.diff(t.Z) > 0)
        assert t.Z.tolist()[1:] == np.cumsum([comms[i].vertex_count for i in t.order]).tolist()


def test_degree_zero_singletons():
    g = graph([make_single_vertex(0), make_single_vertex(0)], [])
    t = explore(g)
    assert t.tau.tolist() == [1, 2]
    assert [c.v for c in components_from_trace(t)] == [1, 1]


def test_single_community_no_pairing():
    g = graph([make_household(4)], [3, 2, 1, 0])
    (c,) = components_union_find(g)
    assert c.v == 4
    h = graph([Community(4, make_household(4).edges, (0, 0, 0, 0))], [])
    (c,) = components_union_find(h)
    assert (c.v, c.SP, c.SPH) == (4, 3, 0)
    assert surplus(h, [0]) == (3, 0)


def test_surplus_errors():
    g = graph([make_single_vertex(1)] * 4, [1, 0, 3, 2])
    with pytest.raises(ValueError, match="not closed"):
        surplus(g, [0])
    with pytest.raises(ValueError, match="not connected"):
        surplus(g, [0, 1, 2, 3])


def test_malformed_trace():
    t = explore(graph([make_single_vertex(0)], []))
    bad = ExplorationTrace(t.order, t.degrees, t.sizes, t.cycles, t.internal_surplus,
                           np.array([0, -1]), t.Z, np.array([], dtype=np.int64))
    with pytest.raises(MalformedTrace):
        component_arrays(bad)


def test_k4_cm_matches_brute_force():
    seq = CommunitySequence.from_communities([make_single_vertex(3)] * 4)
    for s in range(10):
        g = build_graph(seq, pair_half_edges(seq, s))
        # brute force by repeated relabelling
        lab = list(range(4))
        for a, b in g.vertex_edges:
            la, lb = lab[a], lab[b]
            lab = [la if x == lb else x for x in lab]
        assert len(components_union_find(g)) == len(set(lab))


mixed = CommunityDistribution(((make_household(3), "1/4"), (make_star(3), "1/4"),
                               (make_single_vertex(0), "1/8"), (make_single_vertex(1), "1/4"),
                               (make_line(4), "1/8")))


@given(st.integers(1, 300), st.integers(0, 2 ** 31))
def test_trace_matches_union_find(n, seed):
    g = generate(mixed, n, seed)
    t = explore(g, seed)
    assert keys(components_from_trace(t)) == keys(components_union_find(g))
    k = np.arange(1, len(t.tau) + 1)
    assert np.array_equal(t.Q[t.tau], -2 * k)


@given(st.lists(communities(max_vertices=4, max_out=3), min_size=1, max_size=12), st.integers(0, 999))
def test_trace_invariants(comms, seed):
    seq = CommunitySequence.from_communities(comms)
    if seq.ell % 2:
        seq = CommunitySequence.from_communities(comms + [make_single_vertex(1)])
    g = build_graph(seq, pair_half_edges(seq, seed))
    t = explore(g, seed)
    assert sorted(t.order.tolist()) == list(range(g.n))
    assert np.array_equal(np.diff(t.Q), t.degrees - 2 - 2 * t.cycles)
    assert np.all(t.cycles >= 0)
    assert t.Z[-1] == g.N
    comps = components_from_trace(t)
    assert sum(c.v for c in comps) == g.N
    for c in comps:
        assert 0 <= c.SPH <= c.SP
        assert c.SP == c.SPH + int(seq.internal_surplus[c.communities].sum())
        assert sum(c.vH_by_degree.values()) == c.vH
    assert keys(comps) == keys(components_union_find(g))


def test_trees_with_leaf_half_edges_have_sp_equal_sph():
    g = generate(CommunityDistribution(((make_star(3), "1/2"), (make_line(4), "1/2"))), 400, 1)
    for c in components_from_trace(explore(g, 1)):
        assert c.SP == c.SPH


def test_size_biased_start():
    # first community's shape frequency is proportional to d_H n_H
    comms = [make_single_vertex(1)] * 6 + [make_single_vertex(3)] * 2
    seq = CommunitySequence.from_communities(comms)
    g = build_graph(seq, pair_half_edges(seq, 0))
    reps = 4000
    first3 = sum(g.sequence.degrees[explore(g, s).order[0]] == 3 for s in range(reps))
    expected = np.array([6, 6]) / 12 * reps
    chi = stats.chisquare([reps - first3, first3], expected)
    assert chi.pvalue > 0.001


def test_cm_z_is_identity():
    g = generate(critical_cm_catalog(), 2000, 4)
    t = explore(g, 4)
    assert np.array_equal(t.Z, np.arange(g.n + 1))
    q, z = rescaled_walks(t, g.n, [0.0, 0.5])
    assert q[0] == 0 and z[0] == 0
    assert z_slope(t, g.n) == pytest.approx(1.0)


def test_household_z_slope():
    d = CommunityDistribution(((make_household(1), "1/2"), (make_household(3), "1/2")))
    target = d.moment(1, 1) / d.mean_degree
    n = 10 ** 5
    slopes = [z_slope(explore(generate(d, n, s), s), n) for s in range(5)]
    assert abs(np.mean(slopes) / target - 1) < 0.02


def test_z_drift_decreases_with_n():
    d = critical_household_catalog()
    target = d.moment(1, 1) / d.mean_degree
    med = []
    for n in (10 ** 3, 10 ** 4, 10 ** 5):
        errs = [z_drift_error(explore(generate(d, n, s), s), n, target) for s in range(50)]
        med.append(np.median(errs))
    assert med[0] > med[1] > med[2]


def test_csv_exports(tmp_path):
    t = explore(generate(mixed, 50, 3), 3)
    write_components_csv(t, tmp_path / "c.csv")
    write_walk_csv(t, tmp_path / "w.csv")
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert rows[0] == "k,tau_k,v,vH,SP,SPH" and len(rows) == len(t.tau) + 1
    assert len((tmp_path / "w.csv").read_text().splitlines()) == t.n + 2


def test_hitting_times_skip_odd_lows():
    assert hitting_times(np.array([0, 1, -1, -2, -3, -4])).tolist() == [3, 5]
