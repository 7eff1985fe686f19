import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import random_graph
from netwatch.errors import MissingPredecessor, OrderMismatch
from netwatch.graph import DirectedGraph, new_graph
from netwatch.stats import (
    MONITORED,
    TRIAD_NAMES,
    Term,
    TermSet,
    change_stat_matrices,
    change_stats,
    compute_stats,
    degree_distribution,
    descriptive,
    esp_distribution,
    geodesic_distribution,
    triad_census,
)

ALL = TermSet.parse("edges,triangles,asymmetric,mutual,stability")
graphs = st.builds(
    lambda n, seed, d: random_graph(np.random.default_rng(seed), n, d),
    st.integers(2, 9), st.integers(0, 2**32 - 1), st.floats(0.0, 1.0),
)


def complete(n):
    return new_graph(n).complement()


def test_termset_parsing():
    ts = TermSet.parse("edges + triangles, stability")
    assert ts.terms == (Term.EDGES, Term.TRIANGLES, Term.STABILITY)
    assert ts.needs_predecessor
    with pytest.raises(ValueError):
        TermSet.parse("edges,edges")
    with pytest.raises(ValueError):
        TermSet.parse("kstar")


def test_complete_digraph_counts():
    s = compute_stats(TermSet.parse("edges,asymmetric,mutual"), complete(3))
    assert s.tolist() == [6, 0, 3]


def test_stability_of_identical_graphs_is_all_cells():
    g = random_graph(np.random.default_rng(1), 100, 0.2)
    assert compute_stats(TermSet.parse("stability"), g, g)[0] == 9900


def test_three_cycle_triangle_count():
    g = DirectedGraph(np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=bool))
    # brute-force triple enumeration gives one cyclic triad and no transitive triple
    assert oracles.triangles(oracles.adj_list(g)) == 1
    assert compute_stats(TermSet.parse("triangles"), g)[0] == 1


def test_stats_match_enumeration_oracle(rng):
    for _ in range(30):
        n = int(rng.integers(2, 10))
        y, yp = random_graph(rng, n, rng.random()), random_graph(rng, n, rng.random())
        expect = oracles.stats(ALL.names, oracles.adj_list(y), oracles.adj_list(yp))
        assert compute_stats(ALL, y, yp).tolist() == expect


def test_missing_predecessor_and_order_mismatch():
    with pytest.raises(MissingPredecessor):
        compute_stats(MONITORED, new_graph(3))
    with pytest.raises(OrderMismatch):
        compute_stats(MONITORED, new_graph(3), new_graph(4))


def brute_change(terms, y, yp, i, j):
    a = y.adjacency.copy()
    a[i, j] = True
    plus = compute_stats(terms, DirectedGraph(a), yp)
    a[i, j] = False
    minus = compute_stats(terms, DirectedGraph(a), yp)
    return plus - minus


def test_change_stats_equal_brute_force_differences(rng):
    for _ in range(50):
        n = int(rng.integers(2, 11))
        y, yp = random_graph(rng, n, rng.random()), random_graph(rng, n, rng.random())
        delta = change_stat_matrices(ALL, y, yp)
        for i in range(n):
            for j in range(n):
                if i != j:
                    assert np.array_equal(delta[:, i, j], brute_change(ALL, y, yp, i, j))
        assert not delta[:, np.arange(n), np.arange(n)].any()


def test_change_stats_dyad_cases():
    y = DirectedGraph(np.array([[0, 0, 0], [1, 0, 0], [0, 0, 0]], dtype=bool))
    ts = TermSet.parse("edges,asymmetric,mutual")
    assert change_stats(ts, y, None, 0, 1).tolist() == [1, -1, 1]
    assert change_stats(ts, y, None, 0, 2).tolist() == [1, 1, 0]
    with pytest.raises(ValueError):
        change_stats(ts, y, None, 1, 1)


@settings(max_examples=60, deadline=None)
@given(graphs)
def test_dyad_census_identities(g):
    n = g.n_nodes
    e, asym, mut = compute_stats(TermSet.parse("edges,asymmetric,mutual"), g)
    assert 0 <= asym + mut <= n * (n - 1) / 2
    assert e == 2 * mut + asym


@settings(max_examples=60, deadline=None)
@given(graphs)
def test_stability_bounds(g):
    st_ = TermSet.parse("stability")
    n = g.n_nodes
    assert compute_stats(st_, g, g)[0] == n * (n - 1)
    assert compute_stats(st_, g, g.complement())[0] == 0


@settings(max_examples=60, deadline=None)
@given(graphs, st.integers(0, 2**32 - 1))
def test_triangles_invariant_under_relabeling(g, seed):
    perm = np.random.default_rng(seed).permutation(g.n_nodes)
    ts = TermSet.parse("triangles")
    assert compute_stats(ts, g) == compute_stats(ts, g.permuted(perm))


def test_descriptive_examples():
    d = descriptive(complete(4))
    assert (d.density, d.reciprocity, d.transitivity) == (1.0, 1.0, 1.0)
    a = np.zeros((4, 4), dtype=bool)
    a[0, 1] = a[1, 0] = a[2, 3] = True
    assert descriptive(DirectedGraph(a)).reciprocity == pytest.approx(2 / 3)
    empty = descriptive(new_graph(3))
    assert empty.reciprocity == 1.0 and empty.transitivity == 0.0 and len(empty.flags) == 2


def test_transitivity_matches_triple_oracle(rng):
    for _ in range(20):
        g = random_graph(rng, 8, rng.random())
        assert descriptive(g).transitivity == pytest.approx(oracles.transitivity(oracles.adj_list(g)), abs=1e-12)


def test_triad_census_matches_networkx(rng):
    for n in (3, 5, 12, 30):
        g = random_graph(rng, n, 0.3)
        ref = nx.triadic_census(nx.from_numpy_array(g.adjacency.astype(int), create_using=nx.DiGraph))
        assert triad_census(g).tolist() == [ref[name] for name in TRIAD_NAMES]


def test_geodesics_match_networkx(rng):
    g = random_graph(rng, 15, 0.1)
    dg = nx.from_numpy_array(g.adjacency.astype(int), create_using=nx.DiGraph)
    lengths = dict(nx.all_pairs_shortest_path_length(dg))
    counts = np.zeros(15, dtype=int)
    for i in range(15):
        for j in range(15):
            if i != j:
                d = lengths[i].get(j)
                counts[-1 if d is None else d - 1] += 1
    assert geodesic_distribution(g).tolist() == counts.tolist()
    assert geodesic_distribution(new_graph(4)).tolist() == [0, 0, 0, 12]


def test_degree_and_esp_distributions(rng):
    g = random_graph(rng, 10, 0.4)
    a = g.adjacency.astype(int)
    assert degree_distribution(g, "in").sum() == 10
    assert np.array_equal(np.repeat(np.arange(10), degree_distribution(g, "out")), np.sort(a.sum(1)))
    esp = np.zeros(9, dtype=int)
    for i, j in g.edges():
        esp[sum(a[i, k] * a[k, j] for k in range(10))] += 1
    assert esp_distribution(g).tolist() == esp.tolist()
