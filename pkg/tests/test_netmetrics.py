import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import netmetrics_oracle as oracle
from affectfusion import netmetrics as nm

TOL = 1e-12


def complete(n):
    return 1 - np.eye(n, dtype=int)


def star(n):
    a = np.zeros((n, n), dtype=int)
    a[0, 1:] = a[1:, 0] = 1
    return a


def path(n):
    a = np.zeros((n, n), dtype=int)
    for i in range(n - 1):
        a[i, i + 1] = a[i + 1, i] = 1
    return a


def random_graph(rng, n, p=None):
    p = rng.uniform(0.05, 0.9) if p is None else p
    upper = np.triu(rng.random((n, n)) < p, 1)
    return (upper | upper.T).astype(int)


def test_metric_names():
    assert len(nm.METRIC_NAMES) == 14
    assert nm.METRIC_NAMES[:3] == ("transitivity", "global_efficiency",
                                   "strength_correlation")
    assert nm.METRIC_NAMES[-1] == "edge_betweenness_mean"


def test_transitivity_examples():
    assert nm.transitivity(complete(4)) == 1.0
    assert nm.transitivity(star(4)) == 0.0
    assert nm.transitivity(np.zeros((3, 3))) == 0.0


def test_complete_graph_node_metrics():
    a = complete(5)
    assert np.all(nm.strength(a) == 4)
    assert np.all(nm.clustering(a) == 1)
    assert np.all(nm.node_betweenness(a) == 0)
    assert np.all(nm.local_efficiency(a) == 1)


def test_star_hub_betweenness():
    b = nm.node_betweenness(star(5))
    assert b[0] == 6.0
    assert np.all(b[1:] == 0)


def test_isolated_node_all_zero():
    a = np.zeros((4, 4), dtype=int)
    a[1, 2] = a[2, 1] = a[2, 3] = a[3, 2] = 1
    row = nm.node_metrics(a)[0]
    assert np.all(row == 0)


def test_global_efficiency_examples():
    assert nm.global_efficiency(complete(4)) == 1.0
    assert nm.global_efficiency(np.zeros((4, 4))) == 0.0
    # P4: ordered distances 1 x6, 2 x4, 3 x2
    assert nm.global_efficiency(path(4)) == pytest.approx((6 + 4 / 2 + 2 / 3) / 12, abs=TOL)
    two = np.zeros((4, 4), dtype=int)
    two[0, 1] = two[1, 0] = two[2, 3] = two[3, 2] = 1
    assert nm.global_efficiency(two) == pytest.approx(4 / 12, abs=TOL)


def test_edge_betweenness_examples():
    assert nm.edge_betweenness_mean(complete(2)) == 1.0
    assert nm.edge_betweenness_mean(complete(3)) == 1.0
    two = np.zeros((4, 4), dtype=int)
    two[0, 1] = two[1, 0] = two[2, 3] = two[3, 2] = 1
    assert nm.edge_betweenness_mean(two) == 1.0
    assert nm.edge_betweenness_mean(np.zeros((3, 3))) == 0.0


def test_strength_correlation_examples():
    assert nm.strength_correlation(star(5)) == pytest.approx(1.0, abs=TOL)
    assert nm.strength_correlation(path(5)) == pytest.approx(1.0, abs=TOL)
    assert nm.strength_correlation(complete(5)) == 0.0
    ring = np.roll(np.eye(6, dtype=int), 1, axis=1)
    assert nm.strength_correlation(ring + ring.T) == 0.0


def test_complete_six_vector():
    v = nm.metric_vector(complete(6))
    assert np.array_equal(v[:11], [1, 1, 0, 5, 0, 1, 0, 0, 0, 1, 0])
    assert v[-1] == 1.0
    assert np.allclose(v, oracle.metric_vector(complete(6)), atol=TOL, rtol=0)


def test_diversity_blocks():
    # with 4 nodes and 4 segments each node is its own block
    d = nm.diversity(complete(4))
    assert np.allclose(d, np.log(3) / np.log(4), atol=TOL)
    assert np.all(nm.diversity(np.zeros((5, 5))) == 0)


def test_metric_vector_needs_three_nodes():
    with pytest.raises(ValueError):
        nm.metric_vector(complete(2))


@pytest.mark.parametrize("bad", [
    np.ones((3, 3)),
    np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]]),
    np.zeros((2, 3)),
])
def test_rejects_bad_adjacency(bad):
    with pytest.raises(ValueError):
        nm.metric_vector(bad)


def _assert_matches_oracle(a):
    n = len(a)
    lists = [[int(v) for v in row] for row in a]
    node_b, _ = oracle.betweenness(lists)
    checks = [
        (nm.transitivity(a), oracle.transitivity(lists)),
        (nm.global_efficiency(a), oracle.efficiency(lists)),
        (nm.strength_correlation(a), oracle.strength_correlation(lists)),
        (nm.edge_betweenness_mean(a), oracle.edge_betweenness_mean(lists)),
    ]
    for got, want in checks:
        assert abs(got - want) <= TOL
    assert np.allclose(nm.local_efficiency(a), oracle.local_efficiency(lists), atol=TOL, rtol=0)
    assert np.allclose(nm.clustering(a), oracle.clustering(lists), atol=TOL, rtol=0)
    assert np.allclose(nm.node_betweenness(a), node_b, atol=TOL, rtol=0)
    assert np.allclose(nm.diversity(a), oracle.diversity(lists), atol=TOL, rtol=0)
    if n >= 3:
        assert np.allclose(nm.metric_vector(a), oracle.metric_vector(a), atol=TOL, rtol=0)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_exhaustive_small_graphs(n):
    for a in oracle.all_graphs(n):
        _assert_matches_oracle(a)


def test_random_graphs_against_oracle():
    rng = np.random.default_rng(0)
    for _ in range(300):
        _assert_matches_oracle(random_graph(rng, int(rng.integers(2, 7))))


def test_networkx_cross_check():
    rng = np.random.default_rng(1)
    for _ in range(40):
        n = int(rng.integers(3, 15))
        a = random_graph(rng, n)
        g = nx.from_numpy_array(a)
        assert nm.transitivity(a) == pytest.approx(nx.transitivity(g), abs=TOL)
        assert nm.global_efficiency(a) == pytest.approx(nx.global_efficiency(g), abs=TOL)
        cl = nx.clustering(g)
        assert np.allclose(nm.clustering(a), [cl[i] for i in range(n)], atol=TOL)
        bc = nx.betweenness_centrality(g, normalized=False)
        assert np.allclose(nm.node_betweenness(a), [bc[i] for i in range(n)], atol=TOL)
        eb = nx.edge_betweenness_centrality(g, normalized=False)
        want = np.mean(list(eb.values())) if eb else 0.0
        assert nm.edge_betweenness_mean(a) == pytest.approx(want, abs=TOL)
        # networkx averages local efficiency over nodes
        assert nm.local_efficiency(a).mean() == pytest.approx(nx.local_efficiency(g), abs=TOL)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(3, 50))
def test_permutation_invariance(seed, n):
    rng = np.random.default_rng(seed)
    a = random_graph(rng, n)
    perm = rng.permutation(n)
    v = nm.metric_vector(a)
    w = nm.metric_vector(a[np.ix_(perm, perm)])
    # diversity depends on node order through its index segments
    keep = [i for i, name in enumerate(nm.METRIC_NAMES) if not name.startswith("diversity")]
    assert np.allclose(v[keep], w[keep], atol=TOL, rtol=0)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(3, 50))
def test_bounds(seed, n):
    a = random_graph(np.random.default_rng(seed), n)
    v = dict(zip(nm.METRIC_NAMES, nm.metric_vector(a)))
    for name in ("transitivity", "global_efficiency", "local_efficiency_mean",
                 "clustering_mean", "diversity_mean"):
        assert -TOL <= v[name] <= 1 + TOL
    assert -1 - TOL <= v["strength_correlation"] <= 1 + TOL
    assert 0 <= v["strength_mean"] <= n - 1
    assert 0 <= v["node_betweenness_mean"] <= (n - 1) * (n - 2) / 2
    assert all(v[k] >= 0 for k in v if k.endswith("_sd"))
