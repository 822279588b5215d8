import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import ball_size_grid_interior, brute_force_clusters, pauli_word
from qdobrushin.lattice import (ClusterCapExceeded, HamiltonianSpec, Term, build_graph, chain,
                                check_series_bounds, cluster_support_counts, enumerate_clusters, grid, heisenberg,
                                is_cluster_from, make_model, measure_params, tfim)


def path_spec(n):
    return HamiltonianSpec(n, tuple(Term((i, i + 1), pauli_word("ZZ")) for i in range(n - 1)))


def test_dual_graph_of_four_site_chain_is_a_path():
    g = build_graph(path_spec(4))
    assert [sorted(a) for a in g.term_adj] == [[1], [0, 2], [1]]


def test_distance_counts_terms():
    g = build_graph(path_spec(4))
    assert g.dist[0, 2] == 2
    assert g.dist[0, 3] == 3
    single = build_graph(HamiltonianSpec(2, (Term((0, 1), pauli_word("XX")),)))
    assert single.dist[0, 1] == 1


def test_disconnected_supports_allowed_and_empty_rejected():
    spec = HamiltonianSpec(4, (Term((0, 1), pauli_word("ZZ")), Term((2, 3), pauli_word("ZZ"))))
    g = build_graph(spec)
    assert math.isinf(g.dist[0, 3])
    with pytest.raises(ValueError):
        HamiltonianSpec(3, ())


def test_spec_validation():
    with pytest.raises(ValueError):
        HamiltonianSpec(2, (Term((0, 1), 2 * pauli_word("ZZ")),))
    with pytest.raises(ValueError):
        HamiltonianSpec(2, (Term((0, 1), np.triu(np.ones((4, 4)))),))
    with pytest.raises(ValueError):
        HamiltonianSpec(2, (Term((0, 2), pauli_word("ZZ")),))


def test_chain_parameters():
    p = measure_params(build_graph(chain(8, seed=0)))
    assert (p.locality, p.degree) == (2, 2)
    assert p.growth == pytest.approx(3.0)
    assert p.power == pytest.approx(math.log2(3))


def test_grid_interior_ball_sizes():
    g = build_graph(grid(9, 9))
    centre = 4 * 9 + 4
    for r in range(5):
        assert len(g.ball(centre, r)) == ball_size_grid_interior(r)
    p = measure_params(g)
    assert (p.locality, p.degree) == (2, 6)
    assert p.growth == pytest.approx(5.0)


@given(st.integers(3, 9), st.integers(0, 4))
def test_ball_bounds_hold(n, seed):
    g = build_graph(chain(n, seed=seed))
    p = measure_params(g)
    for i in range(n):
        for r in range(1, g.diameter + 1):
            size = len(g.ball(i, r))
            assert size <= p.growth ** r * (1 + 1e-12)
            assert size <= (1 + r) ** p.power * (1 + 1e-12)


def test_single_term_clusters_from_a_chain_term():
    g = build_graph(chain(6, seed=0))
    params = measure_params(g)
    ones = [c for c in enumerate_clusters(g, 1, term=2)]
    assert len(ones) == params.degree + 1 == 3
    assert any(c.seq == (2,) for c in ones)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_cluster_enumeration_matches_brute_force(k):
    g = build_graph(chain(6, seed=1))
    supports = [sorted(S) for S in g.supports]
    root = g.supports[2]
    ours = [c for c in enumerate_clusters(g, k, term=2) if c.k == k]
    assert len(ours) == brute_force_clusters(supports, root, k)
    assert all(is_cluster_from(g, c.seq, root) for c in ours)
    counts = cluster_support_counts(g, root, k)
    assert sum(counts[k - 1].values()) == len(ours)


def test_two_term_cluster_count_bound():
    g = build_graph(chain(10, seed=0))
    d = measure_params(g).degree
    for a in range(len(g.supports)):
        n2 = len([c for c in enumerate_clusters(g, 2, term=a) if c.k == 2])
        assert n2 <= math.e ** 2 * (math.e * d) * 2


def test_grid_cluster_support_counts_frozen():
    # ordered clusters from one interior grid site, sizes 1..4
    g = build_graph(grid(9, 9))
    counts = cluster_support_counts(g, [40], 4)
    assert [len(layer) for layer in counts] == [4, 22, 98, 413]


def test_cluster_cap():
    g = build_graph(grid(5, 5))
    with pytest.raises(ClusterCapExceeded):
        enumerate_clusters(g, 4, sites=[12], cap=100)


def test_series_bounds_on_chain():
    g = build_graph(chain(8, seed=0))
    rep = check_series_bounds(g, 0.05, k_max=4)
    assert rep["passed"]
    had = [c for c in rep["checks"] if c[0] == "hadamard"]
    assert all(lhs <= 1 / (1 - 0.3) for _, _, lhs, _ in had)
    zero = check_series_bounds(g, 0.0, k_max=3)
    assert all(c[2] == 1.0 for c in zero["checks"] if c[0] == "hadamard")
    with pytest.raises(ValueError):
        check_series_bounds(g, 0.2)


def test_generators_and_roundtrip():
    for spec in (tfim(5, 0.1), heisenberg(4, 0.2), make_model("grid", Lx=2, Ly=3, beta=0.1),
                 make_model("chain", n=4, seed=3)):
        again = HamiltonianSpec.from_dict(spec.to_dict())
        assert again.content_hash() == spec.content_hash()
        assert np.allclose(again.dense(), spec.dense())
    assert chain(5, seed=7).content_hash() == chain(5, seed=7).content_hash()
    assert chain(5, seed=7).content_hash() != chain(5, seed=8).content_hash()


def test_pauli_entries_in_spec_dict():
    spec = HamiltonianSpec.from_dict({"n": 2, "terms": [{"support": [0, 1], "pauli": "XZ", "coeff": 0.5}]})
    assert np.allclose(spec.dense(), 0.5 * pauli_word("XZ"))
