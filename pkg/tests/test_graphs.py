import math

import numpy as np
import pytest

from consmix.graphs import (
    GraphGenerationError,
    Supergraph,
    complete_graph,
    generate_geometric,
    is_connected,
    link_distance,
    link_distance_matrix,
    link_index,
    path_graph,
)

from conftest import brute_link_distance


def test_two_node_graph_is_single_edge():
    g = generate_geometric(2, 0.9, seed=1)
    assert g.edges == ((0, 1),)
    assert g.num_links == 1
    assert is_connected(g)


def test_geometric_degree_target_and_connectivity():
    g = generate_geometric(30, 0.15, seed=7)
    avg = 2 * g.num_links / g.n
    assert 4.05 <= avg <= 4.95
    assert is_connected(g)
    assert g.positions.shape == (30, 2)
    assert np.all((g.positions >= 0) & (g.positions <= 1))


def test_geometric_rejects_degenerate_inputs():
    with pytest.raises(GraphGenerationError):
        generate_geometric(1, 0.5, seed=0)
    with pytest.raises(ValueError):
        generate_geometric(10, 1.5, seed=0)


def test_geometric_is_deterministic():
    a = generate_geometric(25, 0.2, seed=42)
    b = generate_geometric(25, 0.2, seed=42)
    assert a.edges == b.edges
    assert np.array_equal(a.positions, b.positions)
    assert a.radius == b.radius
    c = generate_geometric(25, 0.2, seed=43)
    assert c.edges != a.edges or not np.array_equal(c.positions, a.positions)


def test_link_index_examples():
    assert link_index(path_graph(3)).pairs == ((0, 1), (1, 2))
    assert link_index(complete_graph(3)).pairs == ((0, 1), (0, 2), (1, 2))
    assert link_index(complete_graph(3)).m == 3
    g2 = Supergraph(n=2, edges=((0, 1),))
    assert link_index(g2).pairs == ((0, 1),)


def test_link_index_is_bijection_on_random_graph():
    g = generate_geometric(20, 0.25, seed=3)
    idx = link_index(g)
    assert len(set(idx.pairs)) == idx.m
    assert set(idx.pairs) == set(g.edges)
    for l, pair in enumerate(idx.pairs):
        assert idx.link_id(*pair) == l
        assert idx.link_id(pair[1], pair[0]) == l


def test_link_distance_examples():
    g = path_graph(3)
    idx = link_index(g)
    assert link_distance(g, idx, 0, 0) == 0
    assert link_distance(g, idx, 0, 1) == 0  # shared node
    g4 = path_graph(4)
    idx4 = link_index(g4)
    l01 = idx4.link_id(0, 1)
    l23 = idx4.link_id(2, 3)
    assert link_distance(g4, idx4, l01, l23) == 1
    assert link_distance(g4, idx4, l23, l01) == 1


def test_link_distance_matches_bfs_oracle(rng):
    g = generate_geometric(15, 0.3, seed=9)
    idx = link_index(g)
    mat = link_distance_matrix(g, idx)
    ids = rng.choice(idx.m, size=min(idx.m, 8), replace=False)
    for a in ids:
        for b in ids:
            expected = brute_link_distance(g, idx.pairs[a], idx.pairs[b])
            assert mat[a, b] == expected
            assert link_distance(g, idx, int(a), int(b)) == expected


def test_link_distance_infinite_across_components():
    g = Supergraph(n=4, edges=((0, 1), (2, 3)))
    idx = link_index(g)
    assert math.isinf(link_distance(g, idx, 0, 1))


def test_link_distance_never_grows_when_edge_added():
    g = path_graph(6)
    idx = link_index(g)
    before = link_distance_matrix(g, idx)
    g_plus = Supergraph(n=6, edges=tuple(sorted(g.edges + ((0, 5),))))
    idx_plus = link_index(g_plus)
    lookup = {pair: k for k, pair in enumerate(idx_plus.pairs)}
    after = link_distance_matrix(g_plus, idx_plus)
    for a, pa in enumerate(idx.pairs):
        for b, pb in enumerate(idx.pairs):
            assert after[lookup[pa], lookup[pb]] <= before[a, b]


def test_is_connected_cases():
    assert is_connected(path_graph(3))
    assert not is_connected(Supergraph(n=2, edges=()))
    assert is_connected(Supergraph(n=1, edges=()))


def test_supergraph_validation():
    with pytest.raises(ValueError):
        Supergraph(n=3, edges=((0, 0),))
    with pytest.raises(ValueError):
        Supergraph(n=3, edges=((2, 1),))
    with pytest.raises(ValueError):
        Supergraph(n=2, edges=((0, 3),))


def test_json_round_trip():
    g = generate_geometric(12, 0.3, seed=4)
    back = Supergraph.from_json(g.to_json())
    assert back.n == g.n
    assert back.edges == g.edges
    assert np.allclose(back.positions, g.positions)
    assert back.radius == g.radius
