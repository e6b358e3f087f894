from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsqswarm.errors import AssumptionViolated, GraphShapeError, ParseError
from lsqswarm.numerics import numerical_rank
from lsqswarm.topology import (
    DoubleLayerNetwork,
    GridNetwork,
    assert_assumptions,
    complete_graph,
    cycle_graph,
    erdos_renyi,
    graph_from_edges,
    is_connected,
    laplacian,
    network_edge_lists,
    parse_graph,
    path_graph,
    standard_double_layer,
    standard_grid,
)


@st.composite
def graphs(draw, max_nodes=8):
    k = draw(st.integers(1, max_nodes))
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    edges = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    return graph_from_edges(k, edges)


class TestGraph:
    def test_path(self):
        assert graph_from_edges(3, [(0, 1), (1, 2)]) == path_graph(3)

    def test_duplicate_edges_collapse(self):
        assert graph_from_edges(3, [(0, 1), (1, 0)]).edges == {(0, 1)}

    def test_cycle(self):
        assert graph_from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)]) == cycle_graph(4)

    def test_out_of_range(self):
        with pytest.raises(GraphShapeError):
            graph_from_edges(2, [(0, 2)])

    def test_self_loop(self):
        with pytest.raises(GraphShapeError):
            graph_from_edges(2, [(1, 1)])

    def test_neighbors_and_degree(self):
        g = path_graph(3)
        assert g.neighbors(1) == (0, 2)
        assert g.degree(0) == 1


class TestLaplacian:
    def test_p2(self):
        np.testing.assert_array_equal(laplacian(path_graph(2)), [[1, -1], [-1, 1]])

    def test_c3(self):
        np.testing.assert_array_equal(laplacian(cycle_graph(3)), [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]])

    def test_p3_spectrum(self):
        np.testing.assert_allclose(np.linalg.eigvalsh(laplacian(path_graph(3))), [0, 1, 3], atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(graphs())
    def test_laplacian_properties(self, g):
        L = laplacian(g)
        np.testing.assert_array_equal(L, L.T)
        np.testing.assert_allclose(L @ np.ones(g.node_count), 0)
        assert np.linalg.eigvalsh(L).min() >= -1e-12

    @settings(max_examples=100, deadline=None)
    @given(graphs())
    def test_connectivity_matches_rank(self, g):
        assert is_connected(g) == (numerical_rank(laplacian(g), 1e-10) == g.node_count - 1)


class TestConnectivity:
    def test_path_connected(self):
        assert is_connected(path_graph(3))

    def test_two_isolated_nodes(self):
        assert not is_connected(graph_from_edges(2, []))

    def test_single_node(self):
        assert is_connected(graph_from_edges(1, []))

    def test_erdos_renyi_seeded_and_connected(self):
        a = erdos_renyi(6, 0.3, np.random.default_rng(5))
        b = erdos_renyi(6, 0.3, np.random.default_rng(5))
        assert a == b and is_connected(a)

    def test_erdos_renyi_tiny_p_still_connected(self):
        assert is_connected(erdos_renyi(5, 0.0, np.random.default_rng(1)))


class TestNetworks:
    def test_standard_grid_2x2(self):
        net = standard_grid(2, 2)
        assert net.row_graphs == (path_graph(2),) * 2
        assert net.col_graphs == (path_graph(2),) * 2

    def test_standard_grid_shape(self):
        net = standard_grid(4, 3)
        assert len(net.row_graphs) == 4 and all(g.node_count == 3 for g in net.row_graphs)
        assert len(net.col_graphs) == 3 and all(g.node_count == 4 for g in net.col_graphs)

    @pytest.mark.parametrize("m", range(1, 21))
    def test_standard_grid_satisfies_assumption(self, m):
        for n in range(1, 21):
            assert_assumptions(standard_grid(m, n))

    def test_grid_wrong_graph_size(self):
        with pytest.raises(GraphShapeError):
            GridNetwork(2, 2, (path_graph(2), path_graph(3)), (path_graph(2),) * 2)

    def test_disconnected_column(self):
        net = GridNetwork(2, 2, (path_graph(2),) * 2, (path_graph(2), graph_from_edges(2, [])))
        with pytest.raises(AssumptionViolated) as exc:
            assert_assumptions(net)
        assert exc.value.which == "col:1"

    def test_disconnected_cluster_graph(self):
        net = DoubleLayerNetwork(graph_from_edges(2, []), (path_graph(2), path_graph(1)))
        with pytest.raises(AssumptionViolated) as exc:
            assert_assumptions(net)
        assert exc.value.which == "cluster"

    def test_disconnected_intra_graph(self):
        intra = (path_graph(2), path_graph(3), graph_from_edges(3, [(0, 1)]))
        with pytest.raises(AssumptionViolated) as exc:
            assert_assumptions(DoubleLayerNetwork(path_graph(3), intra))
        assert exc.value.which == "intra:2"

    def test_double_layer_count_mismatch(self):
        with pytest.raises(GraphShapeError):
            DoubleLayerNetwork(path_graph(3), (path_graph(2),))

    def test_cluster_sizes(self):
        assert standard_double_layer([3, 2, 3]).cluster_sizes == (3, 2, 3)

    def test_edge_lists(self):
        d = network_edge_lists(standard_double_layer([2, 1]))
        assert d["cluster"] == {"nodes": 2, "edges": [[0, 1]]}
        assert d["intra"][1] == {"nodes": 1, "edges": []}


class TestGraphText:
    def test_round_trip(self):
        g = complete_graph(4)
        assert parse_graph(g.to_text()) == g

    def test_bad_header(self):
        with pytest.raises(ParseError) as exc:
            parse_graph("vertices 3\n")
        assert exc.value.line == 1

    def test_bad_edge_line(self):
        with pytest.raises(ParseError) as exc:
            parse_graph("nodes 3\n0 1\n1 2 3\n")
        assert exc.value.line == 3

    def test_out_of_range_edge(self):
        with pytest.raises(ParseError):
            parse_graph("nodes 2\n0 5\n")
