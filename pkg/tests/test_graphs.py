"""Graphs, incidence matrices, Laplacians and family enumeration."""

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netident.graphs import (FamilyTooLarge, Graph, GraphError, GraphFamily, enumerate_family,
                             family_size, format_graph, graph_from_laplacian, incidence,
                             laplacian, parse_graph)


def graphs(max_n=6):
    @st.composite
    def build(draw):
        n = draw(st.integers(1, max_n))
        pairs = list(itertools.combinations(range(1, n + 1), 2))
        chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
        return Graph(n, tuple(chosen))
    return build()


def weights_for(g, draw):
    return [Fraction(draw(st.integers(1, 9)), draw(st.integers(1, 9))) for _ in g.edges]


def _bfs_connected(g):
    """Independent connectivity oracle."""
    adj = {v: set() for v in range(1, g.n + 1)}
    for i, j in g.edges:
        adj[i].add(j)
        adj[j].add(i)
    seen, todo = {1}, [1]
    while todo:
        for u in adj[todo.pop()] - seen:
            seen.add(u)
            todo.append(u)
    return len(seen) == g.n


class TestGraph:
    def test_canonical_form(self):
        g = Graph(3, ((3, 2), (1, 2)))
        assert g.edges == ((1, 2), (2, 3))
        assert g == Graph(3, ((1, 2), (2, 3)))

    @pytest.mark.parametrize("edges", [((1, 1),), ((1, 4),), ((1, 2), (2, 1)), ((0, 1),)])
    def test_invalid(self, edges):
        with pytest.raises(GraphError):
            Graph(3, edges)

    def test_key_round_trip(self):
        for key in range(64):
            g = Graph.from_key(4, key)
            assert g.key() == key
            assert Graph.from_key(4, g.key_string()) == g

    def test_key_string_orders_pairs(self):
        assert Graph(3, ((1, 2),)).key_string() == "100"
        assert Graph(3, ((2, 3),)).key_string() == "001"

    def test_text_round_trip(self):
        g = Graph(5, ((1, 2), (2, 5), (3, 4)))
        assert parse_graph(format_graph(g)) == g
        assert parse_graph("# path\nn=3\n1 2  # first\n2 3\n") == Graph(3, ((1, 2), (2, 3)))

    def test_parse_rejects_missing_header(self):
        with pytest.raises(GraphError):
            parse_graph("1 2\n")

    def test_without_and_with(self):
        g = Graph(3, ((1, 2), (2, 3)))
        assert g.without((2, 1)) == Graph(3, ((2, 3),))
        assert g.with_edges((1, 3)).m == 3
        with pytest.raises(GraphError):
            g.without((1, 3))


class TestIncidence:
    def test_single_edge(self):
        assert incidence(Graph(2, ((1, 2),))).tolist() == [[1], [-1]]

    def test_path(self):
        assert incidence(Graph(3, ((1, 2), (2, 3)))).tolist() == [[1, 0], [-1, 1], [0, -1]]

    def test_empty(self):
        assert incidence(Graph(3)).shape == (3, 0)

    @given(graphs())
    def test_columns(self, g):
        E = incidence(g)
        for k, (i, j) in enumerate(g.edges):
            col = E[:, k]
            assert col[i - 1] == 1 and col[j - 1] == -1
            assert np.count_nonzero(col) == 2


class TestLaplacian:
    def test_path(self):
        L = laplacian(Graph(3, ((1, 2), (2, 3))), [1, 1])
        assert L.tolist() == [[1, -1, 0], [-1, 2, -1], [0, -1, 1]]

    def test_empty(self):
        assert not np.any(laplacian(Graph(3), []))

    def test_scaled_edge(self):
        assert laplacian(Graph(2, ((1, 2),)), [2]).tolist() == [[2, -2], [-2, 2]]

    def test_errors(self):
        g = Graph(3, ((1, 2), (2, 3)))
        with pytest.raises(GraphError):
            laplacian(g, [1])
        with pytest.raises(GraphError):
            laplacian(g, [1, 0])
        with pytest.raises(GraphError):
            laplacian(g, [1, Fraction(-1, 2)])

    def test_matches_incidence_product(self):
        g = Graph(4, ((1, 2), (1, 4), (2, 3), (3, 4)))
        b = [1.0, 2.0, 0.5, 3.0]
        E = incidence(g)
        assert np.allclose(laplacian(g, b), E @ np.diag(b) @ E.T)

    @settings(max_examples=60)
    @given(st.data())
    def test_properties(self, data):
        g = data.draw(graphs())
        b = weights_for(g, data.draw)
        L = laplacian(g, b)
        assert all(v == 0 for v in L.sum(axis=1))
        assert np.array_equal(L, L.T)
        eig = np.linalg.eigvalsh(np.array(L, dtype=float))
        assert eig.min() > -1e-9
        if g.is_connected():
            assert np.linalg.matrix_rank(np.array(L, dtype=float)) == g.n - 1

    @settings(max_examples=60)
    @given(st.data())
    def test_exact_round_trip(self, data):
        g = data.draw(graphs())
        b = weights_for(g, data.draw)
        h, w = graph_from_laplacian(laplacian(g, b), 0)
        assert h == g and w == b


class TestGraphFromLaplacian:
    def test_path(self):
        g, w = graph_from_laplacian([[1, -1, 0], [-1, 2, -1], [0, -1, 1]], tol=1e-9)
        assert g == Graph(3, ((1, 2), (2, 3))) and w == [1, 1]

    def test_zero(self):
        g, w = graph_from_laplacian(np.zeros((4, 4)))
        assert g == Graph(4) and w == []

    def test_random_five_node_round_trip(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            g = Graph.from_key(5, int(rng.integers(0, 2 ** 10)))
            b = [Fraction(1, int(rng.choice([2, 3]))) for _ in g.edges]
            assert graph_from_laplacian(laplacian(g, b)) == (g, b)

    def test_tolerance(self):
        L = np.array([[1.0, -1.0 + 1e-12, 1e-13], [-1.0, 1.0, 0], [1e-13, 0, 0]])
        g, _ = graph_from_laplacian(L, tol=1e-9)
        assert g == Graph(3, ((1, 2),))

    def test_asymmetric(self):
        with pytest.raises(GraphError):
            graph_from_laplacian([[1, -1], [-2, 2]])

    def test_positive_off_diagonal(self):
        with pytest.raises(GraphError):
            graph_from_laplacian([[0, 1], [1, 0]])


class TestFamilies:
    @pytest.mark.parametrize("n", range(1, 7))
    def test_all_count(self, n):
        assert sum(1 for _ in enumerate_family(GraphFamily.all(n))) == 2 ** (n * (n - 1) // 2)

    def test_small_families(self):
        assert len(list(enumerate_family(GraphFamily.all(2)))) == 2
        assert len(list(enumerate_family(GraphFamily.all(3)))) == 8
        connected = list(enumerate_family(GraphFamily.connected(3)))
        assert len(connected) == 4
        assert sorted(g.m for g in connected) == [2, 2, 2, 3]

    @pytest.mark.parametrize("n", [4, 5])
    def test_connected_matches_oracle(self, n):
        fam = list(enumerate_family(GraphFamily.connected(n)))
        oracle = [g for g in enumerate_family(GraphFamily.all(n)) if _bfs_connected(g)]
        assert fam == oracle
        assert all(g in GraphFamily.connected(n) for g in fam)

    def test_deterministic_and_unique(self):
        a = list(enumerate_family(GraphFamily.all(4)))
        assert a == list(enumerate_family(GraphFamily.all(4)))
        assert len(set(a)) == len(a)
        assert [g.key() for g in a] == sorted(g.key() for g in a)

    def test_index_slices_partition(self):
        fam = GraphFamily.connected(4)
        whole = list(enumerate_family(fam))
        parts = [g for s in range(0, 64, 10) for g in enumerate_family(fam, start=s, stop=s + 10)]
        assert parts == whole

    def test_subgraphs(self):
        host = Graph(4, ((1, 2), (2, 3), (3, 4)))
        fam = GraphFamily.subgraphs_of(host)
        members = list(enumerate_family(fam))
        assert len(members) == 8 and all(g.is_subgraph_of(host) for g in members)
        assert Graph(4, ((1, 3),)) not in fam

    def test_explicit_dedupes(self):
        g = Graph(3, ((1, 2),))
        fam = GraphFamily.explicit([g, Graph(3), g])
        assert list(enumerate_family(fam)) == [g, Graph(3)]

    def test_cap(self):
        with pytest.raises(FamilyTooLarge):
            list(enumerate_family(GraphFamily.all(8)))
        with pytest.raises(FamilyTooLarge):
            family_size(GraphFamily.all(5), cap=100)

    @pytest.mark.parametrize("fam", [GraphFamily.all(3), GraphFamily.connected(4),
                                     GraphFamily.subgraphs_of(Graph(3, ((1, 2),))),
                                     GraphFamily.explicit([Graph(3), Graph(3, ((2, 3),))])])
    def test_spec_round_trip(self, fam):
        assert GraphFamily.from_spec(fam.spec()) == fam
