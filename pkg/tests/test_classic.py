import random
from itertools import combinations

import networkx as nx
import pytest

from src.classic import (
    bibliographic_coupling,
    co_citation,
    dispersion,
    normalize_scores,
    score_pairs,
)
from src.errors import GraphError
from src.graph import HeteroGraph, pcnet_view
from src.models import EdgeKind, NodeType


def _doc_graph(edges, extra=()):
    g = HeteroGraph()
    names = sorted({n for e in edges for n in e} | set(extra))
    for name in names:
        g.add_node(name, NodeType.DOCUMENT)
    for src, dst in edges:
        g.add_edge(src, dst, EdgeKind.CITATION)
    return g


def test_six_node_example_values(fig1_graph):
    assert bibliographic_coupling(fig1_graph, "d1", "d2") == pytest.approx(0.5)
    assert co_citation(fig1_graph, "d3", "d6") == pytest.approx(1 / 3)


def test_identical_disjoint_and_isolated():
    g = _doc_graph([("a", "x"), ("a", "y"), ("b", "x"), ("b", "y"), ("c", "z")], extra=["lone", "other"])
    assert bibliographic_coupling(g, "a", "b") == 1.0
    assert bibliographic_coupling(g, "a", "c") == 0.0
    assert bibliographic_coupling(g, "lone", "other") == 0.0
    assert co_citation(g, "lone", "other") == 0.0


def test_non_document_argument_is_rejected(toy_graph):
    with pytest.raises(GraphError):
        bibliographic_coupling(toy_graph, "d1", "sj")
    with pytest.raises(GraphError):
        dispersion(toy_graph, "A1", "d1")


def test_dispersion_counts_unlinked_common_neighbours():
    base = [("u", "s"), ("u", "t"), ("v", "s"), ("v", "t")]
    assert dispersion(_doc_graph(base), "u", "v") == 1.0
    assert dispersion(_doc_graph(base + [("s", "t")]), "u", "v") == 0.0
    assert dispersion(_doc_graph(base + [("s", "w"), ("t", "w")]), "u", "v") == 0.0


def test_dispersion_needs_two_common_neighbours(fig1_graph):
    assert dispersion(fig1_graph, "d1", "d2") == 0.0
    assert dispersion(fig1_graph, "d3", "d4") == 0.0


def test_normalize_scores():
    assert normalize_scores([2.0, 4.0, 6.0]) == [0.0, 0.5, 1.0]
    assert normalize_scores([3.0, 3.0]) == [0.0, 0.0]
    assert normalize_scores([]) == []


def test_score_pairs_normalizes_dispersion():
    g = _doc_graph([("u", "s"), ("u", "t"), ("v", "s"), ("v", "t")])
    scores = score_pairs(g, [("u", "v"), ("u", "s")], "dispersion")
    assert scores == [1.0, 0.0]
    with pytest.raises(GraphError):
        score_pairs(g, [("u", "v")], "pagerank")


def test_cocitation_same_on_full_graph_and_document_view(toy_graph):
    view = pcnet_view(toy_graph)
    docs = [ref.id for ref in view.nodes]
    for a, b in combinations(docs, 2):
        assert co_citation(toy_graph, a, b) == co_citation(view, a, b)


def test_statute_citations_change_coupling(toy_graph):
    assert bibliographic_coupling(toy_graph, "d1", "d3") == pytest.approx(1 / 3)
    assert bibliographic_coupling(pcnet_view(toy_graph), "d1", "d3") == 0.0


def _jaccard(left, right):
    union = left | right
    return len(left & right) / len(union) if union else 0.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_measures_match_brute_force_on_random_graphs(seed):
    rng = random.Random(seed)
    names = [f"d{i:02d}" for i in range(15)]
    oracle = nx.DiGraph()
    oracle.add_nodes_from(names)
    for a, b in combinations(names, 2):
        if rng.random() < 0.2:
            oracle.add_edge(*((a, b) if rng.random() < 0.5 else (b, a)))
    g = _doc_graph(list(oracle.edges()), extra=names)
    undirected = oracle.to_undirected()
    for a, b in combinations(names, 2):
        assert bibliographic_coupling(g, a, b) == pytest.approx(
            _jaccard(set(oracle.successors(a)), set(oracle.successors(b)))
        )
        assert co_citation(g, a, b) == pytest.approx(
            _jaccard(set(oracle.predecessors(a)), set(oracle.predecessors(b)))
        )
        assert bibliographic_coupling(g, a, b) == bibliographic_coupling(g, b, a)
        common = (set(undirected[a]) & set(undirected[b])) - {a, b}
        expected = 0
        for s, t in combinations(sorted(common), 2):
            ns = set(undirected[s]) - {a, b}
            nt = set(undirected[t]) - {a, b}
            if t not in ns and not (ns & nt):
                expected += 1
        assert dispersion(g, a, b) == expected
