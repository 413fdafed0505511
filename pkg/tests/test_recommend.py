import random
from itertools import combinations

import pytest

from src.embed import EmbeddingTable
from src.errors import FusionError, GraphError, UnknownNodeError
from src.fuse import FusionState
from src.graph import HeteroGraph
from src.models import EdgeKind, NodeType
from src.recommend import make_scorer, recommend, same_group_fraction


def _doc_graph(names, edges):
    g = HeteroGraph()
    for name in names:
        g.add_node(name, NodeType.DOCUMENT)
    for src, dst in edges:
        g.add_edge(src, dst, EdgeKind.CITATION)
    return g


def test_nothing_left_to_recommend():
    g = _doc_graph(["a", "b"], [("a", "b")])
    rec = recommend(g, make_scorer("bibcoupling", graph=g), "a", 3)
    assert rec.ranked == []
    assert same_group_fraction(rec, {"a": "x", "b": "x"}) == 0.0


def test_top_k_contract(fig1_graph):
    rec = recommend(fig1_graph, make_scorer("cocitation", graph=fig1_graph), "d1", 3)
    assert rec.source_id == "d1"
    assert len(rec.ranked) == 3
    ids = [doc_id for doc_id, _ in rec.ranked]
    assert "d1" not in ids and "d6" not in ids
    keys = [(-score, doc_id) for doc_id, score in rec.ranked]
    assert keys == sorted(keys)


def test_request_errors(toy_graph):
    scorer = make_scorer("bibcoupling", graph=toy_graph)
    with pytest.raises(UnknownNodeError):
        recommend(toy_graph, scorer, "nobody", 3)
    with pytest.raises(GraphError):
        recommend(toy_graph, scorer, "sj", 3)
    with pytest.raises(GraphError):
        recommend(toy_graph, scorer, "d1", 0)


def test_scorer_requirements():
    with pytest.raises(GraphError):
        make_scorer("dispersion")
    with pytest.raises(FusionError):
        make_scorer("text")
    with pytest.raises(FusionError):
        make_scorer("pagerank", state=FusionState())


def test_embedding_scorer_ranks_by_cosine():
    g = _doc_graph(["a", "b", "c"], [])
    table = EmbeddingTable(["a", "b", "c"], [[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]])
    rec = recommend(g, make_scorer("text", state=FusionState(text_emb=table)), "a", 2)
    assert [doc_id for doc_id, _ in rec.ranked] == ["b", "c"]


@pytest.mark.parametrize("seed", range(5))
def test_cited_documents_never_recommended(seed):
    rng = random.Random(seed)
    names = [f"d{i:02d}" for i in range(12)]
    edges = [(a, b) if rng.random() < 0.5 else (b, a) for a, b in combinations(names, 2) if rng.random() < 0.25]
    g = _doc_graph(names, edges)
    scorer = make_scorer("bibcoupling", graph=g)
    for source in names:
        linked = {b for a, b in edges if a == source} | {a for a, b in edges if b == source}
        rec = recommend(g, scorer, source, 4)
        ids = {doc_id for doc_id, _ in rec.ranked}
        assert not ids & linked
        assert source not in ids
        assert len(rec.ranked) == min(4, len(names) - 1 - len(linked))


@pytest.mark.parametrize("measure", ["bibcoupling", "cocitation", "dispersion"])
def test_structural_recommendations_stay_in_planted_community(planted, measure):
    corpus, _, _, g = planted
    scorer = make_scorer(measure, graph=g)
    fractions = []
    for ref in g.nodes_of_type(NodeType.DOCUMENT):
        rec = recommend(g, scorer, ref.id, 3)
        for doc_id, score in rec.ranked:
            if score > 0:
                assert corpus.community_of[doc_id] == corpus.community_of[ref.id]
        fractions.append(same_group_fraction(rec, corpus.community_of))
    if measure == "bibcoupling":
        assert sum(fractions) / len(fractions) >= 0.9


def test_candidate_without_embedding_scores_zero(caplog):
    g = _doc_graph(["a", "b", "c", "lonely"], [("a", "b"), ("c", "b")])
    table = EmbeddingTable(["a", "b", "c"], [[1.0, 0.0], [0.0, 1.0], [1.0, 0.1]])
    scorer = make_scorer("network", state=FusionState(net_emb=table))
    with caplog.at_level("WARNING", logger="src.recommend"):
        rec = recommend(g, scorer, "a", 3)
    assert [doc_id for doc_id, _ in rec.ranked] == ["c", "lonely"]
    assert rec.ranked[1][1] == 0.0
    assert [r.id for r in caplog.records if r.levelname == "WARNING"] == ["lonely"]
