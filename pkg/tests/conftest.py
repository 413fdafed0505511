import pytest

from src.config import get_settings
from src.corpus import load_act_registry, parse_corpus
from src.graph import HeteroGraph, build_hier_spcnet
from src.models import CaseDocument, CaseType, EdgeKind, NodeType, StatuteNode
from src.synthetic import SyntheticSpec, generate_synthetic_corpus


@pytest.fixture(autouse=True)
def _fresh_settings():
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def fig1_graph() -> HeteroGraph:
    """Six documents: d1->d6, d2->d3, d2->d6, d4->d5, d5->d6."""
    g = HeteroGraph()
    for i in range(1, 7):
        g.add_node(f"d{i}", NodeType.DOCUMENT)
    for src, dst in [("d1", "d6"), ("d2", "d3"), ("d2", "d6"), ("d4", "d5"), ("d5", "d6")]:
        g.add_edge(src, dst, EdgeKind.CITATION)
    return g


def toy_records():
    """Two acts with full hierarchies; d1 and d3 both cite section sj."""
    statutes = [
        StatuteNode("A1", NodeType.ACT, title="Harbour Regulation Act, 1901"),
        StatuteNode("A1_p1", NodeType.PART, title="Part I", parent_id="A1"),
        StatuteNode("A1_c1", NodeType.CHAPTER, title="Chapter 1", parent_id="A1_p1"),
        StatuteNode("A1_t1", NodeType.TOPIC, title="Topic 1", parent_id="A1_c1"),
        StatuteNode("si", NodeType.SECTION, title="Section 1", parent_id="A1_t1", number=1),
        StatuteNode("sj", NodeType.SECTION, title="Section 2", parent_id="A1_t1", number=2, cited_statutes={"si"}),
        StatuteNode("A2", NodeType.ACT, title="Forest Control Act, 1904", cited_statutes={"A1"}),
        StatuteNode("A2_p1", NodeType.PART, title="Part I", parent_id="A2"),
        StatuteNode("A2_c1", NodeType.CHAPTER, title="Chapter 1", parent_id="A2_p1"),
        StatuteNode("A2_t1", NodeType.TOPIC, title="Topic 1", parent_id="A2_c1"),
        StatuteNode("sk", NodeType.SECTION, title="Section 1", parent_id="A2_t1", number=1),
    ]
    cases = [
        CaseDocument("d1", "tenancy dispute", CaseType.CIVIL, cited_cases={"d2"}, cited_statutes={"sj"}),
        CaseDocument("d2", "tenancy appeal", CaseType.CIVIL, cited_statutes={"si"}),
        CaseDocument("d3", "harbour levy", CaseType.CIVIL, cited_statutes={"sj", "A1"}),
        CaseDocument("d4", "forest offence", CaseType.CRIMINAL, cited_statutes={"sk"}),
        CaseDocument("d5", "forest appeal", CaseType.CRIMINAL, cited_cases={"d4"}, cited_statutes={"sk"}),
        CaseDocument("d6", "unrelated matter", CaseType.CRIMINAL),
    ]
    return cases, statutes


@pytest.fixture
def toy_graph() -> HeteroGraph:
    cases, statutes = toy_records()
    return build_hier_spcnet(cases, statutes)


@pytest.fixture(scope="session")
def planted(tmp_path_factory):
    """Two noise-free communities of 20 documents, parsed and built."""
    out = tmp_path_factory.mktemp("planted")
    corpus = generate_synthetic_corpus(SyntheticSpec(), seed=7, out_dir=out)
    cases, statutes = parse_corpus(corpus.corpus_path, registry=load_act_registry(corpus.registry_path))
    return corpus, cases, statutes, build_hier_spcnet(cases, statutes)
