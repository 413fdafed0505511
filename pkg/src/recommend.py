"""Top-k recommendation of similar documents that are not already cited."""
from __future__ import annotations

import logging
from functools import partial
from typing import Callable, Mapping, Optional

from .classic import MEASURES
from .errors import FusionError, GraphError, MissingIdError
from .fuse import PAIR_METHODS, FusionState, pair_similarity
from .graph import HeteroGraph
from .models import EdgeKind, NodeType, Recommendation

logger = logging.getLogger(__name__)

Scorer = Callable[[str, str], float]


def make_scorer(method: str, state: Optional[FusionState] = None, graph: Optional[HeteroGraph] = None) -> Scorer:
    """Bind a pair method to the tables/models (or graph, for classic measures) it needs."""
    if method in MEASURES:
        if graph is None:
            raise GraphError(f"{method} needs a citation graph")
        return partial(MEASURES[method], graph)
    if method in PAIR_METHODS:
        if state is None:
            raise FusionError(f"{method} needs loaded embeddings")
        return lambda a, b: pair_similarity(method, a, b, state)
    raise FusionError(f"unknown similarity method {method!r}")


def _score(scorer: Scorer, source: str, candidate: str) -> float:
    try:
        return float(scorer(source, candidate))
    except MissingIdError as exc:
        logger.warning("No representation for candidate; scored 0", extra={"id": candidate, "reason": str(exc)})
        return 0.0


def recommend(g: HeteroGraph, scorer: Scorer, source: str, k: int) -> Recommendation:
    """
    Rank every document with no citation link to or from ``source`` by
    similarity; ties go to the smaller id.
    """
    if k < 1:
        raise GraphError("k must be positive")
    ref = g.node(source)
    if ref.node_type != NodeType.DOCUMENT:
        raise GraphError(f"{source} is not a document")
    linked = set(g.out_neighbors(ref, EdgeKind.CITATION, NodeType.DOCUMENT))
    linked.update(g.in_neighbors(ref, EdgeKind.CITATION, NodeType.DOCUMENT))
    candidates = [
        node.id
        for node in g.nodes_of_type(NodeType.DOCUMENT)
        if node.index != ref.index and node.index not in linked
    ]
    scored = sorted(((cid, _score(scorer, ref.id, cid)) for cid in candidates), key=lambda item: (-item[1], item[0]))
    ranked = scored[:k]
    logger.info(
        "Recommendation computed",
        extra={"source": ref.id, "candidates": len(candidates), "excluded_cited": len(linked), "returned": len(ranked)},
    )
    return Recommendation(source_id=ref.id, k=k, ranked=ranked)


def same_group_fraction(rec: Recommendation, groups: Mapping[str, str]) -> float:
    """Share of recommended documents whose group label matches the source's."""
    if not rec.ranked:
        return 0.0
    home = groups.get(rec.source_id)
    return sum(1 for doc_id, _ in rec.ranked if groups.get(doc_id) == home) / len(rec.ranked)
