"""Citation-overlap similarity measures over PCNet or Hier-SPCNet."""
from __future__ import annotations

import logging
from itertools import combinations
from typing import Callable, Dict, Iterable, List, Sequence, Set, Tuple

import numpy as np

from .errors import GraphError
from .graph import HeteroGraph, NodeLike
from .models import EdgeKind, NodeRef, NodeType

logger = logging.getLogger(__name__)


def _document(g: HeteroGraph, node: NodeLike) -> NodeRef:
    ref = g.node(node)
    if ref.node_type != NodeType.DOCUMENT:
        raise GraphError(f"{ref.id} is a {ref.node_type.value} node, expected a document")
    return ref


def _jaccard(left: Set[int], right: Set[int]) -> float:
    union = left | right
    if not union:
        return 0.0
    return len(left & right) / len(union)


def bibliographic_coupling(g: HeteroGraph, a: NodeLike, b: NodeLike) -> float:
    """Jaccard overlap of outgoing citations; 0 when neither document cites."""
    ra, rb = _document(g, a), _document(g, b)
    return _jaccard(
        set(g.out_neighbors(ra, EdgeKind.CITATION)),
        set(g.out_neighbors(rb, EdgeKind.CITATION)),
    )


def co_citation(g: HeteroGraph, a: NodeLike, b: NodeLike) -> float:
    """Jaccard overlap of incoming citations; 0 when neither is cited."""
    ra, rb = _document(g, a), _document(g, b)
    return _jaccard(
        set(g.in_neighbors(ra, EdgeKind.CITATION)),
        set(g.in_neighbors(rb, EdgeKind.CITATION)),
    )


def dispersion(g: HeteroGraph, u: NodeLike, v: NodeLike) -> float:
    """
    Count unordered pairs of common neighbours of u and v that are neither
    linked to each other nor share a neighbour outside {u, v}.
    """
    ru, rv = _document(g, u), _document(g, v)
    excluded = {ru.index, rv.index}
    common = (set(g.neighbors(ru)) & set(g.neighbors(rv))) - excluded
    total = 0
    for s, t in combinations(sorted(common), 2):
        ns = set(g.neighbors(s)) - excluded
        if t in ns:
            continue
        nt = set(g.neighbors(t)) - excluded
        if ns & nt:
            continue
        total += 1
    return float(total)


def normalize_scores(scores: Sequence[float]) -> List[float]:
    """Min-max scale into [0, 1]; a constant list maps to zeros."""
    values = np.asarray(scores, dtype=np.float64)
    if values.size == 0:
        return []
    low, high = values.min(), values.max()
    if high == low:
        return [0.0] * int(values.size)
    return ((values - low) / (high - low)).tolist()


MEASURES: Dict[str, Callable[[HeteroGraph, NodeLike, NodeLike], float]] = {
    "bibcoupling": bibliographic_coupling,
    "cocitation": co_citation,
    "dispersion": dispersion,
}


def score_pairs(
    g: HeteroGraph, pairs: Iterable[Tuple[str, str]], measure: str
) -> List[float]:
    """
    Score every pair with ``measure``. Dispersion is min-max normalized over
    the pair set so that all measures land in [0, 1].
    """
    if measure not in MEASURES:
        raise GraphError(f"unknown measure {measure!r}; expected one of {sorted(MEASURES)}")
    fn = MEASURES[measure]
    scores = [fn(g, a, b) for a, b in pairs]
    if measure == "dispersion" and scores:
        scores = normalize_scores(scores)
    logger.info(
        "Classic similarity scored",
        extra={"measure": measure, "pairs": len(scores), "nonzero": sum(1 for s in scores if s > 0)},
    )
    return scores
