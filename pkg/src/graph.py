"""Hier-SPCNet construction, the PCNet view, and citation-frequency weighting."""
from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from .errors import GraphError, UnknownNodeError
from .models import (
    CaseDocument,
    EdgeKind,
    EdgeRef,
    NodeRef,
    NodeType,
    StatuteNode,
)

logger = logging.getLogger(__name__)

D, A, P, C, T, S = (
    NodeType.DOCUMENT,
    NodeType.ACT,
    NodeType.PART,
    NodeType.CHAPTER,
    NodeType.TOPIC,
    NodeType.SECTION,
)

CITATION_PAIRS = frozenset({(D, D), (D, S), (D, A), (S, S), (S, A), (A, A)})
HIERARCHY_PAIRS = frozenset(
    {(A, P), (A, C), (A, T), (A, S), (P, C), (P, T), (P, S), (C, T), (C, S), (T, S)}
)
_ALLOWED = {EdgeKind.CITATION: CITATION_PAIRS, EdgeKind.HIERARCHY: HIERARCHY_PAIRS}

NodeLike = Union[NodeRef, str, int]


@dataclass
class BuildReport:
    nodes_per_type: Dict[str, int] = field(default_factory=dict)
    edges_per_kind: Dict[str, int] = field(default_factory=dict)
    unresolved_citations: int = 0
    unresolved_examples: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        return {
            "nodes_per_type": dict(sorted(self.nodes_per_type.items())),
            "edges_per_kind": dict(sorted(self.edges_per_kind.items())),
            "unresolved_citations": self.unresolved_citations,
            "unresolved_examples": list(self.unresolved_examples),
        }


class HeteroGraph:
    """
    Typed nodes with dense integer handles over an ``nx.MultiDiGraph`` whose
    edges are keyed by ``EdgeKind``.
    """

    def __init__(self) -> None:
        self.nodes: List[NodeRef] = []
        self._by_id: Dict[str, int] = {}
        self._g = nx.MultiDiGraph()
        self._neighbor_cache: Dict[Tuple[int, Optional[NodeType]], Tuple[int, ...]] = {}
        self.node_icf: Optional[np.ndarray] = None
        self.report = BuildReport()

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node: object) -> bool:
        if isinstance(node, NodeRef):
            return 0 <= node.index < len(self.nodes) and self.nodes[node.index] == node
        if isinstance(node, str):
            return node in self._by_id
        return False

    @property
    def number_of_edges(self) -> int:
        return self._g.number_of_edges()

    def to_networkx(self) -> nx.MultiDiGraph:
        """Copy keyed by node id, with ``node_type`` and ``kind`` attributes."""
        out = nx.MultiDiGraph()
        for ref in self.nodes:
            out.add_node(ref.id, node_type=ref.node_type.value)
        for edge in self.edges():
            out.add_edge(edge.src.id, edge.dst.id, key=edge.edge_kind.value, kind=edge.edge_kind.value)
        return out

    def add_node(self, node_id: str, node_type: NodeType) -> NodeRef:
        if node_id in self._by_id:
            raise GraphError(f"duplicate node id: {node_id}")
        ref = NodeRef(index=len(self.nodes), id=node_id, node_type=node_type)
        self.nodes.append(ref)
        self._by_id[node_id] = ref.index
        self._g.add_node(ref.index, node_type=node_type)
        return ref

    def node(self, node: NodeLike) -> NodeRef:
        if isinstance(node, NodeRef):
            if node not in self:
                raise UnknownNodeError(f"unknown node: {node.id}")
            return node
        if isinstance(node, str):
            index = self._by_id.get(node)
            if index is None:
                raise UnknownNodeError(f"unknown node: {node}")
            return self.nodes[index]
        if isinstance(node, (int, np.integer)) and 0 <= int(node) < len(self.nodes):
            return self.nodes[int(node)]
        raise UnknownNodeError(f"unknown node: {node}")

    def add_edge(self, src: NodeLike, dst: NodeLike, kind: EdgeKind) -> bool:
        """Add an edge; returns False when it already existed."""
        s, d = self.node(src), self.node(dst)
        if s.index == d.index:
            raise GraphError(f"self-loop on {s.id}")
        if (s.node_type, d.node_type) not in _ALLOWED[kind]:
            raise GraphError(
                f"invalid {kind.value} edge {s.node_type.value}->{d.node_type.value} "
                f"({s.id} -> {d.id})"
            )
        if self._g.has_edge(s.index, d.index, key=kind):
            return False
        self._g.add_edge(s.index, d.index, key=kind)
        self._neighbor_cache.clear()
        return True

    def _collect(
        self,
        edges: Iterable[Tuple[int, int, EdgeKind]],
        far: int,
        kind: Optional[EdgeKind],
        node_type: Optional[NodeType],
    ) -> List[int]:
        found = {
            edge[far]
            for edge in edges
            if (kind is None or edge[2] == kind)
            and (node_type is None or self.nodes[edge[far]].node_type == node_type)
        }
        return sorted(found)

    def out_neighbors(
        self, node: NodeLike, kind: Optional[EdgeKind] = None, node_type: Optional[NodeType] = None
    ) -> List[int]:
        ref = self.node(node)
        return self._collect(self._g.out_edges(ref.index, keys=True), 1, kind, node_type)

    def in_neighbors(
        self, node: NodeLike, kind: Optional[EdgeKind] = None, node_type: Optional[NodeType] = None
    ) -> List[int]:
        ref = self.node(node)
        return self._collect(self._g.in_edges(ref.index, keys=True), 0, kind, node_type)

    def neighbors(self, node: NodeLike, node_type: Optional[NodeType] = None) -> Tuple[int, ...]:
        """Undirected neighborhood over both edge kinds, sorted by index."""
        ref = self.node(node)
        key = (ref.index, node_type)
        cached = self._neighbor_cache.get(key)
        if cached is None:
            both = set(self.out_neighbors(ref, node_type=node_type))
            both.update(self.in_neighbors(ref, node_type=node_type))
            cached = tuple(sorted(both))
            self._neighbor_cache[key] = cached
        return cached

    def out_degree(self, node: NodeLike, kind: Optional[EdgeKind] = None) -> int:
        ref = self.node(node)
        return sum(1 for _, _, k in self._g.out_edges(ref.index, keys=True) if kind is None or k == kind)

    def edges(self) -> Iterator[EdgeRef]:
        for src in self.nodes:
            for kind in EdgeKind:
                for dst in self.out_neighbors(src, kind):
                    yield EdgeRef(src=src, dst=self.nodes[dst], edge_kind=kind)

    def nodes_of_type(self, node_type: NodeType) -> List[NodeRef]:
        return [n for n in self.nodes if n.node_type == node_type]

    def icf(self, node: NodeLike) -> float:
        if self.node_icf is None:
            raise GraphError("compute_icf has not been run on this graph")
        return float(self.node_icf[self.node(node).index])


def _check_hierarchy(statutes: Sequence[StatuteNode]) -> None:
    by_id = {s.id: s for s in statutes}
    forest = nx.DiGraph()
    for node in statutes:
        forest.add_node(node.id)
        if node.parent_id is None:
            continue
        if node.parent_id not in by_id:
            raise GraphError(f"{node.id}: parent {node.parent_id} not in statute dump")
        forest.add_edge(node.parent_id, node.id)
    try:
        cycle = nx.find_cycle(forest)
    except nx.NetworkXNoCycle:
        return
    path = " -> ".join(str(u) for u, _ in cycle)
    raise GraphError(f"hierarchy cycle: {path} -> {cycle[0][0]}")


def build_hier_spcnet(
    cases: Iterable[CaseDocument], statutes: Iterable[StatuteNode]
) -> HeteroGraph:
    """
    One node per record, one hierarchy edge per parent link and one citation
    edge per resolved citation. Unresolved citations are left out and counted
    in ``graph.report``.
    """
    cases = sorted(cases, key=lambda c: c.id)
    statutes = sorted(statutes, key=lambda s: s.id)
    _check_hierarchy(statutes)

    graph = HeteroGraph()
    for doc in cases:
        graph.add_node(doc.id, NodeType.DOCUMENT)
    for node in statutes:
        graph.add_node(node.id, node.node_type)

    for node in statutes:
        if node.parent_id is not None:
            graph.add_edge(node.parent_id, node.id, EdgeKind.HIERARCHY)

    unresolved: List[str] = []

    def _cite(source: str, targets: Iterable[str]) -> None:
        for target in sorted(targets):
            if target == source:
                continue
            if target not in graph:
                unresolved.append(f"{source}->{target}")
                continue
            graph.add_edge(source, target, EdgeKind.CITATION)

    for doc in cases:
        _cite(doc.id, doc.cited_cases)
        _cite(doc.id, doc.cited_statutes)
    for node in statutes:
        _cite(node.id, node.cited_statutes)

    edge_counts: Counter = Counter(
        f"{e.edge_kind.value}:{e.src.node_type.value}->{e.dst.node_type.value}"
        for e in graph.edges()
    )
    graph.report = BuildReport(
        nodes_per_type=dict(Counter(n.node_type.value for n in graph.nodes)),
        edges_per_kind=dict(edge_counts),
        unresolved_citations=len(unresolved),
        unresolved_examples=unresolved[:20],
    )
    logger.info(
        "Hier-SPCNet built",
        extra={
            "nodes": len(graph),
            "edges": graph.number_of_edges,
            "unresolved": len(unresolved),
        },
    )
    if unresolved:
        logger.warning(
            "Citations excluded from graph",
            extra={"count": len(unresolved), "examples": unresolved[:5]},
        )
    return graph


def pcnet_view(g: HeteroGraph) -> HeteroGraph:
    """Documents and document->document citations only, reindexed densely."""
    view = HeteroGraph()
    for ref in g.nodes_of_type(NodeType.DOCUMENT):
        view.add_node(ref.id, NodeType.DOCUMENT)
    for ref in g.nodes_of_type(NodeType.DOCUMENT):
        for target in g.out_neighbors(ref, EdgeKind.CITATION, NodeType.DOCUMENT):
            view.add_edge(ref.id, g.nodes[target].id, EdgeKind.CITATION)
    view.report = BuildReport(
        nodes_per_type={NodeType.DOCUMENT.value: len(view)},
        edges_per_kind={"citation:document->document": view.number_of_edges},
    )
    return view


def citation_frequency(g: HeteroGraph, s: NodeLike) -> int:
    """In-degree of ``s`` over citation edges."""
    return len(g.in_neighbors(s, EdgeKind.CITATION))


def compute_icf(g: HeteroGraph) -> Dict[str, float]:
    """
    icf(s) = log10(N / (1 + cf(s))), clamped at 0, where N counts nodes with
    at least one outgoing citation. Stored on ``g.node_icf`` as well.
    """
    citing = sum(1 for n in g.nodes if g.out_degree(n, EdgeKind.CITATION) > 0)
    if citing == 0:
        raise GraphError("no node has an outgoing citation; ICF undefined")
    values = np.empty(len(g), dtype=np.float64)
    for ref in g.nodes:
        raw = math.log10(citing / (1 + citation_frequency(g, ref)))
        values[ref.index] = max(0.0, raw)
    g.node_icf = values
    logger.info(
        "ICF computed",
        extra={
            "citing_nodes": citing,
            "zero_icf_nodes": int(np.sum(values == 0.0)),
            "max_icf": float(values.max()) if len(values) else 0.0,
        },
    )
    return {ref.id: float(values[ref.index]) for ref in g.nodes}


def most_cited(g: HeteroGraph, k: int = 10) -> List[Tuple[NodeRef, int]]:
    counts = [(ref, citation_frequency(g, ref)) for ref in g.nodes]
    counts.sort(key=lambda item: (-item[1], item[0].id))
    return [item for item in counts[:k] if item[1] > 0]


def save_graph(g: HeteroGraph, path: Union[str, Path]) -> None:
    edges = list(g.edges())
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"#nodes {len(g)} #edges {len(edges)}\n")
        for ref in g.nodes:
            if not ref.id or any(ch.isspace() for ch in ref.id):
                raise GraphError(f"node id not exportable (whitespace): {ref.id!r}")
            fh.write(f"N {ref.index} {ref.node_type.value} {ref.id}\n")
        for edge in edges:
            fh.write(f"E {edge.src.index} {edge.dst.index} {edge.edge_kind.value}\n")
        unresolved = {"count": g.report.unresolved_citations, "examples": g.report.unresolved_examples}
        fh.write("U " + json.dumps(unresolved, sort_keys=True) + "\n")


def load_graph(path: Union[str, Path]) -> HeteroGraph:
    graph = HeteroGraph()
    unresolved: Dict[str, object] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "#nodes" or header[2] != "#edges":
            raise GraphError(f"{path}: bad graph header")
        n_nodes, n_edges = int(header[1]), int(header[3])
        seen_edges = 0
        for line_no, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            try:
                if parts[0] == "N":
                    index, node_type, node_id = int(parts[1]), NodeType(parts[2]), parts[3]
                    ref = graph.add_node(node_id, node_type)
                    if ref.index != index:
                        raise GraphError(f"node index {index} out of order")
                elif parts[0] == "E":
                    graph.add_edge(int(parts[1]), int(parts[2]), EdgeKind(parts[3]))
                    seen_edges += 1
                elif parts[0] == "U":
                    unresolved = json.loads(line[1:])
                else:
                    raise GraphError(f"unknown record type {parts[0]!r}")
            except (IndexError, ValueError) as exc:
                raise GraphError(f"{path}:{line_no}: {exc}") from exc
    if len(graph) != n_nodes or seen_edges != n_edges:
        raise GraphError(
            f"{path}: header says {n_nodes} nodes/{n_edges} edges, "
            f"found {len(graph)}/{seen_edges}"
        )
    counts: Counter = Counter(
        f"{e.edge_kind.value}:{e.src.node_type.value}->{e.dst.node_type.value}"
        for e in graph.edges()
    )
    graph.report = BuildReport(
        nodes_per_type=dict(Counter(n.node_type.value for n in graph.nodes)),
        edges_per_kind=dict(counts),
        unresolved_citations=int(unresolved.get("count", 0)),
        unresolved_examples=list(unresolved.get("examples", [])),
    )
    return graph
