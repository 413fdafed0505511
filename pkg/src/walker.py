"""Metapath-constrained and uniform random walks over a HeteroGraph."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import WalkError
from .graph import CITATION_PAIRS, HIERARCHY_PAIRS, HeteroGraph, NodeLike
from .models import MetapathSchema, NodeRef, NodeType, WalkConfig, WalkCorpus, WalkPolicy

logger = logging.getLogger(__name__)

_TOKEN_TYPES: Dict[str, NodeType] = {
    "doc": NodeType.DOCUMENT,
    "sec": NodeType.SECTION,
    "topic": NodeType.TOPIC,
    "part": NodeType.PART,
    "chapter": NodeType.CHAPTER,
    "chap": NodeType.CHAPTER,
    "act": NodeType.ACT,
}

BUILTIN_SCHEMA_NAMES: Tuple[str, ...] = (
    "doc-sec-doc",
    "doc-sec-topic-sec-doc",
    "doc-sec-part-sec-doc",
    "doc-sec-chapter-sec-doc",
    "doc-sec-act-sec-doc",
    "doc-sec-topic-act-topic-sec-doc",
    "doc-sec-chapter-act-chapter-sec-doc",
    "doc-sec-part-act-part-sec-doc",
    "doc-sec-topic-chap-topic-sec-doc",
    "doc-sec-chapter-part-chapter-sec-doc",
    "doc-sec-topic-part-topic-sec-doc",
    "doc-sec-sec-doc",
    "doc-act-act-doc",
    "doc-doc-doc",
)

_LINKABLE = {
    frozenset(pair) for pair in CITATION_PAIRS | HIERARCHY_PAIRS
}

Distribution = Tuple[np.ndarray, np.ndarray]


def parse_schema(name: str) -> MetapathSchema:
    """Turn a label such as ``doc-sec-act-sec-doc`` into a validated schema."""
    tokens = [tok.strip().lower() for tok in name.split("-") if tok.strip()]
    try:
        types = tuple(_TOKEN_TYPES[tok] for tok in tokens)
    except KeyError as exc:
        raise WalkError(f"{name}: unknown node type token {exc.args[0]!r}") from exc
    schema = MetapathSchema(name=name, type_sequence=types)
    validate_schema(schema)
    return schema


def validate_schema(schema: MetapathSchema, walk_length: Optional[int] = None) -> None:
    seq = schema.type_sequence
    if len(seq) < 3:
        raise WalkError(f"{schema.name}: a metapath needs at least 3 node types")
    if seq[0] != NodeType.DOCUMENT or seq[-1] != NodeType.DOCUMENT:
        raise WalkError(f"{schema.name}: metapaths start and end at documents")
    for left, right in zip(seq, seq[1:]):
        if frozenset((left, right)) not in _LINKABLE:
            raise WalkError(
                f"{schema.name}: no edge kind links {left.value} and {right.value}"
            )
    if walk_length is not None and len(seq) > walk_length:
        raise WalkError(
            f"{schema.name}: {len(seq)} node types exceed walk length {walk_length}"
        )


def builtin_metapaths() -> List[MetapathSchema]:
    return [parse_schema(name) for name in BUILTIN_SCHEMA_NAMES]


def _support(
    g: HeteroGraph, current: int, next_type: Optional[NodeType], policy: WalkPolicy
) -> Distribution:
    """Eligible neighbour indices and their cumulative weights."""
    support = np.asarray(g.neighbors(current, next_type), dtype=np.int64)
    if support.size == 0:
        return support, np.empty(0, dtype=np.float64)
    if policy == WalkPolicy.ICF:
        if g.node_icf is None:
            raise WalkError("ICF-biased walks need compute_icf to run first")
        weights = g.node_icf[support]
        if weights.sum() <= 0.0:
            weights = np.ones(support.size, dtype=np.float64)
    else:
        weights = np.ones(support.size, dtype=np.float64)
    return support, np.cumsum(weights)


def transition_distribution(
    g: HeteroGraph, current: NodeLike, next_type: NodeType, policy: WalkPolicy
) -> List[Tuple[NodeRef, float]]:
    """
    Next-step probabilities from ``current`` restricted to neighbours of
    ``next_type``. ICF mass is proportional to each candidate's icf; an
    all-zero support falls back to uniform. Empty support gives [].
    """
    ref = g.node(current)
    support, cumulative = _support(g, ref.index, next_type, WalkPolicy(policy))
    if support.size == 0:
        return []
    weights = np.diff(cumulative, prepend=0.0)
    probs = weights / cumulative[-1]
    return [(g.nodes[int(i)], float(p)) for i, p in zip(support, probs)]


class _Sampler:
    """Caches per-(node, type) supports for one graph and policy."""

    def __init__(self, g: HeteroGraph, policy: WalkPolicy) -> None:
        self.g = g
        self.policy = policy
        self._cache: Dict[Tuple[int, Optional[NodeType]], Distribution] = {}

    def step(
        self, current: int, next_type: Optional[NodeType], rng: np.random.Generator
    ) -> Optional[int]:
        key = (current, next_type)
        dist = self._cache.get(key)
        if dist is None:
            dist = _support(self.g, current, next_type, self.policy)
            self._cache[key] = dist
        support, cumulative = dist
        if support.size == 0:
            return None
        pick = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
        return int(support[min(pick, support.size - 1)])


def sample_next(
    g: HeteroGraph,
    current: NodeLike,
    next_type: Optional[NodeType],
    policy: WalkPolicy,
    rng: np.random.Generator,
) -> Optional[int]:
    """Draw one transition; None on a dead end."""
    return _Sampler(g, WalkPolicy(policy)).step(g.node(current).index, next_type, rng)


# stream tag for schema-free walks; metapath schemas use their list position
UNIFORM_STREAM = 0xFFFFFFFF


def _walk_rng(seed: int, root: int, schema_idx: int, walk_idx: int) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, root, schema_idx, walk_idx])


def _schema_walks(
    sampler: _Sampler,
    schema: MetapathSchema,
    schema_idx: int,
    roots: Sequence[int],
    cfg: WalkConfig,
) -> Tuple[WalkCorpus, int]:
    out = WalkCorpus()
    truncated = 0
    for root in roots:
        for walk_idx in range(cfg.walks_per_root):
            rng = _walk_rng(cfg.seed, root, schema_idx, walk_idx)
            walk = [root]
            for position in range(1, cfg.walk_length):
                nxt = sampler.step(walk[-1], schema.type_at(position), rng)
                if nxt is None:
                    break
                walk.append(nxt)
            if len(walk) < cfg.walk_length:
                truncated += 1
                if cfg.drop_truncated or len(walk) < 2:
                    continue
            out.sequences.append(walk)
            out.provenance.append((schema.name, root, walk_idx))
    return out, truncated


_WORKER_GRAPH: Optional[HeteroGraph] = None


def _init_worker(g: HeteroGraph) -> None:
    global _WORKER_GRAPH
    _WORKER_GRAPH = g


def _worker_task(
    args: Tuple[MetapathSchema, int, List[int], WalkConfig]
) -> Tuple[WalkCorpus, int]:
    schema, schema_idx, roots, cfg = args
    if _WORKER_GRAPH is None:
        raise WalkError("walk worker started without a graph")
    return _schema_walks(_Sampler(_WORKER_GRAPH, cfg.policy), schema, schema_idx, roots, cfg)


def generate_metapath_walks(
    g: HeteroGraph, schemas: Sequence[MetapathSchema], cfg: WalkConfig
) -> WalkCorpus:
    """
    ``cfg.walks_per_root`` walks per (document root, schema), chained past the
    schema's end by repeating its interior. Each walk has its own RNG stream,
    so the corpus is the same for any worker count.
    """
    for schema in schemas:
        validate_schema(schema, cfg.walk_length)
    if cfg.policy == WalkPolicy.ICF and g.node_icf is None:
        raise WalkError("ICF-biased walks need compute_icf to run first")
    roots = [ref.index for ref in g.nodes_of_type(NodeType.DOCUMENT)]

    corpus = WalkCorpus()
    truncated = 0
    if cfg.workers > 1 and roots:
        chunk = max(1, len(roots) // (cfg.workers * 4))
        tasks = [
            (schema, idx, roots[start:start + chunk], cfg)
            for idx, schema in enumerate(schemas)
            for start in range(0, len(roots), chunk)
        ]
        with ProcessPoolExecutor(
            max_workers=cfg.workers, initializer=_init_worker, initargs=(g,)
        ) as pool:
            # map preserves task order, which is the provenance order
            for part, dropped in pool.map(_worker_task, tasks):
                corpus.extend(part)
                truncated += dropped
    else:
        sampler = _Sampler(g, cfg.policy)
        for idx, schema in enumerate(schemas):
            part, dropped = _schema_walks(sampler, schema, idx, roots, cfg)
            corpus.extend(part)
            truncated += dropped
            logger.debug(
                "Schema walks generated",
                extra={"schema": schema.name, "walks": len(part), "truncated": dropped},
            )

    logger.info(
        "Metapath walks generated",
        extra={
            "schemas": len(schemas),
            "roots": len(roots),
            "walks": len(corpus),
            "truncated": truncated,
            "policy": cfg.policy.value,
        },
    )
    return corpus


def generate_uniform_walks(
    g: HeteroGraph, cfg: WalkConfig, roots: Optional[Sequence[NodeLike]] = None
) -> WalkCorpus:
    """Type-agnostic uniform walks over undirected edges from every node."""
    root_idx = (
        [ref.index for ref in g.nodes]
        if roots is None
        else [g.node(r).index for r in roots]
    )
    sampler = _Sampler(g, WalkPolicy.UNIFORM)
    corpus = WalkCorpus()
    dropped = 0
    for root in root_idx:
        for walk_idx in range(cfg.walks_per_root):
            rng = _walk_rng(cfg.seed, root, UNIFORM_STREAM, walk_idx)
            walk = [root]
            while len(walk) < cfg.walk_length:
                nxt = sampler.step(walk[-1], None, rng)
                if nxt is None:
                    break
                walk.append(nxt)
            if len(walk) < 2:
                dropped += 1
                continue
            corpus.sequences.append(walk)
            corpus.provenance.append(("uniform", root, walk_idx))
    logger.info(
        "Uniform walks generated",
        extra={"roots": len(root_idx), "walks": len(corpus), "dropped": dropped},
    )
    return corpus


def save_walk_corpus(corpus: WalkCorpus, path: Union[str, Path]) -> Path:
    """One walk per line; provenance goes to the ``.prov`` sidecar."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for walk in corpus.sequences:
            fh.write(" ".join(str(i) for i in walk) + "\n")
    sidecar = path.with_name(path.name + ".prov")
    with sidecar.open("w", encoding="utf-8") as fh:
        for schema, root, walk_idx in corpus.provenance:
            fh.write(f"{schema}\t{root}\t{walk_idx}\n")
    return path


def load_walk_corpus(path: Union[str, Path]) -> WalkCorpus:
    path = Path(path)
    corpus = WalkCorpus()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                corpus.sequences.append([int(tok) for tok in line.split()])
            except ValueError as exc:
                raise WalkError(f"{path}:{line_no}: non-integer node index") from exc
    sidecar = path.with_name(path.name + ".prov")
    if sidecar.exists():
        with sidecar.open("r", encoding="utf-8") as fh:
            for line in fh:
                schema, root, walk_idx = line.rstrip("\n").split("\t")
                corpus.provenance.append((schema, int(root), int(walk_idx)))
        if len(corpus.provenance) != len(corpus.sequences):
            raise WalkError(f"{sidecar}: provenance count does not match walk count")
    return corpus
