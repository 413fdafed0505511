"""Command-line entrypoint for the case similarity toolkit."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np

from .classic import MEASURES, score_pairs
from .config import get_settings, load_pipeline_config
from .corpus import load_act_registry, parse_corpus, write_corpus
from .embed import (
    EmbeddingTable,
    load_embeddings,
    save_embeddings,
    train_paragraph_vectors,
    train_skipgram,
)
from .errors import CaseSimError, ConfigError, PipelineError
from .evaluation import (
    attach_scores,
    derive_weights,
    evaluate_pairs,
    load_pairs,
    load_scores,
    report_to_dict,
    write_report,
    write_scores,
)
from .fuse import (
    PAIR_METHODS,
    FusionInput,
    FusionState,
    build_text_similarity_graph,
    load_model,
    pair_similarity,
    save_model,
    train_autoencoder,
    train_map_net,
)
from .graph import (
    build_hier_spcnet,
    compute_icf,
    load_graph,
    most_cited,
    pcnet_view,
    save_graph,
)
from .logging_utils import configure_logging
from .models import (
    FusionTrainConfig,
    NodeType,
    SgnsConfig,
    Stemming,
    TextPreprocessConfig,
    WalkConfig,
    WalkPolicy,
)
from .pipeline import ALL_METHODS, Pipeline
from .recommend import make_scorer, recommend, same_group_fraction
from .synthetic import SyntheticSpec, generate_synthetic_corpus, load_groups
from .walker import (
    builtin_metapaths,
    generate_metapath_walks,
    generate_uniform_walks,
    load_walk_corpus,
    parse_schema,
    save_walk_corpus,
)

logger = logging.getLogger(__name__)


def _emit(payload: Dict[str, Any]) -> None:
    sys.stdout.write(json.dumps(payload, sort_keys=True, default=str) + "\n")


def _sgns_args(parser: argparse.ArgumentParser, dim: int, seed: int, workers: int) -> None:
    parser.add_argument("--dim", type=int, default=dim)
    parser.add_argument("--window", type=int, default=5)
    parser.add_argument("--negatives", type=int, default=5)
    parser.add_argument("--epochs", type=int, default=5)
    parser.add_argument("--lr", type=float, default=0.025)
    parser.add_argument("--batch-size", type=int, default=256)
    parser.add_argument("--seed", type=int, default=seed)
    parser.add_argument("--workers", type=int, default=workers)


def _sgns_config(args: argparse.Namespace, min_count: int = 1) -> SgnsConfig:
    return SgnsConfig(
        dim=args.dim,
        window=args.window,
        negatives=args.negatives,
        epochs=args.epochs,
        initial_lr=args.lr,
        min_count=min_count,
        seed=args.seed,
        batch_size=args.batch_size,
        workers=args.workers,
    )


def _cmd_parse(args: argparse.Namespace) -> int:
    registry = load_act_registry(args.registry) if args.registry else None
    cases, statutes = parse_corpus(args.corpus, registry=registry)
    write_corpus(args.out, cases, statutes)
    _emit(
        {
            "out": args.out,
            "cases": len(cases),
            "statutes": len(statutes),
            "unresolved": sum(len(c.unresolved) for c in cases) + sum(len(s.unresolved) for s in statutes),
        }
    )
    return 0


def _cmd_build_net(args: argparse.Namespace) -> int:
    registry = load_act_registry(args.registry) if args.registry else None
    cases, statutes = parse_corpus(args.corpus, registry=registry)
    graph = build_hier_spcnet(cases, statutes)
    save_graph(graph, args.out)
    if args.pcnet_out:
        save_graph(pcnet_view(graph), args.pcnet_out)
    report = graph.report.to_dict()
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    _emit({"out": args.out, "nodes": len(graph), "edges": graph.number_of_edges, **report})
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    graph = load_graph(args.graph)
    icf = compute_icf(graph)
    nodes: Dict[str, int] = {}
    for ref in graph.nodes:
        nodes[ref.node_type.value] = nodes.get(ref.node_type.value, 0) + 1
    edges: Dict[str, int] = {}
    for edge in graph.edges():
        key = f"{edge.edge_kind.value}:{edge.src.node_type.value}->{edge.dst.node_type.value}"
        edges[key] = edges.get(key, 0) + 1
    _emit(
        {
            "nodes": len(graph),
            "edges": graph.number_of_edges,
            "nodes_per_type": dict(sorted(nodes.items())),
            "edges_per_kind": dict(sorted(edges.items())),
            "most_cited": [
                {"id": ref.id, "type": ref.node_type.value, "cited_by": count, "icf": icf[ref.id]}
                for ref, count in most_cited(graph, args.top)
            ],
        }
    )
    return 0


def _cmd_classic_sim(args: argparse.Namespace) -> int:
    graph = load_graph(args.graph)
    if args.network == "pcnet":
        graph = pcnet_view(graph)
    pairs = load_pairs(args.pairs)
    keys = [(r.id_a, r.id_b) for r in pairs.rows]
    scores = score_pairs(graph, keys, args.measure)
    write_scores([(a, b, s) for (a, b), s in zip(keys, scores)], args.out)
    _emit({"out": args.out, "pairs": len(keys), "measure": args.measure, "network": args.network})
    return 0


def _cmd_walk(args: argparse.Namespace) -> int:
    graph = load_graph(args.graph)
    cfg = WalkConfig(
        walks_per_root=args.walks_per_root,
        walk_length=args.length,
        policy=WalkPolicy(args.policy),
        seed=args.seed,
        drop_truncated=args.drop_truncated,
        workers=args.workers,
    )
    if args.schemas == "uniform":
        corpus = generate_uniform_walks(graph, cfg)
    else:
        if cfg.policy == WalkPolicy.ICF:
            compute_icf(graph)
        if args.schemas == "builtin":
            schemas = builtin_metapaths()
        else:
            schemas = [parse_schema(name) for name in args.schemas.split(",") if name.strip()]
        corpus = generate_metapath_walks(graph, schemas, cfg)
    save_walk_corpus(corpus, args.out)
    _emit({"out": args.out, "walks": len(corpus)})
    return 0


def _cmd_train_net_emb(args: argparse.Namespace) -> int:
    graph = load_graph(args.graph)
    table = train_skipgram(load_walk_corpus(args.corpus), _sgns_config(args), ids=[n.id for n in graph.nodes])
    if not args.all_nodes:
        table = table.subset([n.id for n in graph.nodes_of_type(NodeType.DOCUMENT) if n.id in table])
    save_embeddings(table, args.out)
    _emit({"out": args.out, "vectors": len(table), "dim": table.dim})
    return 0


def _cmd_train_text_emb(args: argparse.Namespace) -> int:
    cases, _ = parse_corpus(args.corpus)
    pre = TextPreprocessConfig(
        lowercase=not args.keep_case,
        stopword_file=args.stopwords,
        stemming=Stemming(args.stemming),
    )
    held_out = load_pairs(args.infer_pairs).ids if args.infer_pairs else set()
    train_docs = [c for c in cases if c.id not in held_out]
    model = train_paragraph_vectors(train_docs, pre, _sgns_config(args, min_count=args.min_count))
    table = model
    infer_docs = [c for c in cases if c.id in held_out]
    if infer_docs:
        inferred = model.infer(infer_docs)
        table = EmbeddingTable(list(model.ids) + list(inferred.ids), np.vstack([model.matrix, inferred.matrix]))
    save_embeddings(table, args.out)
    _emit({"out": args.out, "trained": len(model), "inferred": len(table) - len(model), "dim": table.dim})
    return 0


def _fusion_state(args: argparse.Namespace) -> FusionState:
    model = load_model(args.model) if getattr(args, "model", None) else None
    method = getattr(args, "method", "")
    return FusionState(
        text_emb=load_embeddings(args.text_emb) if getattr(args, "text_emb", None) else None,
        net_emb=load_embeddings(args.net_emb) if getattr(args, "net_emb", None) else None,
        map_net=model if method.startswith("nn_map") else None,
        autoencoder=model if method == "autoencoder" else None,
        paper2vec_emb=load_embeddings(args.paper2vec_emb) if getattr(args, "paper2vec_emb", None) else None,
        alpha=getattr(args, "alpha", 0.5),
        renormalize=not getattr(args, "no_renorm", False),
    )


def _cmd_fuse_train(args: argparse.Namespace) -> int:
    inp = FusionInput.from_tables(load_embeddings(args.text_emb), load_embeddings(args.net_emb))
    exclude = frozenset(load_pairs(args.exclude_pairs).ids) if args.exclude_pairs else frozenset()
    cfg = FusionTrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        denoise_sigma=args.denoise_sigma,
        exclude_ids=exclude,
    )
    model = train_autoencoder(inp, cfg) if args.method == "autoencoder" else train_map_net(inp, cfg)
    echo = {k: v for k, v in cfg.__dict__.items() if k != "exclude_ids"}
    save_model(model, args.out, config={"fusion": echo, "excluded": len(exclude)})
    _emit({"out": args.out, "method": args.method, "best_val_loss": model.best_val_loss})
    return 0


def _cmd_fuse_score(args: argparse.Namespace) -> int:
    state = _fusion_state(args)
    pairs = load_pairs(args.pairs)
    rows = [(r.id_a, r.id_b, pair_similarity(args.method, r.id_a, r.id_b, state)) for r in pairs.rows]
    write_scores(rows, args.out)
    _emit({"out": args.out, "method": args.method, "pairs": len(rows)})
    return 0


def _cmd_fuse_paper2vec(args: argparse.Namespace) -> int:
    graph = build_text_similarity_graph(load_embeddings(args.text_emb), args.threshold)
    walk_cfg = WalkConfig(walks_per_root=args.walks_per_root, walk_length=args.length, seed=args.seed)
    table = train_skipgram(generate_uniform_walks(graph, walk_cfg), _sgns_config(args), ids=[n.id for n in graph.nodes])
    save_embeddings(table, args.out)
    _emit({"out": args.out, "docs": len(graph), "edges": graph.number_of_edges, "vectors": len(table)})
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    scored = attach_scores(load_pairs(args.pairs), load_scores(args.scores))
    weights = None
    if args.weights == "sch1":
        if args.nd is None or args.nc is None:
            raise ConfigError("--weights sch1 needs --nd and --nc")
        weights = derive_weights("sch1", n_d=args.nd, n_c=args.nc)
    elif args.weights == "sch2":
        if args.total_pairs is not None and args.similar_pairs is not None:
            weights = derive_weights("sch2", total_pairs=args.total_pairs, similar_pairs=args.similar_pairs)
        elif args.text_emb and args.corpus:
            cases, _ = parse_corpus(args.corpus)
            weights = derive_weights("sch2", text_emb=load_embeddings(args.text_emb), docs=cases, seed=args.seed)
        else:
            raise ConfigError("--weights sch2 needs --total-pairs/--similar-pairs or --text-emb with --corpus")
    report = evaluate_pairs(scored, weights, config={"pairs": args.pairs, "scores": args.scores, "weights": args.weights})
    if args.out:
        write_report(report, args.out)
    _emit(report_to_dict(report))
    return 0


def _cmd_recommend(args: argparse.Namespace) -> int:
    graph = load_graph(args.graph)
    if args.method in MEASURES:
        scorer = make_scorer(args.method, graph=graph)
    else:
        scorer = make_scorer(args.method, state=_fusion_state(args))
    rec = recommend(graph, scorer, args.source, args.k)
    case_types: Dict[str, str] = {}
    if args.corpus:
        cases, _ = parse_corpus(args.corpus)
        case_types = {c.id: c.case_type.value for c in cases}
    payload: Dict[str, Any] = {
        "source": rec.source_id,
        "k": rec.k,
        "method": args.method,
        "ranked": [
            {"id": doc_id, "similarity": score, "case_type": case_types.get(doc_id)}
            for doc_id, score in rec.ranked
        ],
    }
    if args.groups:
        payload["same_group_fraction"] = same_group_fraction(rec, load_groups(args.groups))
    _emit(payload)
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(
        communities=args.communities,
        docs_per_community=args.docs_per_community,
        acts_per_community=args.acts_per_community,
        noise=args.noise,
    )
    corpus = generate_synthetic_corpus(spec, args.seed, args.out_dir)
    _emit(
        {
            "out_dir": args.out_dir,
            "docs": len(corpus.cases),
            "statutes": len(corpus.statutes),
            "pairs": len(corpus.pairs),
        }
    )
    return 0


_PIPELINE_FLAGS = (
    ("corpus", str),
    ("registry", str),
    ("pairs", str),
    ("output_dir", str),
    ("method", str),
    ("network_method", str),
    ("seed", int),
    ("walks_per_root", int),
    ("walk_length", int),
    ("dim", int),
    ("epochs", int),
    ("text_epochs", int),
    ("text_min_count", int),
    ("fusion_epochs", int),
    ("alpha", float),
    ("weights", str),
    ("workers", int),
    ("synthetic_communities", int),
    ("synthetic_docs_per_community", int),
    ("synthetic_noise", float),
)


def _cmd_pipeline(args: argparse.Namespace) -> int:
    overrides: Dict[str, Any] = {name: getattr(args, name) for name, _ in _PIPELINE_FLAGS}
    if args.synthetic:
        overrides["synthetic"] = True
    if args.no_renorm:
        overrides["renormalize_mapped"] = False
    if args.fusion_include_eval:
        overrides["fusion_exclude_eval"] = False
    cfg = load_pipeline_config(Path(args.config) if args.config else None).with_overrides(overrides)
    pipeline = Pipeline(cfg)
    report = pipeline.run()
    _emit({**report_to_dict(report), "executed": pipeline.executed, "cached": pipeline.reused})
    return 0


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    seed, dim, workers = settings.CASESIM_SEED, settings.CASESIM_EMBED_DIM, settings.CASESIM_WORKERS

    parser = argparse.ArgumentParser(prog="casesim", description="Legal case similarity toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="normalize a JSON-lines corpus and extract statute citations")
    p.add_argument("--corpus", required=True)
    p.add_argument("--registry")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("build-net", help="build Hier-SPCNet (and optionally the PCNet view)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--registry")
    p.add_argument("--out", required=True)
    p.add_argument("--pcnet-out")
    p.add_argument("--report")
    p.set_defaults(func=_cmd_build_net)

    p = sub.add_parser("stats", help="node/edge counts and the most cited nodes with their ICF")
    p.add_argument("--graph", required=True)
    p.add_argument("--top", type=int, default=10)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("classic-sim", help="bibliographic coupling, co-citation or dispersion per pair")
    p.add_argument("--graph", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--measure", choices=sorted(MEASURES), required=True)
    p.add_argument("--network", choices=("pcnet", "hierspcnet"), default="hierspcnet")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_classic_sim)

    p = sub.add_parser("walk", help="metapath or uniform random walks")
    p.add_argument("--graph", required=True)
    p.add_argument("--policy", choices=[w.value for w in WalkPolicy], default=WalkPolicy.ICF.value)
    p.add_argument("--schemas", default="builtin", help="builtin, uniform, or comma-separated schema names")
    p.add_argument("--walks-per-root", type=int, default=settings.CASESIM_WALKS_PER_ROOT)
    p.add_argument("--length", type=int, default=settings.CASESIM_WALK_LENGTH)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--workers", type=int, default=workers)
    p.add_argument("--drop-truncated", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_walk)

    p = sub.add_parser("train-net-emb", help="skip-gram over a walk corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--all-nodes", action="store_true", help="keep statute vectors too")
    p.add_argument("--out", required=True)
    _sgns_args(p, dim, seed, workers)
    p.set_defaults(func=_cmd_train_net_emb)

    p = sub.add_parser("train-text-emb", help="paragraph vectors over case text")
    p.add_argument("--corpus", required=True)
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--stopwords")
    p.add_argument("--stemming", choices=[s.value for s in Stemming], default=Stemming.OFF.value)
    p.add_argument("--keep-case", action="store_true")
    p.add_argument("--infer-pairs", help="documents in this pairs file are inferred, not trained")
    p.add_argument("--out", required=True)
    _sgns_args(p, dim, seed, workers)
    p.set_defaults(func=_cmd_train_text_emb)

    fuse = sub.add_parser("fuse", help="text/network fusion")
    fuse_sub = fuse.add_subparsers(dest="fuse_command", required=True)

    p = fuse_sub.add_parser("train", help="train the mapping network or the bimodal autoencoder")
    p.add_argument("--method", choices=("nnmap", "autoencoder"), required=True)
    p.add_argument("--text-emb", required=True)
    p.add_argument("--net-emb", required=True)
    p.add_argument("--exclude-pairs", help="documents in this pairs file stay out of training")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--denoise-sigma", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fuse_train)

    p = fuse_sub.add_parser("score", help="pair similarities under a fusion method")
    p.add_argument("--method", choices=PAIR_METHODS, required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--text-emb")
    p.add_argument("--net-emb")
    p.add_argument("--model")
    p.add_argument("--paper2vec-emb")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--no-renorm", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fuse_score)

    p = fuse_sub.add_parser("paper2vec", help="embed the text-similarity graph with uniform walks")
    p.add_argument("--text-emb", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--walks-per-root", type=int, default=settings.CASESIM_WALKS_PER_ROOT)
    p.add_argument("--length", type=int, default=settings.CASESIM_WALK_LENGTH)
    p.add_argument("--out", required=True)
    _sgns_args(p, dim, seed, workers)
    p.set_defaults(func=_cmd_fuse_paper2vec)

    p = sub.add_parser("eval", help="compare predicted scores with expert scores")
    p.add_argument("--pairs", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--weights", choices=("none", "sch1", "sch2"), default="none")
    p.add_argument("--nd", type=int)
    p.add_argument("--nc", type=int)
    p.add_argument("--total-pairs", type=int)
    p.add_argument("--similar-pairs", type=int)
    p.add_argument("--text-emb")
    p.add_argument("--corpus")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("recommend", help="top-k similar documents not already cited")
    p.add_argument("--graph", required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--method", choices=sorted(MEASURES) + list(PAIR_METHODS), default="network")
    p.add_argument("--text-emb")
    p.add_argument("--net-emb")
    p.add_argument("--model")
    p.add_argument("--paper2vec-emb")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--no-renorm", action="store_true")
    p.add_argument("--corpus", help="adds the case type of each recommendation")
    p.add_argument("--groups", help="doc_id<TAB>group file; reports the same-group fraction")
    p.set_defaults(func=_cmd_recommend)

    p = sub.add_parser("synth", help="write a seeded planted-community corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--communities", type=int, default=2)
    p.add_argument("--docs-per-community", type=int, default=20)
    p.add_argument("--acts-per-community", type=int, default=2)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=seed)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("pipeline", help="run every stage a method needs, with caching")
    p.add_argument("--config", help="key=value file; flags override it")
    for name, kind in _PIPELINE_FLAGS:
        flag = "--" + name.replace("_", "-")
        if name == "method":
            p.add_argument(flag, choices=ALL_METHODS)
        else:
            p.add_argument(flag, type=kind)
    p.add_argument("--synthetic", action="store_true")
    p.add_argument("--no-renorm", action="store_true")
    p.add_argument("--fusion-include-eval", action="store_true", help="let fusion models train on evaluation documents")
    p.set_defaults(func=_cmd_pipeline)
    return parser


def _error_line(exc: BaseException) -> Dict[str, Any]:
    stage = exc.stage if isinstance(exc, PipelineError) else None
    cause = exc.cause if isinstance(exc, PipelineError) else exc
    return {"error": type(cause).__name__, "stage": stage, "message": str(cause)}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run one subcommand and return its exit code."""
    configure_logging()
    settings = get_settings()
    args = build_parser().parse_args(list(argv) if argv is not None else None)
    logger.info("Starting casesim", extra={"command": args.command, "env": settings.ENVIRONMENT})
    try:
        return args.func(args)
    except (CaseSimError, OSError, KeyError, ValueError, RuntimeError) as exc:
        cause = exc.cause if isinstance(exc, PipelineError) else exc
        logger.debug("Command failed", exc_info=True)
        sys.stderr.write(json.dumps(_error_line(exc)) + "\n")
        return 2 if isinstance(cause, ConfigError) else 1


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logger.info("Interrupted; shutting down")
        sys.exit(130)
