"""End-to-end orchestration: parse -> build -> walk -> embed -> fuse -> score -> eval."""
from __future__ import annotations

import hashlib
import json
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .classic import MEASURES, normalize_scores
from .config import PipelineConfig
from .corpus import load_act_registry, parse_corpus, write_corpus
from .embed import (
    EmbeddingTable,
    load_embeddings,
    save_embeddings,
    train_paragraph_vectors,
    train_skipgram,
)
from .errors import CaseSimError, ConfigError, MissingIdError, PipelineError
from .evaluation import (
    derive_weights,
    evaluate_pairs,
    load_pairs,
    load_scores,
    attach_scores,
    write_report,
    write_scores,
)
from .fuse import (
    FusionInput,
    FusionState,
    build_text_similarity_graph,
    load_model,
    pair_similarity,
    save_model,
    train_autoencoder,
    train_map_net,
)
from .graph import build_hier_spcnet, compute_icf, load_graph, pcnet_view, save_graph
from .models import (
    EdgeKind,
    EvalReport,
    FusionTrainConfig,
    NodeType,
    SgnsConfig,
    Stemming,
    TextPreprocessConfig,
    WalkConfig,
    WalkPolicy,
)
from .synthetic import SyntheticSpec, generate_synthetic_corpus
from .walker import (
    builtin_metapaths,
    generate_metapath_walks,
    generate_uniform_walks,
    load_walk_corpus,
    parse_schema,
    save_walk_corpus,
)

logger = logging.getLogger(__name__)

# method -> (network, walk style, policy)
NETWORK_METHODS: Dict[str, Tuple[str, str, WalkPolicy]] = {
    "hier_spcnet_icf_m2v": ("hierspcnet", "metapath", WalkPolicy.ICF),
    "hier_spcnet_m2v": ("hierspcnet", "metapath", WalkPolicy.UNIFORM),
    "pcnet_m2v": ("pcnet", "metapath", WalkPolicy.UNIFORM),
    "hier_spcnet_n2v": ("hierspcnet", "uniform", WalkPolicy.UNIFORM),
    "pcnet_n2v": ("pcnet", "uniform", WalkPolicy.UNIFORM),
}
CLASSIC_METHODS = {
    f"{measure}_{network}": (measure, network)
    for measure in MEASURES
    for network in ("pcnet", "hierspcnet")
}
FUSION_METHODS = (
    "value_average",
    "value_max",
    "emb_average",
    "emb_max",
    "emb_conc",
    "nn_map_conc",
    "nn_map_wtd_conc",
    "autoencoder",
)
ALL_METHODS = tuple(NETWORK_METHODS) + tuple(CLASSIC_METHODS) + ("text", "paper2vec") + FUSION_METHODS


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass
class Stage:
    name: str
    inputs: List[Path]
    outputs: List[Path]
    params: Dict[str, object]
    run: Callable[[], None]

    def cache_key(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.name.encode())
        digest.update(json.dumps(self.params, sort_keys=True, default=str).encode())
        for path in self.inputs:
            digest.update(str(path.name).encode())
            digest.update(_sha256_file(path).encode())
        return digest.hexdigest()


@contextmanager
def _exclusive(output_dir: Path) -> Iterator[None]:
    """Hold ``output_dir/.lock`` for the duration of a run."""
    output_dir.mkdir(parents=True, exist_ok=True)
    lock = output_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise PipelineError("lock", CaseSimError(f"{output_dir} is in use by another run ({lock})")) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


@dataclass
class Pipeline:
    """
    Runs the stages a method needs in dependency order. Each stage is skipped
    when its cache key (stage params plus input content hashes) matches the
    key recorded next to its outputs.
    """

    cfg: PipelineConfig
    reused: List[str] = field(default_factory=list)
    executed: List[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.cfg.method not in ALL_METHODS:
            raise ConfigError(f"unknown method {self.cfg.method!r}; expected one of {ALL_METHODS}")
        if self.cfg.network_method not in NETWORK_METHODS:
            raise ConfigError(f"network_method must be one of {tuple(NETWORK_METHODS)}")
        self.out = Path(self.cfg.output_dir)
        self.cache_dir = self.out / "cache"

    # paths
    def _p(self, name: str) -> Path:
        return self.out / name

    def _exec(self, stage: Stage) -> None:
        key_file = self.cache_dir / f"{stage.name}.{stage.outputs[0].name}.key"
        try:
            for path in stage.inputs:
                if not path.exists():
                    raise ConfigError(f"input for {stage.name} not found: {path}")
            key = stage.cache_key()
            if (
                key_file.exists()
                and key_file.read_text().strip() == key
                and all(p.exists() for p in stage.outputs)
            ):
                logger.info("Stage cached", extra={"stage": stage.name})
                self.reused.append(stage.name)
                return
            logger.info("Stage starting", extra={"stage": stage.name})
            stage.run()
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            key_file.write_text(key + "\n")
            self.executed.append(stage.name)
            logger.info("Stage finished", extra={"stage": stage.name, "outputs": [p.name for p in stage.outputs]})
        except PipelineError:
            raise
        except Exception as exc:
            logger.exception("Stage failed", extra={"stage": stage.name})
            raise PipelineError(stage.name, exc) from exc

    # configs handed to the modules
    def walk_config(self, policy: WalkPolicy) -> WalkConfig:
        return WalkConfig(
            walks_per_root=self.cfg.walks_per_root,
            walk_length=self.cfg.walk_length,
            policy=policy,
            seed=self.cfg.seed,
            drop_truncated=self.cfg.drop_truncated,
            workers=self.cfg.workers,
        )

    def sgns_config(self, text: bool = False) -> SgnsConfig:
        return SgnsConfig(
            dim=self.cfg.dim,
            window=self.cfg.window,
            negatives=self.cfg.negatives,
            epochs=self.cfg.text_epochs if text else self.cfg.epochs,
            initial_lr=self.cfg.learning_rate,
            min_count=self.cfg.text_min_count if text else 1,
            seed=self.cfg.seed,
            workers=self.cfg.workers,
        )

    def fusion_config(self, exclude: Sequence[str]) -> FusionTrainConfig:
        return FusionTrainConfig(
            learning_rate=self.cfg.fusion_lr,
            epochs=self.cfg.fusion_epochs,
            seed=self.cfg.seed,
            alpha=self.cfg.alpha,
            denoise_sigma=self.cfg.denoise_sigma,
            exclude_ids=frozenset(exclude) if self.cfg.fusion_exclude_eval else frozenset(),
        )

    def run(self) -> EvalReport:
        with _exclusive(self.out):
            return self._run()

    def _run(self) -> EvalReport:
        cfg = self.cfg
        corpus_path, registry_path, pairs_path = cfg.corpus, cfg.registry, cfg.pairs

        if cfg.synthetic:
            synth_dir = self._p("synthetic")
            spec = SyntheticSpec(
                communities=cfg.synthetic_communities,
                docs_per_community=cfg.synthetic_docs_per_community,
                noise=cfg.synthetic_noise,
            )
            self._exec(
                Stage(
                    "synth",
                    [],
                    [synth_dir / "corpus.jsonl", synth_dir / "registry.tsv", synth_dir / "pairs.tsv"],
                    {"spec": spec.__dict__, "seed": cfg.seed},
                    lambda: generate_synthetic_corpus(spec, cfg.seed, synth_dir),
                )
            )
            corpus_path = synth_dir / "corpus.jsonl"
            registry_path = synth_dir / "registry.tsv"
            pairs_path = synth_dir / "pairs.tsv"
        if corpus_path is None or pairs_path is None:
            raise ConfigError("corpus and pairs are required unless synthetic=true")
        corpus_path, pairs_path = Path(corpus_path), Path(pairs_path)

        normalized = self._p("corpus.norm.jsonl")

        def _parse() -> None:
            registry = load_act_registry(registry_path) if registry_path else None
            cases, statutes = parse_corpus(corpus_path, registry=registry)
            write_corpus(normalized, cases, statutes)

        parse_inputs = [corpus_path] + ([Path(registry_path)] if registry_path else [])
        self._exec(Stage("parse", parse_inputs, [normalized], {}, _parse))

        hier_path, pc_path, report_path = self._p("hier_spcnet.graph"), self._p("pcnet.graph"), self._p("build_report.json")

        def _build() -> None:
            cases, statutes = parse_corpus(normalized)
            graph = build_hier_spcnet(cases, statutes)
            save_graph(graph, hier_path)
            save_graph(pcnet_view(graph), pc_path)
            report_path.write_text(json.dumps(graph.report.to_dict(), indent=2) + "\n")

        self._exec(Stage("build-net", [normalized], [hier_path, pc_path, report_path], {}, _build))

        pairs = load_pairs(pairs_path)
        eval_ids = sorted(pairs.ids)
        method = cfg.method
        graphs = {"hierspcnet": hier_path, "pcnet": pc_path}

        weights_param = (cfg.weights or "none").lower()
        text_path: Optional[Path] = None
        if method in ("text", "paper2vec") or method in FUSION_METHODS or weights_param == "sch2":
            text_path = self._text_stage(normalized, eval_ids)

        net_path: Optional[Path] = None
        if method in NETWORK_METHODS or method in FUSION_METHODS:
            net_method = method if method in NETWORK_METHODS else cfg.network_method
            net_path = self._network_stage(net_method, graphs)

        scores_path = self._p(f"scores.{method}.tsv")
        score_inputs = [pairs_path] + [p for p in (text_path, net_path) if p is not None]

        if method in CLASSIC_METHODS:
            measure, network = CLASSIC_METHODS[method]
            score_inputs.append(graphs[network])
            self._exec(
                Stage(
                    "score",
                    score_inputs,
                    [scores_path],
                    {"method": method},
                    lambda: self._score_classic(measure, graphs[network], pairs_path, scores_path),
                )
            )
        else:
            state_builder = self._fusion_stage(method, text_path, net_path, eval_ids, score_inputs)
            self._exec(
                Stage(
                    "score",
                    score_inputs,
                    [scores_path],
                    {"method": method, "alpha": cfg.alpha, "renormalize": cfg.renormalize_mapped},
                    lambda: self._score_embedding(method, state_builder(), pairs_path, scores_path),
                )
            )

        report_file = self._p(f"report.{method}.json")
        weight_inputs = [scores_path, pairs_path, normalized] + ([text_path] if weights_param == "sch2" else [])
        result: Dict[str, EvalReport] = {}

        def _eval() -> None:
            scored = attach_scores(load_pairs(pairs_path), load_scores(scores_path))
            weights = None
            if weights_param == "sch1":
                pc = load_graph(pc_path)
                cited = {
                    frozenset((e.src.id, e.dst.id)) for e in pc.edges() if e.edge_kind == EdgeKind.CITATION
                }
                weights = derive_weights("sch1", n_d=len(pc), n_c=len(cited))
            elif weights_param == "sch2":
                cases, _ = parse_corpus(normalized)
                weights = derive_weights("sch2", text_emb=load_embeddings(text_path), docs=cases, seed=cfg.seed)
            elif weights_param != "none":
                raise ConfigError(f"weights must be sch1, sch2 or none, not {cfg.weights!r}")
            report = evaluate_pairs(scored, weights, config=cfg.as_dict())
            write_report(report, report_file)
            result["report"] = report

        self._exec(Stage("eval", weight_inputs, [report_file], {"weights": weights_param, "config": cfg.as_dict()}, _eval))
        if "report" not in result:
            result["report"] = _load_report(report_file)
        logger.info(
            "Pipeline finished",
            extra={"method": method, "executed": self.executed, "cached": self.reused, "report": str(report_file)},
        )
        return result["report"]

    def _text_stage(self, normalized: Path, eval_ids: Sequence[str]) -> Path:
        cfg = self.cfg
        text_path = self._p("text_emb.txt")
        pre = TextPreprocessConfig(
            stopword_file=str(cfg.stopword_file) if cfg.stopword_file else None,
            stemming=Stemming(cfg.stemming),
        )

        def _train() -> None:
            cases, _ = parse_corpus(normalized)
            held_out = set(eval_ids) if cfg.text_infer_eval else set()
            train_docs = [c for c in cases if c.id not in held_out]
            if len(train_docs) < 2:
                logger.warning(
                    "Too few documents outside the evaluation set; training text vectors jointly",
                    extra={"docs": len(cases), "eval_docs": len(held_out)},
                )
                train_docs, held_out = cases, set()
            model = train_paragraph_vectors(train_docs, pre, self.sgns_config(text=True))
            table: EmbeddingTable = model
            infer_docs = [c for c in cases if c.id in held_out]
            if infer_docs:
                inferred = model.infer(infer_docs)
                table = EmbeddingTable(
                    list(model.ids) + list(inferred.ids),
                    np.vstack([model.matrix, inferred.matrix]),
                )
            save_embeddings(table, text_path)

        inputs = [normalized] + ([Path(cfg.stopword_file)] if cfg.stopword_file else [])
        params = {
            "sgns": self.sgns_config(text=True).__dict__,
            "pre": {"stemming": pre.stemming.value, "lowercase": pre.lowercase},
            "held_out": sorted(eval_ids) if cfg.text_infer_eval else [],
        }
        self._exec(Stage("train-text-emb", inputs, [text_path], params, _train))
        return text_path

    def _network_stage(self, net_method: str, graphs: Dict[str, Path]) -> Path:
        network, style, policy = NETWORK_METHODS[net_method]
        walks_path = self._p(f"walks.{net_method}.txt")
        emb_path = self._p(f"net_emb.{net_method}.txt")
        graph_path = graphs[network]
        walk_cfg = self.walk_config(policy)

        def _walk() -> None:
            graph = load_graph(graph_path)
            if style == "uniform":
                corpus = generate_uniform_walks(graph, walk_cfg)
            else:
                if policy == WalkPolicy.ICF:
                    compute_icf(graph)
                schemas = builtin_metapaths() if network == "hierspcnet" else [parse_schema("doc-doc-doc")]
                corpus = generate_metapath_walks(graph, schemas, walk_cfg)
            save_walk_corpus(corpus, walks_path)

        self._exec(
            Stage("walk", [graph_path], [walks_path], {"method": net_method, "walk": walk_cfg.__dict__}, _walk)
        )

        def _train() -> None:
            graph = load_graph(graph_path)
            table = train_skipgram(load_walk_corpus(walks_path), self.sgns_config(), ids=[n.id for n in graph.nodes])
            docs = [n.id for n in graph.nodes_of_type(NodeType.DOCUMENT) if n.id in table]
            save_embeddings(table.subset(docs), emb_path)

        self._exec(
            Stage("train-net-emb", [walks_path, graph_path], [emb_path], {"sgns": self.sgns_config().__dict__}, _train)
        )
        return emb_path

    def _fusion_stage(
        self,
        method: str,
        text_path: Optional[Path],
        net_path: Optional[Path],
        eval_ids: Sequence[str],
        score_inputs: List[Path],
    ) -> Callable[[], FusionState]:
        cfg = self.cfg
        model_path: Optional[Path] = None
        p2v_path: Optional[Path] = None

        if method in ("nn_map_conc", "nn_map_wtd_conc", "autoencoder"):
            kind = "autoencoder" if method == "autoencoder" else "mapnet"
            model_path = self._p(f"{kind}.{cfg.network_method}.json")
            fusion_cfg = self.fusion_config(eval_ids)

            def _train() -> None:
                inp = FusionInput.from_tables(load_embeddings(text_path), load_embeddings(net_path))
                model = train_autoencoder(inp, fusion_cfg) if kind == "autoencoder" else train_map_net(inp, fusion_cfg)
                save_model(model, model_path, config={"fusion": {k: v for k, v in fusion_cfg.__dict__.items() if k != "exclude_ids"}})

            self._exec(
                Stage(
                    f"fuse-train-{kind}",
                    [text_path, net_path],
                    [model_path],
                    {"fusion": {**fusion_cfg.__dict__, "exclude_ids": sorted(fusion_cfg.exclude_ids)}},
                    _train,
                )
            )
            score_inputs.append(model_path)

        if method == "paper2vec":
            p2v_path = self._p("paper2vec_emb.txt")
            walk_cfg = self.walk_config(WalkPolicy.UNIFORM)

            def _paper2vec() -> None:
                graph = build_text_similarity_graph(load_embeddings(text_path), cfg.paper2vec_threshold)
                corpus = generate_uniform_walks(graph, walk_cfg)
                table = train_skipgram(corpus, self.sgns_config(), ids=[n.id for n in graph.nodes])
                save_embeddings(table, p2v_path)

            self._exec(
                Stage(
                    "paper2vec",
                    [text_path],
                    [p2v_path],
                    {"threshold": cfg.paper2vec_threshold, "walk": walk_cfg.__dict__, "sgns": self.sgns_config().__dict__},
                    _paper2vec,
                )
            )
            score_inputs.append(p2v_path)

        def _state() -> FusionState:
            model = load_model(model_path) if model_path else None
            return FusionState(
                text_emb=load_embeddings(text_path) if text_path else None,
                net_emb=load_embeddings(net_path) if net_path else None,
                map_net=model if method.startswith("nn_map") else None,
                autoencoder=model if method == "autoencoder" else None,
                paper2vec_emb=load_embeddings(p2v_path) if p2v_path else None,
                alpha=cfg.alpha,
                renormalize=cfg.renormalize_mapped,
            )

        return _state

    def _score_classic(self, measure: str, graph_path: Path, pairs_path: Path, scores_path: Path) -> None:
        graph = load_graph(graph_path)
        pairs = load_pairs(pairs_path)
        fn = MEASURES[measure]
        raw: List[float] = []
        missing = 0
        for row in pairs.rows:
            if row.id_a in graph and row.id_b in graph:
                raw.append(fn(graph, row.id_a, row.id_b))
            else:
                missing += 1
                raw.append(0.0)
        if measure == "dispersion" and raw:
            raw = normalize_scores(raw)
        if missing:
            logger.warning("Pairs with documents absent from the graph scored 0", extra={"pairs": missing})
        write_scores([(r.id_a, r.id_b, s) for r, s in zip(pairs.rows, raw)], scores_path)

    def _score_embedding(self, method: str, state: FusionState, pairs_path: Path, scores_path: Path) -> None:
        pairs = load_pairs(pairs_path)
        rows = []
        missing = 0
        for row in pairs.rows:
            try:
                score = pair_similarity(
                    _pair_method(method), row.id_a, row.id_b, state
                )
            except MissingIdError:
                missing += 1
                score = 0.0
            rows.append((row.id_a, row.id_b, score))
        if missing:
            logger.warning("Pairs without embeddings scored 0", extra={"method": method, "pairs": missing})
        write_scores(rows, scores_path)


def _pair_method(method: str) -> str:
    return "network" if method in NETWORK_METHODS else method


def _load_report(path: Path) -> EvalReport:
    data = json.loads(path.read_text(encoding="utf-8"))
    return EvalReport(**data)


def run_pipeline(cfg: PipelineConfig) -> EvalReport:
    """Run every stage ``cfg.method`` needs; the report is also written to the output directory."""
    return Pipeline(cfg).run()
