"""
Skip-gram with negative sampling over walk corpora, paragraph vectors over
document text, and the EmbeddingTable both produce.
"""
from __future__ import annotations

import logging
import math
import re
from collections import Counter
from pathlib import Path
from typing import Dict, Hashable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.multiprocessing as mp
import torch.nn as nn
import torch.nn.functional as F

from .errors import EmbeddingError, MissingIdError
from .models import (
    CaseDocument,
    SgnsConfig,
    Stemming,
    TextPreprocessConfig,
    WalkCorpus,
)

logger = logging.getLogger(__name__)


class EmbeddingTable:
    """Fixed-dimension vectors keyed by id, stored as one float64 matrix."""

    def __init__(self, ids: Sequence[str], vectors: np.ndarray) -> None:
        matrix = np.asarray(vectors, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(ids):
            raise EmbeddingError(
                f"expected a ({len(ids)}, dim) matrix, got shape {matrix.shape}"
            )
        if not np.all(np.isfinite(matrix)):
            raise EmbeddingError("embedding table contains NaN or Inf")
        self.ids: List[str] = [str(i) for i in ids]
        self._index: Dict[str, int] = {}
        for row, key in enumerate(self.ids):
            if key in self._index:
                raise EmbeddingError(f"duplicate embedding id: {key}")
            self._index[key] = row
        self.matrix = matrix
        self._norms: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, key: object) -> bool:
        return key in self._index

    def row(self, key: str) -> int:
        try:
            return self._index[key]
        except KeyError:
            raise MissingIdError(f"no embedding for id {key!r}") from None

    def vector(self, key: str) -> np.ndarray:
        return self.matrix[self.row(key)]

    def norm(self, key: str) -> float:
        if self._norms is None:
            self._norms = np.linalg.norm(self.matrix, axis=1)
        return float(self._norms[self.row(key)])

    def normalized(self) -> "EmbeddingTable":
        norms = np.linalg.norm(self.matrix, axis=1, keepdims=True)
        zero = [self.ids[i] for i in np.flatnonzero(norms[:, 0] == 0.0)]
        if zero:
            raise EmbeddingError(f"cannot L2-normalize zero vectors: {zero[:5]}")
        return EmbeddingTable(self.ids, self.matrix / norms)

    def subset(self, keys: Iterable[str]) -> "EmbeddingTable":
        keys = list(keys)
        return EmbeddingTable(keys, self.matrix[[self.row(k) for k in keys]])


def cosine(x: np.ndarray, y: np.ndarray, raw: bool = False) -> float:
    nx_, ny_ = np.linalg.norm(x), np.linalg.norm(y)
    if nx_ == 0.0 or ny_ == 0.0:
        raise EmbeddingError("cosine undefined for a zero vector")
    value = float(np.dot(x, y) / (nx_ * ny_))
    value = min(1.0, max(-1.0, value))
    return value if raw else max(0.0, value)


def cosine_similarity(t: EmbeddingTable, a: str, b: str, raw: bool = False) -> float:
    """Cosine of two stored vectors, clamped below at 0 unless ``raw``."""
    if t.norm(a) == 0.0 or t.norm(b) == 0.0:
        raise EmbeddingError(f"zero vector for {a if t.norm(a) == 0.0 else b}")
    return cosine(t.vector(a), t.vector(b), raw=raw)


def sgns_loss(
    center_vecs: torch.Tensor, context_vecs: torch.Tensor, negative_vecs: torch.Tensor
) -> torch.Tensor:
    """
    Summed negative-sampling loss for a batch: shapes (B, d), (B, d), (B, K, d).
    """
    positive = F.logsigmoid((center_vecs * context_vecs).sum(-1))
    negative = F.logsigmoid(
        -torch.bmm(negative_vecs, center_vecs.unsqueeze(-1)).squeeze(-1)
    ).sum(-1)
    return -(positive + negative).sum()


class SkipGramModel(nn.Module):
    """Center (input) and context (output) tables; float64, sparse gradients."""

    def __init__(
        self, n_centers: int, n_contexts: int, dim: int, generator: torch.Generator
    ) -> None:
        super().__init__()
        self.center = nn.Embedding(n_centers, dim, sparse=True, dtype=torch.float64)
        self.context = nn.Embedding(n_contexts, dim, sparse=True, dtype=torch.float64)
        bound = 0.5 / dim
        with torch.no_grad():
            init = torch.rand(n_centers, dim, generator=generator, dtype=torch.float64)
            self.center.weight.copy_((init * 2.0 - 1.0) * bound)
            self.context.weight.zero_()

    def forward(
        self, centers: torch.Tensor, contexts: torch.Tensor, negatives: torch.Tensor
    ) -> torch.Tensor:
        return sgns_loss(self.center(centers), self.context(contexts), self.context(negatives))


class SkipGramEmbeddings(EmbeddingTable):
    """Center vectors as the table, plus context vectors and the loss curve."""

    def __init__(
        self,
        ids: Sequence[str],
        vectors: np.ndarray,
        context_vectors: Optional[np.ndarray] = None,
        loss_history: Optional[List[float]] = None,
    ) -> None:
        super().__init__(ids, vectors)
        self.context_vectors = context_vectors
        self.loss_history = list(loss_history or [])

    def context_vector(self, key: str) -> np.ndarray:
        if self.context_vectors is None:
            raise EmbeddingError("context vectors were not kept for this table")
        return self.context_vectors[self.row(key)]


def _noise_distribution(counts: Sequence[int]) -> torch.Tensor:
    weights = torch.tensor(counts, dtype=torch.float64) ** 0.75
    return weights / weights.sum()


def _train_pairs(
    model: SkipGramModel,
    params: List[torch.Tensor],
    centers: torch.Tensor,
    contexts: torch.Tensor,
    noise: torch.Tensor,
    cfg: SgnsConfig,
    epochs: int,
    generator: torch.Generator,
    label: str,
) -> List[float]:
    """Minibatch SGD with linearly decaying learning rate; returns mean loss per epoch."""
    optimizer = torch.optim.SGD(params, lr=cfg.initial_lr)
    n = int(centers.numel())
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = max(1, epochs * steps_per_epoch)
    floor = cfg.initial_lr * 1e-4
    history: List[float] = []
    step = 0
    for epoch in range(epochs):
        order = torch.randperm(n, generator=generator)
        running = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            negatives = torch.multinomial(
                noise, batch.numel() * cfg.negatives, replacement=True, generator=generator
            ).view(-1, cfg.negatives)
            lr = max(floor, cfg.initial_lr * (1.0 - step / total_steps))
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.zero_grad()
            loss = model(centers[batch], contexts[batch], negatives)
            loss.backward()
            optimizer.step()
            running += float(loss.item())
            step += 1
        history.append(running / max(1, n))
        logger.info(
            "SGNS epoch finished",
            extra={"trainer": label, "epoch": epoch + 1, "mean_loss": round(history[-1], 6), "pairs": n},
        )
    return history


def _hogwild_worker(
    rank: int,
    model: SkipGramModel,
    centers: torch.Tensor,
    contexts: torch.Tensor,
    noise: torch.Tensor,
    cfg: SgnsConfig,
    epochs: int,
) -> None:
    torch.set_num_threads(1)
    generator = torch.Generator().manual_seed(cfg.seed + rank + 1)
    shard = torch.arange(rank, centers.numel(), cfg.workers)
    _train_pairs(
        model,
        list(model.parameters()),
        centers[shard],
        contexts[shard],
        noise,
        cfg,
        epochs,
        generator,
        f"hogwild-{rank}",
    )


def _fit(
    model: SkipGramModel,
    centers: torch.Tensor,
    contexts: torch.Tensor,
    noise: torch.Tensor,
    cfg: SgnsConfig,
    epochs: int,
    generator: torch.Generator,
    label: str,
) -> List[float]:
    if cfg.workers <= 1:
        return _train_pairs(
            model, list(model.parameters()), centers, contexts, noise, cfg, epochs, generator, label
        )
    # lock-free shared tables; not bit-reproducible
    model.share_memory()
    workers = [
        mp.Process(
            target=_hogwild_worker,
            args=(rank, model, centers, contexts, noise, cfg, epochs),
        )
        for rank in range(cfg.workers)
    ]
    for proc in workers:
        proc.start()
    for proc in workers:
        proc.join()
    failed = [p.exitcode for p in workers if p.exitcode != 0]
    if failed:
        raise EmbeddingError(f"{label}: {len(failed)} hogwild worker(s) failed")
    return []


def _window_pairs(sequences: List[List[int]], window: int) -> Tuple[np.ndarray, np.ndarray]:
    """All (center, context) index pairs within ``window`` positions, per sequence."""
    if not sequences:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    tokens = np.concatenate([np.asarray(s, dtype=np.int64) for s in sequences])
    sentence = np.repeat(np.arange(len(sequences)), [len(s) for s in sequences])
    centers: List[np.ndarray] = []
    contexts: List[np.ndarray] = []
    for offset in range(1, window + 1):
        if offset >= tokens.size:
            break
        same = sentence[:-offset] == sentence[offset:]
        left, right = tokens[:-offset][same], tokens[offset:][same]
        centers.extend([left, right])
        contexts.extend([right, left])
    if not centers:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(centers), np.concatenate(contexts)


def _build_vocab(
    sequences: Iterable[Sequence[Hashable]], min_count: int
) -> Tuple[List[Hashable], List[int], Dict[Hashable, int]]:
    counts = Counter(tok for seq in sequences for tok in seq)
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_count),
        key=lambda tok: (-counts[tok], str(tok)),
    )
    return kept, [counts[t] for t in kept], {tok: i for i, tok in enumerate(kept)}


def train_skipgram(
    corpus: Union[WalkCorpus, Sequence[Sequence[Hashable]]],
    cfg: SgnsConfig,
    ids: Optional[Sequence[str]] = None,
) -> SkipGramEmbeddings:
    """
    Train SGNS over walk sequences. Tokens are node indices (mapped through
    ``ids`` when given) or any hashable; tokens rarer than ``cfg.min_count``
    are dropped from the sequences before windowing.
    """
    if cfg.window < 1 or cfg.negatives < 1:
        raise EmbeddingError("window and negatives must be >= 1")
    sequences = list(corpus.sequences if isinstance(corpus, WalkCorpus) else corpus)
    vocab, counts, index = _build_vocab(sequences, cfg.min_count)
    if not vocab:
        raise EmbeddingError("empty corpus after min_count filtering")
    encoded = [[index[t] for t in seq if t in index] for seq in sequences]
    centers_np, contexts_np = _window_pairs([s for s in encoded if len(s) > 1], cfg.window)
    if centers_np.size == 0:
        raise EmbeddingError("corpus has no co-occurring tokens to train on")

    generator = torch.Generator().manual_seed(cfg.seed)
    model = SkipGramModel(len(vocab), len(vocab), cfg.dim, generator)
    history = _fit(
        model,
        torch.from_numpy(centers_np),
        torch.from_numpy(contexts_np),
        _noise_distribution(counts),
        cfg,
        cfg.epochs,
        generator,
        "skipgram",
    )
    keys = [ids[int(tok)] if ids is not None else str(tok) for tok in vocab]
    logger.info(
        "Skip-gram trained",
        extra={"vocab": len(vocab), "pairs": int(centers_np.size), "dim": cfg.dim},
    )
    return SkipGramEmbeddings(
        keys,
        model.center.weight.detach().numpy().copy(),
        context_vectors=model.context.weight.detach().numpy().copy(),
        loss_history=history,
    )


_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)

_SUFFIX_RULES: Tuple[Tuple[str, str], ...] = (
    ("ational", "ate"),
    ("ization", "ize"),
    ("fulness", "ful"),
    ("ousness", "ous"),
    ("iveness", "ive"),
    ("ments", "ment"),
    ("ness", ""),
    ("ings", ""),
    ("ing", ""),
    ("edly", ""),
    ("ies", "y"),
    ("ed", ""),
    ("es", ""),
    ("ly", ""),
    ("s", ""),
)


def suffix_strip(token: str) -> str:
    """Conservative English suffix stripping; stems shorter than 3 are left alone."""
    if token.endswith("ss"):
        return token
    for suffix, replacement in _SUFFIX_RULES:
        if token.endswith(suffix):
            stem = token[: -len(suffix)] + replacement
            return stem if len(stem) >= 3 else token
    return token


def load_stopwords(path: Union[str, Path, None]) -> frozenset:
    if path is None:
        return frozenset()
    with Path(path).open("r", encoding="utf-8") as fh:
        return frozenset(line.strip().lower() for line in fh if line.strip())


def preprocess(
    text: str, pre: TextPreprocessConfig, stopwords: Optional[frozenset] = None
) -> List[str]:
    if stopwords is None:
        stopwords = load_stopwords(pre.stopword_file)
    tokens = _TOKEN.findall(text.lower() if pre.lowercase else text)
    tokens = [t for t in tokens if t.lower() not in stopwords]
    if Stemming(pre.stemming) == Stemming.SUFFIX_STRIP:
        tokens = [suffix_strip(t) for t in tokens]
    return tokens


class ParagraphVectors(SkipGramEmbeddings):
    """Document vectors plus the frozen word side needed to infer new documents."""

    def __init__(
        self,
        ids: Sequence[str],
        vectors: np.ndarray,
        vocab: Sequence[str],
        word_counts: Sequence[int],
        word_vectors: np.ndarray,
        pre: TextPreprocessConfig,
        cfg: SgnsConfig,
        loss_history: Optional[List[float]] = None,
    ) -> None:
        super().__init__(ids, vectors, context_vectors=None, loss_history=loss_history)
        self.vocab = list(vocab)
        self.word_index = {w: i for i, w in enumerate(self.vocab)}
        self.word_counts = list(word_counts)
        self.word_vectors = word_vectors
        self.pre = pre
        self.cfg = cfg

    def infer(
        self, docs: Sequence[CaseDocument], epochs: Optional[int] = None
    ) -> EmbeddingTable:
        """
        Fit vectors for unseen documents with the word side frozen. Documents
        without any in-vocabulary token are left out of the result.
        """
        stopwords = load_stopwords(self.pre.stopword_file)
        encoded: List[List[int]] = []
        kept: List[str] = []
        for doc in docs:
            tokens = [
                self.word_index[t]
                for t in preprocess(doc.text, self.pre, stopwords)
                if t in self.word_index
            ]
            if not tokens:
                logger.warning("No in-vocabulary tokens; not inferred", extra={"doc_id": doc.id})
                continue
            kept.append(doc.id)
            encoded.append(tokens)
        if not kept:
            raise EmbeddingError("none of the documents share vocabulary with the model")
        generator = torch.Generator().manual_seed(self.cfg.seed)
        model = SkipGramModel(len(kept), len(self.vocab), self.dim, generator)
        with torch.no_grad():
            model.context.weight.copy_(torch.from_numpy(self.word_vectors))
        model.context.weight.requires_grad_(False)
        centers, contexts = _doc_token_pairs(encoded)
        _train_pairs(
            model,
            [model.center.weight],
            centers,
            contexts,
            _noise_distribution(self.word_counts),
            self.cfg,
            epochs if epochs is not None else self.cfg.epochs,
            generator,
            "paragraph-infer",
        )
        return EmbeddingTable(kept, model.center.weight.detach().numpy().copy())


def _doc_token_pairs(encoded: List[List[int]]) -> Tuple[torch.Tensor, torch.Tensor]:
    centers = np.repeat(np.arange(len(encoded), dtype=np.int64), [len(t) for t in encoded])
    contexts = np.concatenate([np.asarray(t, dtype=np.int64) for t in encoded])
    return torch.from_numpy(centers), torch.from_numpy(contexts)


def train_paragraph_vectors(
    docs: Sequence[CaseDocument], pre: TextPreprocessConfig, cfg: SgnsConfig
) -> ParagraphVectors:
    """
    Distributed bag of words: each document id is a center predicting every
    token of its own text under the negative-sampling objective.
    """
    stopwords = load_stopwords(pre.stopword_file)
    tokenized: List[List[str]] = []
    for doc in docs:
        tokens = preprocess(doc.text, pre, stopwords)
        if not tokens:
            raise EmbeddingError(f"{doc.id}: document has no tokens after preprocessing")
        tokenized.append(tokens)
    vocab, counts, index = _build_vocab(tokenized, cfg.min_count)
    if not vocab:
        raise EmbeddingError("empty vocabulary after preprocessing")

    kept_ids: List[str] = []
    encoded: List[List[int]] = []
    for doc, tokens in zip(docs, tokenized):
        ids = [index[t] for t in tokens if t in index]
        if not ids:
            logger.warning(
                "Document has no tokens above min_count; left out",
                extra={"doc_id": doc.id, "min_count": cfg.min_count},
            )
            continue
        kept_ids.append(doc.id)
        encoded.append(ids)

    generator = torch.Generator().manual_seed(cfg.seed)
    model = SkipGramModel(len(kept_ids), len(vocab), cfg.dim, generator)
    centers, contexts = _doc_token_pairs(encoded)
    history = _fit(
        model, centers, contexts, _noise_distribution(counts), cfg, cfg.epochs, generator, "paragraph"
    )
    logger.info(
        "Paragraph vectors trained",
        extra={"docs": len(kept_ids), "vocab": len(vocab), "dim": cfg.dim},
    )
    return ParagraphVectors(
        kept_ids,
        model.center.weight.detach().numpy().copy(),
        vocab=[str(v) for v in vocab],
        word_counts=counts,
        word_vectors=model.context.weight.detach().numpy().copy(),
        pre=pre,
        cfg=cfg,
        loss_history=history,
    )


def save_embeddings(table: EmbeddingTable, path: Union[str, Path]) -> None:
    """``<count> <dim>`` header, then ``<id> <v1> ... <vdim>`` per line."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for key, vec in zip(table.ids, table.matrix):
            if any(ch.isspace() for ch in key):
                raise EmbeddingError(f"id not exportable (whitespace): {key!r}")
            fh.write(key + " " + " ".join(repr(float(x)) for x in vec) + "\n")


def load_embeddings(path: Union[str, Path], expected_dim: Optional[int] = None) -> EmbeddingTable:
    with Path(path).open("r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise EmbeddingError(f"{path}: header must be '<count> <dim>'")
        count, dim = int(header[0]), int(header[1])
        if expected_dim is not None and dim != expected_dim:
            raise EmbeddingError(f"{path}: dim {dim} does not match expected {expected_dim}")
        ids: List[str] = []
        rows: List[List[float]] = []
        for line_no, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise EmbeddingError(
                    f"{path}:{line_no}: expected {dim} values, got {len(parts) - 1}"
                )
            ids.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(ids) != count:
        raise EmbeddingError(f"{path}: header says {count} vectors, found {len(ids)}")
    matrix = np.asarray(rows, dtype=np.float64).reshape(len(ids), dim)
    return EmbeddingTable(ids, matrix)
