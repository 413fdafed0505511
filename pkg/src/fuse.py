"""Text/network fusion: value and embedding combination, NN mapping, bimodal autoencoder, Paper2Vec graph."""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn

from .embed import EmbeddingTable, cosine
from .errors import FusionError, MissingIdError
from .graph import HeteroGraph
from .models import EdgeKind, FusionTrainConfig, NodeType

logger = logging.getLogger(__name__)

MULTIMODAL_WIDTH = 300


@dataclass
class FusionInput:
    """Text and network tables, each L2-normalized per vector."""

    text_emb: EmbeddingTable
    net_emb: EmbeddingTable

    @classmethod
    def from_tables(cls, text_emb: EmbeddingTable, net_emb: EmbeddingTable) -> "FusionInput":
        if text_emb.dim != net_emb.dim:
            raise FusionError(
                f"text dim {text_emb.dim} differs from network dim {net_emb.dim}"
            )
        inp = cls(text_emb=text_emb.normalized(), net_emb=net_emb.normalized())
        if not inp.common_ids():
            raise FusionError("text and network tables share no document ids")
        return inp

    @property
    def dim(self) -> int:
        return self.text_emb.dim

    def common_ids(self) -> List[str]:
        return sorted(set(self.text_emb.ids) & set(self.net_emb.ids))

    def pair_vectors(self, key: str) -> Tuple[np.ndarray, np.ndarray]:
        return self.text_emb.vector(key), self.net_emb.vector(key)


def combine_values(text_sim: float, nw_sim: float, mode: str) -> float:
    for value in (text_sim, nw_sim):
        if not 0.0 <= value <= 1.0:
            raise FusionError(f"similarity {value} outside [0, 1]")
    if mode == "average":
        return (text_sim + nw_sim) / 2.0
    if mode == "max":
        return max(text_sim, nw_sim)
    raise FusionError(f"unknown value combination {mode!r}")


def combine_embeddings(t: np.ndarray, n: np.ndarray, mode: str) -> np.ndarray:
    t, n = np.asarray(t, dtype=np.float64), np.asarray(n, dtype=np.float64)
    if t.shape != n.shape:
        raise FusionError(f"dim mismatch: {t.shape} vs {n.shape}")
    if mode == "average":
        return (t + n) / 2.0
    if mode == "max":
        return np.maximum(t, n)
    if mode == "concat":
        return np.concatenate([t, n])
    raise FusionError(f"unknown embedding combination {mode!r}")


class MapNet(nn.Module):
    """Text vector -> predicted network vector through two ReLU hidden layers."""

    def __init__(self, dim: int, hidden: Tuple[int, int] = (250, 300)) -> None:
        super().__init__()
        self.dim = dim
        self.hidden = tuple(hidden)
        self.layers = nn.Sequential(
            nn.Linear(dim, hidden[0]),
            nn.ReLU(),
            nn.Linear(hidden[0], hidden[1]),
            nn.ReLU(),
            nn.Linear(hidden[1], dim),
        ).double()

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        return self.layers(t)


def map_loss(predicted: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Half squared error per example, averaged over the batch."""
    return 0.5 * ((predicted - target) ** 2).sum(-1).mean()


class BimodalAutoencoder(nn.Module):
    """
    Text (150) and network (100) encoders feeding a shared 300-wide layer;
    mirrored decoders reconstruct both inputs.
    """

    def __init__(self, text_dim: int, net_dim: int, text_width: int = 150, net_width: int = 100) -> None:
        super().__init__()
        self.text_dim, self.net_dim = text_dim, net_dim
        self.text_width, self.net_width = text_width, net_width
        self.text_encoder = nn.Sequential(nn.Linear(text_dim, text_width), nn.ReLU())
        self.net_encoder = nn.Sequential(nn.Linear(net_dim, net_width), nn.ReLU())
        self.joint = nn.Sequential(nn.Linear(text_width + net_width, MULTIMODAL_WIDTH), nn.ReLU())
        self.split = nn.Sequential(nn.Linear(MULTIMODAL_WIDTH, text_width + net_width), nn.ReLU())
        self.text_decoder = nn.Linear(text_width, text_dim)
        self.net_decoder = nn.Linear(net_width, net_dim)
        self.double()

    def encode(self, t: torch.Tensor, n: torch.Tensor) -> torch.Tensor:
        return self.joint(torch.cat([self.text_encoder(t), self.net_encoder(n)], dim=-1))

    def forward(self, t: torch.Tensor, n: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        hidden = self.split(self.encode(t, n))
        text_part, net_part = hidden[..., : self.text_width], hidden[..., self.text_width:]
        return self.text_decoder(text_part), self.net_decoder(net_part)


def reconstruction_loss(
    t: torch.Tensor, n: torch.Tensor, t_rec: torch.Tensor, n_rec: torch.Tensor
) -> torch.Tensor:
    """||t' - t||^2 + ||n' - n||^2 per example, averaged over the batch."""
    return (((t_rec - t) ** 2).sum(-1) + ((n_rec - n) ** 2).sum(-1)).mean()


def _split_pool(inp: FusionInput, cfg: FusionTrainConfig) -> Tuple[List[str], List[str]]:
    pool = [key for key in inp.common_ids() if key not in cfg.exclude_ids]
    if len(pool) < 2:
        raise FusionError(
            f"need at least 2 training documents with both embeddings, have {len(pool)}"
        )
    order = np.random.default_rng(cfg.seed).permutation(len(pool))
    shuffled = [pool[i] for i in order]
    n_train = min(len(pool) - 1, max(1, int(round(cfg.train_fraction * len(pool)))))
    return shuffled[:n_train], shuffled[n_train:]


def _stack(inp: FusionInput, keys: Sequence[str]) -> Tuple[torch.Tensor, torch.Tensor]:
    t = np.stack([inp.text_emb.vector(k) for k in keys])
    n = np.stack([inp.net_emb.vector(k) for k in keys])
    return torch.from_numpy(t), torch.from_numpy(n)


def _fit(
    model: nn.Module,
    batch_loss: Callable[[torch.Tensor, torch.Tensor, bool], torch.Tensor],
    train: Tuple[torch.Tensor, torch.Tensor],
    val: Tuple[torch.Tensor, torch.Tensor],
    cfg: FusionTrainConfig,
    label: str,
) -> nn.Module:
    """AdamW over minibatches; keeps the weights with the lowest validation loss."""
    generator = torch.Generator().manual_seed(cfg.seed)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay
    )
    best_loss = float("inf")
    best_state = copy.deepcopy(model.state_dict())
    model.train_history = []
    model.val_history = []
    n_train = train[0].shape[0]
    for epoch in range(cfg.epochs):
        model.train()
        order = torch.randperm(n_train, generator=generator)
        running = 0.0
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            optimizer.zero_grad()
            loss = batch_loss(train[0][idx], train[1][idx], True)
            loss.backward()
            optimizer.step()
            running += float(loss.item()) * idx.numel()
        model.eval()
        with torch.no_grad():
            val_loss = float(batch_loss(val[0], val[1], False).item())
        model.train_history.append(running / n_train)
        model.val_history.append(val_loss)
        if val_loss < best_loss:
            best_loss = val_loss
            best_state = copy.deepcopy(model.state_dict())
        logger.debug(
            "Fusion epoch finished",
            extra={"model": label, "epoch": epoch + 1, "train_loss": running / n_train, "val_loss": val_loss},
        )
    model.load_state_dict(best_state)
    model.best_val_loss = best_loss
    model.eval()
    logger.info(
        "Fusion model trained",
        extra={"model": label, "train_docs": n_train, "val_docs": val[0].shape[0], "best_val_loss": best_loss},
    )
    return model


def train_map_net(inp: FusionInput, cfg: FusionTrainConfig) -> MapNet:
    """Fit text -> network mapping on the self-supervised pool minus excluded ids."""
    train_ids, val_ids = _split_pool(inp, cfg)
    torch.manual_seed(cfg.seed)
    model = MapNet(inp.dim)

    def batch_loss(t: torch.Tensor, n: torch.Tensor, training: bool) -> torch.Tensor:
        return map_loss(model(t), n)

    return _fit(model, batch_loss, _stack(inp, train_ids), _stack(inp, val_ids), cfg, "mapnet")


def train_autoencoder(inp: FusionInput, cfg: FusionTrainConfig) -> BimodalAutoencoder:
    """Fit the bimodal autoencoder; inputs are corrupted by N(0, sigma^2) while training."""
    train_ids, val_ids = _split_pool(inp, cfg)
    torch.manual_seed(cfg.seed)
    model = BimodalAutoencoder(inp.text_emb.dim, inp.net_emb.dim)
    noise = torch.Generator().manual_seed(cfg.seed + 1)

    def batch_loss(t: torch.Tensor, n: torch.Tensor, training: bool) -> torch.Tensor:
        t_in, n_in = t, n
        if training and cfg.denoise_sigma > 0:
            t_in = t + cfg.denoise_sigma * torch.randn(t.shape, generator=noise, dtype=t.dtype)
            n_in = n + cfg.denoise_sigma * torch.randn(n.shape, generator=noise, dtype=n.dtype)
        t_rec, n_rec = model(t_in, n_in)
        return reconstruction_loss(t, n, t_rec, n_rec)

    return _fit(model, batch_loss, _stack(inp, train_ids), _stack(inp, val_ids), cfg, "autoencoder")


def map_text(m: MapNet, t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.shape[-1] != m.dim:
        raise FusionError(f"MapNet expects dim {m.dim}, got {t.shape[-1]}")
    with torch.no_grad():
        return m(torch.from_numpy(t)).numpy()


def fuse_mapped(
    m: MapNet, t: np.ndarray, mode: str, alpha: float = 0.5, renormalize: bool = True
) -> np.ndarray:
    """n' = M(t), then n' (+) t or (alpha n') (+) ((1 - alpha) t)."""
    mapped = map_text(m, t)
    if renormalize:
        norm = np.linalg.norm(mapped)
        if norm > 0:
            mapped = mapped / norm
    t = np.asarray(t, dtype=np.float64)
    if mode == "conc":
        return np.concatenate([mapped, t])
    if mode == "wtd_conc":
        if not 0.0 <= alpha <= 1.0:
            raise FusionError(f"alpha {alpha} outside [0, 1]")
        return np.concatenate([alpha * mapped, (1.0 - alpha) * t])
    raise FusionError(f"unknown mapped fusion {mode!r}")


def multimodal_embedding(ae: BimodalAutoencoder, t: np.ndarray, n: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if t.shape[-1] != ae.text_dim or n.shape[-1] != ae.net_dim:
        raise FusionError(
            f"autoencoder expects dims ({ae.text_dim}, {ae.net_dim}), got ({t.shape[-1]}, {n.shape[-1]})"
        )
    with torch.no_grad():
        return ae.encode(torch.from_numpy(t), torch.from_numpy(n)).numpy()


def build_text_similarity_graph(text_emb: EmbeddingTable, threshold: float = 0.5) -> HeteroGraph:
    """Document graph with an edge wherever text cosine exceeds ``threshold``."""
    ids = sorted(text_emb.ids)
    graph = HeteroGraph()
    for key in ids:
        graph.add_node(key, NodeType.DOCUMENT)
    if not ids:
        return graph
    unit = text_emb.subset(ids).normalized().matrix
    sims = unit @ unit.T
    rows, cols = np.nonzero(np.triu(sims > threshold, k=1))
    for i, j in zip(rows.tolist(), cols.tolist()):
        graph.add_edge(i, j, EdgeKind.CITATION)
    logger.info(
        "Text similarity graph built",
        extra={"docs": len(ids), "edges": graph.number_of_edges, "threshold": threshold},
    )
    return graph


PAIR_METHODS = (
    "text",
    "network",
    "value_average",
    "value_max",
    "emb_average",
    "emb_max",
    "emb_conc",
    "nn_map_conc",
    "nn_map_wtd_conc",
    "autoencoder",
    "paper2vec",
)


@dataclass
class FusionState:
    """Whatever tables and models the requested pair methods need."""

    text_emb: Optional[EmbeddingTable] = None
    net_emb: Optional[EmbeddingTable] = None
    map_net: Optional[MapNet] = None
    autoencoder: Optional[BimodalAutoencoder] = None
    paper2vec_emb: Optional[EmbeddingTable] = None
    alpha: float = 0.5
    renormalize: bool = True
    _cache: Dict[Tuple[str, str], np.ndarray] = field(default_factory=dict, repr=False)

    def _need(self, value, name: str):
        if value is None:
            raise FusionError(f"{name} required for this method but not loaded")
        return value

    def _unit(self, table: EmbeddingTable, key: str) -> np.ndarray:
        vec = table.vector(key)
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            raise FusionError(f"zero vector for {key}")
        return vec / norm

    def representation(self, method: str, key: str) -> np.ndarray:
        cached = self._cache.get((method, key))
        if cached is not None:
            return cached
        if method == "paper2vec":
            rep = self._need(self.paper2vec_emb, "paper2vec embeddings").vector(key)
        else:
            text = self._unit(self._need(self.text_emb, "text embeddings"), key)
            if method == "nn_map_conc":
                rep = fuse_mapped(self._need(self.map_net, "MapNet"), text, "conc", renormalize=self.renormalize)
            elif method == "nn_map_wtd_conc":
                rep = fuse_mapped(
                    self._need(self.map_net, "MapNet"), text, "wtd_conc", self.alpha, self.renormalize
                )
            else:
                net = self._unit(self._need(self.net_emb, "network embeddings"), key)
                if method == "autoencoder":
                    rep = multimodal_embedding(self._need(self.autoencoder, "autoencoder"), text, net)
                else:
                    rep = combine_embeddings(text, net, method[len("emb_"):].replace("conc", "concat"))
        self._cache[(method, key)] = rep
        return rep


def pair_similarity(method: str, a: str, b: str, state: FusionState) -> float:
    """Similarity in [0, 1] for one document pair under ``method``."""
    if method not in PAIR_METHODS:
        raise FusionError(f"unknown pair method {method!r}; expected one of {PAIR_METHODS}")
    try:
        if method == "text":
            return _clamped(state._need(state.text_emb, "text embeddings"), a, b)
        if method == "network":
            return _clamped(state._need(state.net_emb, "network embeddings"), a, b)
        if method in ("value_average", "value_max"):
            text_sim = _clamped(state._need(state.text_emb, "text embeddings"), a, b)
            nw_sim = _clamped(state._need(state.net_emb, "network embeddings"), a, b)
            return combine_values(text_sim, nw_sim, method[len("value_"):])
        return cosine(state.representation(method, a), state.representation(method, b))
    except KeyError as exc:
        raise MissingIdError(f"{method}: {exc.args[0] if exc.args else exc}") from exc


def _clamped(table: EmbeddingTable, a: str, b: str) -> float:
    return cosine(table.vector(a), table.vector(b))


def save_model(model: Union[MapNet, BimodalAutoencoder], path: Union[str, Path], config: Optional[Dict] = None) -> None:
    """JSON text: a header (kind, widths, dims, config echo) and every parameter tensor as nested lists."""
    if isinstance(model, MapNet):
        header = {"kind": "mapnet", "dim": model.dim, "hidden": list(model.hidden)}
    elif isinstance(model, BimodalAutoencoder):
        header = {
            "kind": "autoencoder",
            "text_dim": model.text_dim,
            "net_dim": model.net_dim,
            "text_width": model.text_width,
            "net_width": model.net_width,
            "multimodal_width": MULTIMODAL_WIDTH,
        }
    else:
        raise FusionError(f"cannot serialize {type(model).__name__}")
    header["config"] = config or {}
    header["best_val_loss"] = getattr(model, "best_val_loss", None)
    payload = {
        "header": header,
        "parameters": {k: v.tolist() for k, v in model.state_dict().items()},
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_model(path: Union[str, Path]) -> Union[MapNet, BimodalAutoencoder]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        header = payload["header"]
        kind = header["kind"]
    except (ValueError, KeyError) as exc:
        raise FusionError(f"{path}: not a fusion model file") from exc
    if kind == "mapnet":
        model: nn.Module = MapNet(header["dim"], tuple(header["hidden"]))
    elif kind == "autoencoder":
        model = BimodalAutoencoder(
            header["text_dim"], header["net_dim"], header["text_width"], header["net_width"]
        )
    else:
        raise FusionError(f"{path}: unknown model kind {kind!r}")
    state = {k: torch.tensor(v, dtype=torch.float64) for k, v in payload["parameters"].items()}
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise FusionError(f"{path}: parameters do not match header: {exc}") from exc
    model.eval()
    return model
