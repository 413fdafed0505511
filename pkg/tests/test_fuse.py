from itertools import combinations

import numpy as np
import pytest
import torch
from torch.func import functional_call

from src.embed import EmbeddingTable, cosine
from src.errors import FusionError, MissingIdError
from src.fuse import (
    MULTIMODAL_WIDTH,
    PAIR_METHODS,
    BimodalAutoencoder,
    FusionInput,
    FusionState,
    MapNet,
    build_text_similarity_graph,
    combine_embeddings,
    combine_values,
    fuse_mapped,
    load_model,
    map_loss,
    multimodal_embedding,
    pair_similarity,
    reconstruction_loss,
    save_model,
    train_autoencoder,
    train_map_net,
)
from src.models import FusionTrainConfig


def _table(ids, dim, seed):
    rng = np.random.default_rng(seed)
    return EmbeddingTable(ids, rng.normal(size=(len(ids), dim)))


def _state(ids=("a", "b", "c", "d", "e"), dim=4):
    torch.manual_seed(0)
    return FusionState(
        text_emb=_table(ids, dim, 1),
        net_emb=_table(ids, dim, 2),
        map_net=MapNet(dim),
        autoencoder=BimodalAutoencoder(dim, dim),
        paper2vec_emb=_table(ids, dim, 3),
    )


def _gradcheck_params(model, loss_of_output, inputs):
    names = [name for name, _ in model.named_parameters()]
    params = tuple(p.detach().clone().requires_grad_(True) for _, p in model.named_parameters())

    def fn(*tensors):
        return loss_of_output(functional_call(model, dict(zip(names, tensors)), inputs))

    return torch.autograd.gradcheck(fn, params)


def test_combine_values():
    assert combine_values(0.2, 0.6, "average") == pytest.approx(0.4)
    assert combine_values(0.2, 0.6, "max") == 0.6
    with pytest.raises(FusionError):
        combine_values(1.2, 0.5, "average")
    with pytest.raises(FusionError):
        combine_values(0.2, 0.5, "median")


def test_combine_embeddings():
    t, n = np.array([1.0, 4.0]), np.array([3.0, 2.0])
    assert combine_embeddings(t, n, "average").tolist() == [2.0, 3.0]
    assert combine_embeddings(t, n, "max").tolist() == [3.0, 4.0]
    assert combine_embeddings(t, n, "concat").tolist() == [1.0, 4.0, 3.0, 2.0]
    with pytest.raises(FusionError):
        combine_embeddings(t, np.ones(3), "average")


def test_mapnet_gradients():
    torch.manual_seed(0)
    model = MapNet(4, (5, 6))
    x = torch.randn(3, 4, dtype=torch.float64)
    target = torch.randn(3, 4, dtype=torch.float64)
    assert _gradcheck_params(model, lambda out: map_loss(out, target), (x,))


def test_autoencoder_gradients():
    torch.manual_seed(0)
    model = BimodalAutoencoder(4, 4, 3, 2)
    t = torch.randn(3, 4, dtype=torch.float64)
    n = torch.randn(3, 4, dtype=torch.float64)
    assert _gradcheck_params(model, lambda out: reconstruction_loss(t, n, *out), (t, n))


def test_mapnet_learns_a_linear_relation():
    dim, count = 8, 200
    rng = np.random.default_rng(4)
    rotation, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    text = rng.normal(size=(count, dim))
    text /= np.linalg.norm(text, axis=1, keepdims=True)
    ids = [f"d{i:03d}" for i in range(count)]
    inp = FusionInput.from_tables(EmbeddingTable(ids, text), EmbeddingTable(ids, text @ rotation.T))
    cfg = FusionTrainConfig(epochs=150, batch_size=32, seed=1)
    model = train_map_net(inp, cfg)
    # predicting zeros costs 0.5 per unit-norm example
    assert model.best_val_loss < 0.1
    assert len(model.val_history) == cfg.epochs
    assert model.best_val_loss == min(model.val_history)


def test_weighted_concat():
    torch.manual_seed(0)
    m = MapNet(4)
    t = np.array([0.5, 0.5, 0.5, 0.5])
    conc = fuse_mapped(m, t, "conc")
    assert conc.shape == (8,)
    half = fuse_mapped(m, t, "wtd_conc", alpha=0.5)
    np.testing.assert_allclose(half, 0.5 * conc)
    only_network = fuse_mapped(m, t, "wtd_conc", alpha=1.0)
    assert np.all(only_network[4:] == 0.0)
    with pytest.raises(FusionError):
        fuse_mapped(m, t, "wtd_conc", alpha=1.5)


def test_weighted_concat_at_half_matches_concat_similarity():
    state = _state()
    for a, b in combinations(state.text_emb.ids, 2):
        assert pair_similarity("nn_map_wtd_conc", a, b, state) == pytest.approx(
            pair_similarity("nn_map_conc", a, b, state)
        )


def test_mapped_concat_matches_manual_forward_pass():
    state = _state()
    layers = state.map_net.layers
    weights = [(layers[i].weight.detach().numpy(), layers[i].bias.detach().numpy()) for i in (0, 2, 4)]

    def manual(key):
        t = state.text_emb.vector(key)
        t = t / np.linalg.norm(t)
        h = np.maximum(0.0, weights[0][0] @ t + weights[0][1])
        h = np.maximum(0.0, weights[1][0] @ h + weights[1][1])
        mapped = weights[2][0] @ h + weights[2][1]
        return np.concatenate([mapped / np.linalg.norm(mapped), t])

    expected = cosine(manual("a"), manual("b"))
    assert pair_similarity("nn_map_conc", "a", "b", state) == pytest.approx(expected, abs=1e-9)


def test_autoencoder_representation_width():
    torch.manual_seed(0)
    ae = BimodalAutoencoder(6, 5)
    rep = multimodal_embedding(ae, np.ones(6), np.ones(5))
    assert rep.shape == (MULTIMODAL_WIDTH,)
    t = torch.ones(2, 6, dtype=torch.float64)
    n = torch.ones(2, 5, dtype=torch.float64)
    assert float(reconstruction_loss(t, n, t.clone(), n.clone())) == 0.0


def test_autoencoder_rejects_mismatched_dims():
    ae = BimodalAutoencoder(16, 16)
    with pytest.raises(FusionError):
        multimodal_embedding(ae, np.ones(8), np.ones(16))
    with pytest.raises(FusionError):
        multimodal_embedding(ae, np.ones(16), np.ones(8))


def test_autoencoder_training_keeps_best_snapshot():
    ids = [f"d{i:02d}" for i in range(30)]
    inp = FusionInput.from_tables(_table(ids, 6, 1), _table(ids, 6, 2))
    model = train_autoencoder(inp, FusionTrainConfig(epochs=5, batch_size=8))
    assert model.best_val_loss == min(model.val_history)
    assert len(model.train_history) == 5


def test_text_similarity_graph_matches_brute_force():
    table = _table([f"d{i}" for i in range(10)], 5, 7)
    graph = build_text_similarity_graph(table, threshold=0.3)
    found = {frozenset((e.src.id, e.dst.id)) for e in graph.edges()}
    expected = {
        frozenset((a, b))
        for a, b in combinations(table.ids, 2)
        if cosine(table.vector(a), table.vector(b), raw=True) > 0.3
    }
    assert found == expected
    assert build_text_similarity_graph(table, threshold=1.0).number_of_edges == 0


def test_identical_texts_are_linked():
    table = EmbeddingTable(["x", "y", "z"], np.array([[1.0, 2.0], [1.0, 2.0], [-2.0, 1.0]]))
    graph = build_text_similarity_graph(table, threshold=0.99)
    assert [(e.src.id, e.dst.id) for e in graph.edges()] == [("x", "y")]


@pytest.mark.parametrize("method", PAIR_METHODS)
def test_pair_similarity_is_bounded_and_symmetric(method):
    state = _state()
    for a, b in combinations(state.text_emb.ids, 2):
        value = pair_similarity(method, a, b, state)
        assert 0.0 <= value <= 1.0
        assert value == pytest.approx(pair_similarity(method, b, a, state))


def test_self_similarity_of_averaged_embedding():
    state = _state()
    assert pair_similarity("emb_average", "a", "a", state) == pytest.approx(1.0)


def test_pair_similarity_errors():
    state = _state()
    with pytest.raises(MissingIdError):
        pair_similarity("text", "a", "ghost", state)
    with pytest.raises(FusionError):
        pair_similarity("bogus", "a", "b", state)
    with pytest.raises(FusionError):
        pair_similarity("network", "a", "b", FusionState(text_emb=state.text_emb))


def test_fusion_input_checks():
    with pytest.raises(FusionError):
        FusionInput.from_tables(_table(["a"], 4, 1), _table(["a"], 5, 1))
    with pytest.raises(FusionError):
        FusionInput.from_tables(_table(["a"], 4, 1), _table(["b"], 4, 1))
    inp = FusionInput.from_tables(_table(["a", "b"], 4, 1), _table(["a", "c"], 4, 2))
    with pytest.raises(FusionError):
        train_map_net(inp, FusionTrainConfig(epochs=1))


def test_excluded_ids_leave_the_training_pool():
    ids = ["a", "b", "c"]
    inp = FusionInput.from_tables(_table(ids, 4, 1), _table(ids, 4, 2))
    with pytest.raises(FusionError):
        train_map_net(inp, FusionTrainConfig(epochs=1, exclude_ids=frozenset({"a", "b"})))


@pytest.mark.parametrize("factory", [lambda: MapNet(4, (5, 6)), lambda: BimodalAutoencoder(4, 3, 3, 2)])
def test_model_round_trip(factory, tmp_path):
    torch.manual_seed(0)
    model = factory()
    save_model(model, tmp_path / "model.json", config={"seed": 0})
    loaded = load_model(tmp_path / "model.json")
    assert type(loaded) is type(model)
    for key, value in model.state_dict().items():
        assert torch.equal(loaded.state_dict()[key], value)


def test_load_model_rejects_foreign_files(tmp_path):
    path = tmp_path / "model.json"
    path.write_text('{"weights": []}', encoding="utf-8")
    with pytest.raises(FusionError):
        load_model(path)


@pytest.mark.parametrize("trainer", [train_map_net, train_autoencoder])
def test_full_batch_training_loss_is_non_increasing(trainer):
    ids = [f"d{i:02d}" for i in range(40)]
    inp = FusionInput.from_tables(_table(ids, 6, 1), _table(ids, 6, 2))
    cfg = FusionTrainConfig(learning_rate=0.003, epochs=15, batch_size=64, seed=3, denoise_sigma=0.0)
    history = trainer(inp, cfg).train_history
    assert len(history) == 15
    assert all(later <= earlier + 1e-3 for earlier, later in zip(history, history[1:]))
