import json
import logging

import numpy as np
import pytest

from src import cli
from src.embed import EmbeddingTable, save_embeddings
from src.fuse import BimodalAutoencoder, save_model


@pytest.fixture(autouse=True)
def _keep_root_logger():
    root = logging.getLogger()
    saved_handlers, saved_level = root.handlers[:], root.level
    yield
    root.handlers[:] = saved_handlers
    root.setLevel(saved_level)


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert cli.main(["synth", "--out-dir", str(out), "--docs-per-community", "6", "--seed", "5"]) == 0
    return out


def _stdout_json(capsys):
    lines = [line for line in capsys.readouterr().out.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])


def _error_json(capsys):
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])


def test_synth_reports_counts(tmp_path, capsys):
    assert cli.main(["synth", "--out-dir", str(tmp_path), "--docs-per-community", "4"]) == 0
    payload = _stdout_json(capsys)
    assert payload["docs"] == 8
    assert payload["pairs"] == 28
    assert (tmp_path / "corpus.jsonl").exists()


def test_missing_corpus_is_reported_as_json(tmp_path, capsys):
    code = cli.main(["parse", "--corpus", str(tmp_path / "absent.jsonl"), "--out", str(tmp_path / "out.jsonl")])
    assert code == 1
    error = _error_json(capsys)
    assert set(error) == {"error", "stage", "message"}
    assert error["error"] == "FileNotFoundError"
    assert error["stage"] is None


def test_missing_config_file_exits_with_two(tmp_path, capsys):
    code = cli.main(["pipeline", "--config", str(tmp_path / "absent.env"), "--synthetic"])
    assert code == 2
    assert _error_json(capsys)["error"] == "ConfigError"


def test_build_then_score_then_evaluate(synth_dir, tmp_path, capsys):
    corpus = str(synth_dir / "corpus.jsonl")
    registry = str(synth_dir / "registry.tsv")
    graph = str(tmp_path / "hier.graph")
    scores = str(tmp_path / "scores.tsv")
    report = tmp_path / "report.json"

    assert cli.main(["build-net", "--corpus", corpus, "--registry", registry, "--out", graph]) == 0
    assert _stdout_json(capsys)["unresolved_citations"] == 0

    args = ["classic-sim", "--graph", graph, "--pairs", str(synth_dir / "pairs.tsv")]
    assert cli.main(args + ["--measure", "bibcoupling", "--out", scores]) == 0
    assert _stdout_json(capsys)["pairs"] == 66

    assert cli.main(["eval", "--pairs", str(synth_dir / "pairs.tsv"), "--scores", scores, "--out", str(report)]) == 0
    payload = _stdout_json(capsys)
    assert payload["n"] == 66
    assert payload["wtd_fscore"] is None
    assert json.loads(report.read_text())["n"] == 66


def test_sch1_needs_document_counts(synth_dir, tmp_path, capsys):
    pairs = str(synth_dir / "pairs.tsv")
    scores = tmp_path / "scores.tsv"
    scores.write_text("".join(line.rsplit("\t", 1)[0] + "\t0.0\n" for line in _pair_lines(synth_dir)))
    assert cli.main(["eval", "--pairs", pairs, "--scores", str(scores), "--weights", "sch1"]) == 2
    assert _error_json(capsys)["error"] == "ConfigError"


def _pair_lines(synth_dir):
    return [line for line in (synth_dir / "pairs.tsv").read_text().splitlines() if line and not line.startswith("#")]


def test_recommend_reports_same_group_fraction(synth_dir, tmp_path, capsys):
    graph = str(tmp_path / "hier.graph")
    corpus = str(synth_dir / "corpus.jsonl")
    registry = str(synth_dir / "registry.tsv")
    assert cli.main(["build-net", "--corpus", corpus, "--registry", registry, "--out", graph]) == 0
    capsys.readouterr()
    source = _pair_lines(synth_dir)[0].split("\t")[0]
    args = ["recommend", "--graph", graph, "--source", source, "--k", "3", "--method", "bibcoupling"]
    assert cli.main(args + ["--groups", str(synth_dir / "communities.tsv"), "--corpus", corpus]) == 0
    payload = _stdout_json(capsys)
    assert payload["source"] == source
    assert len(payload["ranked"]) <= 3
    assert all(row["case_type"] in {"civil", "criminal"} for row in payload["ranked"])
    assert 0.0 <= payload["same_group_fraction"] <= 1.0


def test_autoencoder_with_wrong_dims_fails_cleanly(tmp_path, capsys):
    ids = ["a", "b", "c"]
    rng = np.random.default_rng(0)
    save_embeddings(EmbeddingTable(ids, rng.normal(size=(3, 8))), tmp_path / "text.txt")
    save_embeddings(EmbeddingTable(ids, rng.normal(size=(3, 8))), tmp_path / "net.txt")
    save_model(BimodalAutoencoder(16, 16), tmp_path / "ae.json")
    (tmp_path / "pairs.tsv").write_text("a\tb\t0.5\n")
    code = cli.main(
        [
            "fuse", "score", "--method", "autoencoder",
            "--pairs", str(tmp_path / "pairs.tsv"),
            "--text-emb", str(tmp_path / "text.txt"),
            "--net-emb", str(tmp_path / "net.txt"),
            "--model", str(tmp_path / "ae.json"),
            "--out", str(tmp_path / "scores.tsv"),
        ]
    )
    assert code == 1
    assert _error_json(capsys)["error"] == "FusionError"
