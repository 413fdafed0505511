from pathlib import Path

import pytest

from src.config import PipelineConfig, get_settings, load_pipeline_config
from src.errors import ConfigError


def test_settings_defaults(monkeypatch):
    for name in ("LOG_LEVEL", "DEBUG_MODE", "CASESIM_SEED", "CASESIM_EMBED_DIM"):
        monkeypatch.delenv(name, raising=False)
    settings = get_settings()
    assert settings.LOG_LEVEL == "INFO"
    assert settings.DEBUG_MODE is False
    assert settings.CASESIM_SEED == 42
    assert settings.CASESIM_EMBED_DIM == 200


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("DEBUG_MODE", "true")
    monkeypatch.setenv("CASESIM_SEED", "7")
    monkeypatch.setenv("CASESIM_WORKERS", "not-a-number")
    settings = get_settings()
    assert settings.DEBUG_MODE is True
    assert settings.CASESIM_SEED == 7
    assert settings.CASESIM_WORKERS == 1
    assert get_settings() is settings


def test_pipeline_config_takes_environment_defaults(monkeypatch):
    monkeypatch.setenv("CASESIM_SEED", "11")
    monkeypatch.setenv("CASESIM_WALKS_PER_ROOT", "50")
    cfg = load_pipeline_config()
    assert cfg.seed == 11
    assert cfg.walks_per_root == 50
    assert cfg.method == "hier_spcnet_icf_m2v"


def test_config_file_values_are_typed(tmp_path, monkeypatch):
    monkeypatch.delenv("CASESIM_SEED", raising=False)
    path = tmp_path / "run.env"
    path.write_text(
        "# small run\n"
        "METHOD=text\n"
        "dim=16\n"
        "alpha=0.25\n"
        "fusion_exclude_eval=false\n"
        "corpus=data/corpus.jsonl\n"
        "weights=sch2\n",
        encoding="utf-8",
    )
    cfg = load_pipeline_config(path)
    assert cfg.method == "text"
    assert cfg.dim == 16
    assert cfg.alpha == 0.25
    assert cfg.fusion_exclude_eval is False
    assert cfg.corpus == Path("data/corpus.jsonl")
    assert cfg.weights == "sch2"
    assert cfg.seed == 42


@pytest.mark.parametrize("body", ["dimension=16\n", "dim=sixteen\n", "alpha=high\n"])
def test_bad_config_files(tmp_path, body):
    path = tmp_path / "run.env"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(ConfigError):
        load_pipeline_config(path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_pipeline_config(tmp_path / "absent.env")


def test_overrides_skip_none_and_echo_as_plain_values():
    cfg = PipelineConfig().with_overrides({"dim": 8, "method": None, "output_dir": "out/run1"})
    assert cfg.dim == 8
    assert cfg.method == "hier_spcnet_icf_m2v"
    echoed = cfg.as_dict()
    assert echoed["output_dir"] == str(Path("out/run1"))
    assert echoed["dim"] == 8
