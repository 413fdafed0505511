"""Configuration management for the case similarity toolkit."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from dotenv import dotenv_values, load_dotenv

from .errors import ConfigError


def _env_bool(value: Optional[str], default: bool = False) -> bool:
    if value is None:
        return default
    return value.strip().lower() in {"1", "true", "yes", "y"}


def _env_int(value: Optional[str], default: int) -> int:
    if value is None or value.strip() == "":
        return default
    try:
        return int(value)
    except ValueError:
        return default


@dataclass(frozen=True)
class Settings:
    """Container for environment-based configuration."""

    LOG_LEVEL: str = "INFO"
    DEBUG_MODE: bool = False
    ENVIRONMENT: str = "prod"
    CASESIM_SEED: int = 42
    CASESIM_WORKERS: int = 1
    CASESIM_EMBED_DIM: int = 200
    CASESIM_WALKS_PER_ROOT: int = 2000
    CASESIM_WALK_LENGTH: int = 7


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return a singleton Settings object loaded from environment variables."""
    if os.getenv("ENVIRONMENT", "prod").lower() == "dev":
        load_dotenv()

    return Settings(
        LOG_LEVEL=os.getenv("LOG_LEVEL", "INFO"),
        DEBUG_MODE=_env_bool(os.getenv("DEBUG_MODE"), False),
        ENVIRONMENT=os.getenv("ENVIRONMENT", "prod"),
        CASESIM_SEED=_env_int(os.getenv("CASESIM_SEED"), 42),
        CASESIM_WORKERS=_env_int(os.getenv("CASESIM_WORKERS"), 1),
        CASESIM_EMBED_DIM=_env_int(os.getenv("CASESIM_EMBED_DIM"), 200),
        CASESIM_WALKS_PER_ROOT=_env_int(os.getenv("CASESIM_WALKS_PER_ROOT"), 2000),
        CASESIM_WALK_LENGTH=_env_int(os.getenv("CASESIM_WALK_LENGTH"), 7),
    )


@dataclass(frozen=True)
class PipelineConfig:
    """
    Everything one end-to-end run needs. Paths are resolved at stage entry,
    the seed is handed to every stage.
    """

    corpus: Optional[Path] = None
    registry: Optional[Path] = None
    pairs: Optional[Path] = None
    output_dir: Path = Path("casesim-out")
    method: str = "hier_spcnet_icf_m2v"
    # network half of the fusion methods
    network_method: str = "hier_spcnet_icf_m2v"
    seed: int = 42
    walks_per_root: int = 2000
    walk_length: int = 7
    drop_truncated: bool = False
    dim: int = 200
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    text_epochs: int = 5
    text_min_count: int = 5
    learning_rate: float = 0.025
    stopword_file: Optional[Path] = None
    stemming: str = "off"
    text_infer_eval: bool = True
    fusion_exclude_eval: bool = True
    fusion_epochs: int = 50
    fusion_lr: float = 0.01
    alpha: float = 0.5
    renormalize_mapped: bool = True
    denoise_sigma: float = 0.05
    paper2vec_threshold: float = 0.5
    weights: Optional[str] = "sch1"
    workers: int = 1
    synthetic: bool = False
    synthetic_communities: int = 2
    synthetic_docs_per_community: int = 20
    synthetic_noise: float = 0.0

    def with_overrides(self, overrides: Mapping[str, Any]) -> "PipelineConfig":
        """Return a copy with the non-None overrides applied (flags win)."""
        clean = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **_coerce(clean))

    def as_dict(self) -> Dict[str, Any]:
        return {
            f.name: (str(v) if isinstance(v, Path) else v)
            for f in fields(self)
            for v in [getattr(self, f.name)]
        }


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(values: Mapping[str, Any]) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for key, raw in values.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key: {key}")
        kind = str(_FIELD_TYPES[key])
        if not isinstance(raw, str):
            out[key] = Path(raw) if "Path" in kind and raw is not None else raw
            continue
        text = raw.strip()
        try:
            if "Path" in kind:
                out[key] = Path(text) if text else None
            elif "bool" in kind:
                out[key] = _env_bool(text)
            elif "int" in kind:
                out[key] = int(text)
            elif "float" in kind:
                out[key] = float(text)
            else:
                out[key] = text or None
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return out


def load_pipeline_config(path: Optional[Path] = None) -> PipelineConfig:
    """
    Build a PipelineConfig from environment defaults, then the key/value file
    at ``path`` (``key=value`` lines, ``#`` comments).
    """
    settings = get_settings()
    base = PipelineConfig(
        seed=settings.CASESIM_SEED,
        walks_per_root=settings.CASESIM_WALKS_PER_ROOT,
        walk_length=settings.CASESIM_WALK_LENGTH,
        dim=settings.CASESIM_EMBED_DIM,
        workers=settings.CASESIM_WORKERS,
    )
    if path is None:
        return base
    if not Path(path).exists():
        raise ConfigError(f"config file not found: {path}")
    values = {k.strip().lower(): v for k, v in dotenv_values(path).items() if v is not None}
    return base.with_overrides(values)
