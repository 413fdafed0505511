"""Metrics comparing predicted pair similarities with expert scores."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict
from itertools import combinations
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .embed import EmbeddingTable, cosine
from .errors import EvaluationError
from .models import CaseDocument, CaseType, ClassWeights, EvalReport, PairDataset, PairRow, WeightScheme

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5


def _arrays(y: Sequence[float], y_hat: Sequence[float], min_len: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(y, dtype=np.float64)
    b = np.asarray(y_hat, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise EvaluationError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size < min_len:
        raise EvaluationError(f"need at least {min_len} values, got {a.size}")
    return a, b


def pearson(y: Sequence[float], y_hat: Sequence[float]) -> float:
    """Product-moment correlation, computed in two passes."""
    a, b = _arrays(y, y_hat, min_len=2)
    # centred constants keep rounding residue; check the raw range
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        raise EvaluationError("pearson undefined: zero variance")
    da, db = a - a.mean(), b - b.mean()
    sa, sb = float(np.dot(da, da)), float(np.dot(db, db))
    return float(np.dot(da, db) / math.sqrt(sa * sb))


def mse(y: Sequence[float], y_hat: Sequence[float]) -> float:
    a, b = _arrays(y, y_hat)
    return float(np.mean((a - b) ** 2))


def class_f1(
    y: Sequence[float], y_hat: Sequence[float], threshold: float = DEFAULT_THRESHOLD
) -> Dict[int, Optional[float]]:
    """
    Per-class F1 after labelling ``score > threshold`` as 1. A class that
    never occurs in the expert labels maps to None.
    """
    a, b = _arrays(y, y_hat)
    truth, pred = a > threshold, b > threshold
    out: Dict[int, Optional[float]] = {}
    for label, flag in ((0, False), (1, True)):
        t, p = truth == flag, pred == flag
        if not t.any():
            out[label] = None
            continue
        tp = int(np.sum(t & p))
        fp = int(np.sum(~t & p))
        fn = int(np.sum(t & ~p))
        out[label] = 2 * tp / (2 * tp + fp + fn)
    return out


def fscore_macro(y: Sequence[float], y_hat: Sequence[float], threshold: float = DEFAULT_THRESHOLD) -> float:
    per_class = [f for f in class_f1(y, y_hat, threshold).values() if f is not None]
    return float(np.mean(per_class))


def weights_from_probability(p_similar: float, scheme: WeightScheme) -> ClassWeights:
    if not 0.0 < p_similar < 1.0:
        raise EvaluationError(f"degenerate P(similar) = {p_similar}")
    return ClassWeights(
        w0=1.0 / (1.0 - p_similar), w1=1.0 / p_similar, scheme=scheme, p_similar=p_similar
    )


def weights_from_counts(total_pairs: int, similar_pairs: int) -> ClassWeights:
    """Pooled count form of the text-similarity scheme: P = similar / total."""
    if total_pairs <= 0:
        raise EvaluationError("no sampled pairs")
    return weights_from_probability(similar_pairs / total_pairs, WeightScheme.SCH2)


def _sample_strata(
    text_emb: EmbeddingTable,
    docs: Iterable[CaseDocument],
    per_stratum: int,
    threshold: float,
    seed: int,
) -> Tuple[int, int]:
    strata: Dict[CaseType, List[str]] = {}
    for doc in docs:
        if doc.id in text_emb:
            strata.setdefault(CaseType(doc.case_type), []).append(doc.id)
    rng = np.random.default_rng(seed)
    total = similar = 0
    for case_type in sorted(strata, key=lambda c: c.value):
        members = sorted(strata[case_type])
        if len(members) > per_stratum:
            members = sorted(rng.choice(members, size=per_stratum, replace=False).tolist())
        pairs = list(combinations(members, 2))
        hits = sum(
            1 for a, b in pairs if cosine(text_emb.vector(a), text_emb.vector(b), raw=True) > threshold
        )
        logger.info(
            "Weight stratum sampled",
            extra={"case_type": case_type.value, "docs": len(members), "pairs": len(pairs), "similar": hits},
        )
        total += len(pairs)
        similar += hits
    return total, similar


def derive_weights(scheme: Union[str, WeightScheme], **inputs) -> ClassWeights:
    """
    sch1: ``n_d`` documents, ``n_c`` cited pairs -> P = n_c / C(n_d, 2).
    sch2: ``total_pairs``/``similar_pairs`` counts, or ``text_emb`` + ``docs``
    sampled per case type (``per_stratum``, ``threshold``, ``seed``) and
    count-pooled.
    """
    scheme = WeightScheme(scheme)
    if scheme == WeightScheme.SCH1:
        n_d, n_c = int(inputs["n_d"]), int(inputs["n_c"])
        if n_d < 2:
            raise EvaluationError("sch1 needs at least 2 documents")
        return weights_from_probability(n_c / math.comb(n_d, 2), WeightScheme.SCH1)
    if scheme == WeightScheme.SCH2:
        if "total_pairs" in inputs:
            return weights_from_counts(int(inputs["total_pairs"]), int(inputs["similar_pairs"]))
        total, similar = _sample_strata(
            inputs["text_emb"],
            inputs["docs"],
            int(inputs.get("per_stratum", 300)),
            float(inputs.get("threshold", DEFAULT_THRESHOLD)),
            int(inputs.get("seed", 42)),
        )
        return weights_from_counts(total, similar)
    raise EvaluationError("custom weights are given directly, not derived")


def wtd_fscore(
    y: Sequence[float], y_hat: Sequence[float], w: ClassWeights, threshold: float = DEFAULT_THRESHOLD
) -> float:
    """(w0 F0 + w1 F1) / (w0 + w1) over the classes present in the expert labels."""
    per_class = class_f1(y, y_hat, threshold)
    weight = {0: w.w0, 1: w.w1}
    num = sum(weight[c] * f for c, f in per_class.items() if f is not None)
    den = sum(weight[c] for c, f in per_class.items() if f is not None)
    return float(num / den)


def wtd_mse(
    y: Sequence[float], y_hat: Sequence[float], w: ClassWeights, threshold: float = DEFAULT_THRESHOLD
) -> float:
    a, b = _arrays(y, y_hat)
    row_w = np.where(a > threshold, w.w1, w.w0)
    return float(np.sum(row_w * (a - b) ** 2) / np.sum(row_w))


def evaluate(
    y: Sequence[float],
    y_hat: Sequence[float],
    weights: Optional[ClassWeights] = None,
    config: Optional[Mapping[str, object]] = None,
) -> EvalReport:
    a, b = _arrays(y, y_hat)
    try:
        rho: Optional[float] = pearson(a, b)
    except EvaluationError:
        logger.warning("Pearson undefined for this run (zero variance)", extra={"n": int(a.size)})
        rho = None
    report = EvalReport(
        n=int(a.size),
        pearson=rho,
        mse=mse(a, b),
        fscore_macro=fscore_macro(a, b),
        wtd_fscore=wtd_fscore(a, b, weights) if weights else None,
        wtd_mse=wtd_mse(a, b, weights) if weights else None,
        config=dict(config or {}),
    )
    logger.info(
        "Evaluation finished",
        extra={
            "n": report.n,
            "pearson": report.pearson,
            "mse": report.mse,
            "fscore": report.fscore_macro,
            "wtd_fscore": report.wtd_fscore,
            "wtd_mse": report.wtd_mse,
        },
    )
    return report


def report_to_dict(report: EvalReport) -> Dict[str, object]:
    return asdict(report)


def write_report(report: EvalReport, path: Union[str, Path]) -> None:
    Path(path).write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True, default=str) + "\n",
        encoding="utf-8",
    )


def _read_tsv(path: Union[str, Path], columns: List[str]) -> pd.DataFrame:
    frame = pd.read_csv(
        path, sep="\t", header=None, names=columns, dtype=str, comment="#", skip_blank_lines=True
    )
    if frame.empty:
        return frame
    score_col = columns[-1]
    try:
        float(frame.iloc[0][score_col])
    except (TypeError, ValueError):
        frame = frame.iloc[1:]  # header row
    try:
        frame[score_col] = frame[score_col].astype(float)
    except ValueError as exc:
        raise EvaluationError(f"{path}: non-numeric score column") from exc
    if frame[columns[:2]].isna().any().any():
        raise EvaluationError(f"{path}: rows must have {len(columns)} tab-separated fields")
    return frame.reset_index(drop=True)


def load_pairs(path: Union[str, Path]) -> PairDataset:
    frame = _read_tsv(path, ["id_a", "id_b", "expert"])
    seen = set()
    rows: List[PairRow] = []
    for rec in frame.itertuples(index=False):
        key = frozenset((rec.id_a, rec.id_b))
        if key in seen:
            raise EvaluationError(f"{path}: duplicate pair {rec.id_a} {rec.id_b}")
        if not 0.0 <= rec.expert <= 1.0:
            raise EvaluationError(f"{path}: expert score {rec.expert} outside [0, 1]")
        seen.add(key)
        rows.append(PairRow(rec.id_a, rec.id_b, float(rec.expert)))
    return PairDataset(rows)


def write_pairs(pairs: PairDataset, path: Union[str, Path]) -> None:
    frame = pd.DataFrame([(r.id_a, r.id_b, r.expert) for r in pairs.rows], columns=["id_a", "id_b", "expert"])
    frame.to_csv(path, sep="\t", header=False, index=False)


def load_scores(path: Union[str, Path]) -> Dict[frozenset, float]:
    frame = _read_tsv(path, ["id_a", "id_b", "predicted"])
    return {frozenset((r.id_a, r.id_b)): float(r.predicted) for r in frame.itertuples(index=False)}


def write_scores(rows: Iterable[Tuple[str, str, float]], path: Union[str, Path]) -> None:
    frame = pd.DataFrame(list(rows), columns=["id_a", "id_b", "predicted"])
    frame.to_csv(path, sep="\t", header=False, index=False, float_format="%.17g")


def attach_scores(pairs: PairDataset, scores: Mapping[frozenset, float]) -> PairDataset:
    rows = []
    for row in pairs.rows:
        key = frozenset((row.id_a, row.id_b))
        if key not in scores:
            raise EvaluationError(f"no predicted score for pair {row.id_a} {row.id_b}")
        rows.append(PairRow(row.id_a, row.id_b, row.expert, scores[key]))
    return PairDataset(rows)


def evaluate_pairs(
    pairs: PairDataset, weights: Optional[ClassWeights] = None, config: Optional[Mapping[str, object]] = None
) -> EvalReport:
    if any(r.predicted is None for r in pairs.rows):
        raise EvaluationError("every pair needs a predicted score")
    return evaluate(
        [r.expert for r in pairs.rows], [float(r.predicted) for r in pairs.rows], weights, config
    )
