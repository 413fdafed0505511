import json
from itertools import combinations

import numpy as np
import pytest
from scipy.stats import pearsonr
from sklearn.metrics import f1_score, mean_squared_error

from src.embed import EmbeddingTable, cosine
from src.errors import EvaluationError
from src.evaluation import (
    attach_scores,
    class_f1,
    derive_weights,
    evaluate,
    evaluate_pairs,
    fscore_macro,
    load_pairs,
    load_scores,
    mse,
    pearson,
    weights_from_probability,
    write_pairs,
    write_report,
    write_scores,
    wtd_fscore,
    wtd_mse,
)
from src.models import CaseDocument, CaseType, ClassWeights, PairDataset, PairRow, WeightScheme


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_metrics_match_reference_implementations(seed):
    rng = np.random.default_rng(seed)
    y = rng.random(40)
    y_hat = np.clip(y + rng.normal(scale=0.3, size=40), 0.0, 1.0)
    assert pearson(y, y_hat) == pytest.approx(pearsonr(y, y_hat)[0], abs=1e-9)
    assert mse(y, y_hat) == pytest.approx(mean_squared_error(y, y_hat), abs=1e-9)
    truth, pred = (y > 0.5).astype(int), (y_hat > 0.5).astype(int)
    reference = f1_score(truth, pred, labels=[0, 1], average=None, zero_division=0)
    per_class = class_f1(y, y_hat)
    assert per_class[0] == pytest.approx(reference[0], abs=1e-9)
    assert per_class[1] == pytest.approx(reference[1], abs=1e-9)
    assert fscore_macro(y, y_hat) == pytest.approx(
        f1_score(truth, pred, labels=[0, 1], average="macro", zero_division=0), abs=1e-9
    )


def test_threshold_is_strict():
    assert class_f1([0.5, 1.0], [0.51, 1.0]) == {0: 0.0, 1: pytest.approx(2 / 3)}


def test_confusion_counts():
    y = [1, 1, 0, 1, 0, 0]
    y_hat = [1, 1, 1, 0, 0, 0]
    per_class = class_f1(y, y_hat)
    assert per_class[1] == pytest.approx(2 / 3)
    assert per_class[0] == pytest.approx(2 / 3)
    assert fscore_macro(y, y_hat) == pytest.approx(2 / 3)


def test_class_absent_from_expert_labels():
    per_class = class_f1([0.1, 0.2, 0.3], [0.1, 0.9, 0.2])
    assert per_class[1] is None
    assert fscore_macro([0.1, 0.2, 0.3], [0.1, 0.9, 0.2]) == pytest.approx(per_class[0])


def test_pearson_needs_variance():
    with pytest.raises(EvaluationError):
        pearson([0.1, 0.1, 0.1], [0.2, 0.5, 0.9])
    with pytest.raises(EvaluationError):
        pearson([0.1], [0.2])
    with pytest.raises(EvaluationError):
        pearson([0.2, 0.5, 0.9], [0.7, 0.7, 0.7])
    assert evaluate([0.1, 0.9, 0.3], [0.5, 0.5, 0.5]).pearson is None
    assert evaluate([0.2, 0.5, 0.9], [0.7, 0.7, 0.7]).pearson is None
    assert evaluate([0.1, 0.1, 0.1], [0.2, 0.5, 0.9]).pearson is None


def test_length_mismatch():
    with pytest.raises(EvaluationError):
        mse([0.1, 0.2], [0.1])


def test_weights_from_citation_counts():
    w = derive_weights("sch1", n_d=53211, n_c=100287)
    assert w.w1 == pytest.approx(14116.272, abs=1e-3)
    assert w.w0 == pytest.approx(1.00007, abs=1e-5)
    assert w.scheme == WeightScheme.SCH1


def test_weights_from_sampled_pair_counts():
    w = derive_weights("sch2", total_pairs=89700, similar_pairs=19049)
    assert w.w1 == pytest.approx(4.708, abs=1e-3)
    assert w.w0 == pytest.approx(1.269, abs=1e-3)


def test_balanced_probability_and_degenerate_inputs():
    w = weights_from_probability(0.5, WeightScheme.CUSTOM)
    assert (w.w0, w.w1) == (2.0, 2.0)
    with pytest.raises(EvaluationError):
        derive_weights("sch2", total_pairs=10, similar_pairs=0)
    with pytest.raises(EvaluationError):
        derive_weights("sch1", n_d=1, n_c=0)


def test_weighted_metrics_reduce_to_plain_ones():
    rng = np.random.default_rng(5)
    y, y_hat = rng.random(30), rng.random(30)
    equal = ClassWeights(3.0, 3.0)
    assert wtd_fscore(y, y_hat, equal) == pytest.approx(fscore_macro(y, y_hat))
    assert wtd_mse(y, y_hat, equal) == pytest.approx(mse(y, y_hat))


def test_weighted_fscore_favours_the_heavier_class():
    y = [1, 1, 0, 0]
    y_hat = [1, 1, 1, 0]
    per_class = class_f1(y, y_hat)
    w = ClassWeights(1.0, 3.0)
    assert wtd_fscore(y, y_hat, w) == pytest.approx((per_class[0] + 3 * per_class[1]) / 4)


def _typed_docs_and_table():
    rng = np.random.default_rng(9)
    docs = [CaseDocument(f"c{i}", case_type=CaseType.CIVIL) for i in range(8)]
    docs += [CaseDocument(f"k{i}", case_type=CaseType.CRIMINAL) for i in range(6)]
    table = EmbeddingTable([d.id for d in docs], rng.normal(size=(len(docs), 4)))
    return docs, table


def test_sampled_weights_match_brute_force_pooling():
    docs, table = _typed_docs_and_table()
    total = similar = 0
    for prefix in ("c", "k"):
        members = [d.id for d in docs if d.id.startswith(prefix)]
        for a, b in combinations(members, 2):
            total += 1
            similar += cosine(table.vector(a), table.vector(b), raw=True) > 0.5
    w = derive_weights("sch2", text_emb=table, docs=docs, per_stratum=300, threshold=0.5, seed=1)
    assert w.p_similar == pytest.approx(similar / total)


def test_sampled_weights_respect_stratum_size(caplog):
    docs, table = _typed_docs_and_table()
    with caplog.at_level("INFO", logger="src.evaluation"):
        derive_weights("sch2", text_emb=table, docs=docs, per_stratum=4, threshold=0.0, seed=1)
    sampled = [r for r in caplog.records if r.getMessage() == "Weight stratum sampled"]
    assert [(r.case_type, r.docs, r.pairs) for r in sampled] == [("civil", 4, 6), ("criminal", 4, 6)]
    with pytest.raises(EvaluationError):
        derive_weights("sch2", text_emb=table, docs=docs, per_stratum=4, threshold=-1.0, seed=1)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_pairs_file_skips_header_and_round_trips(tmp_path):
    path = _write(tmp_path / "pairs.tsv", "id_a\tid_b\texpert\nd1\td2\t0.8\nd1\td3\t0.1\n")
    pairs = load_pairs(path)
    assert [(r.id_a, r.id_b, r.expert) for r in pairs.rows] == [("d1", "d2", 0.8), ("d1", "d3", 0.1)]
    assert pairs.ids == {"d1", "d2", "d3"}
    write_pairs(pairs, tmp_path / "again.tsv")
    assert load_pairs(tmp_path / "again.tsv").rows == pairs.rows


@pytest.mark.parametrize(
    "body",
    [
        "d1\td2\t0.8\nd2\td1\t0.3\n",
        "d1\td2\t1.5\n",
        "d1\td2\t0.5\nd1\td3\thigh\n",
    ],
)
def test_bad_pairs_files(tmp_path, body):
    with pytest.raises(EvaluationError):
        load_pairs(_write(tmp_path / "pairs.tsv", body))


def test_scores_attach_in_either_order(tmp_path):
    pairs = PairDataset([PairRow("d1", "d2", 1.0), PairRow("d1", "d3", 0.0), PairRow("d2", "d3", 0.0)])
    write_scores([("d2", "d1", 0.9), ("d1", "d3", 0.2), ("d3", "d2", 0.4)], tmp_path / "scores.tsv")
    scored = attach_scores(pairs, load_scores(tmp_path / "scores.tsv"))
    assert [r.predicted for r in scored.rows] == [0.9, 0.2, 0.4]
    report = evaluate_pairs(scored, weights=ClassWeights(1.0, 2.0), config={"method": "test"})
    assert report.n == 3
    assert report.fscore_macro == pytest.approx(1.0)
    assert report.config == {"method": "test"}


def test_missing_predictions_are_errors():
    pairs = PairDataset([PairRow("d1", "d2", 1.0)])
    with pytest.raises(EvaluationError):
        attach_scores(pairs, {})
    with pytest.raises(EvaluationError):
        evaluate_pairs(pairs)


def test_report_file(tmp_path):
    report = evaluate([0.1, 0.9, 0.8, 0.2], [0.2, 0.7, 0.9, 0.1], weights=ClassWeights(1.0, 1.0))
    write_report(report, tmp_path / "report.json")
    data = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert set(data) == {"n", "pearson", "mse", "fscore_macro", "wtd_fscore", "wtd_mse", "config"}
    assert data["fscore_macro"] == pytest.approx(1.0)
