import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from serkit.errors import EmptyEval, LayoutMismatch, LengthMismatch
from serkit.evaluation import (accuracy_from_confusion, compute_metrics, render_report,
                               render_table, reports_from_json)

LABELS = ["anger", "happy", "sad", "fear", "neutral"]


def test_perfect_predictions():
    gold = ["anger", "sad", "sad", "fear"]
    r = compute_metrics(gold, gold)
    assert r.accuracy == 1.0
    c = np.array(r.confusion)
    assert np.array_equal(c, np.diag(np.diag(c)))


def test_constant_predictor():
    gold = [lab for lab in LABELS for _ in range(4)]
    r = compute_metrics(["anger"] * 20, gold, labels=LABELS)
    assert r.accuracy == pytest.approx(0.2)
    assert r.undefined_precision == [False, True, True, True, True]
    assert r.precision[1:] == [0.0] * 4


def test_three_of_four():
    r = compute_metrics(["anger", "sad", "sad", "happy"], ["anger", "sad", "happy", "happy"],
                        labels=["anger", "happy", "sad"])
    assert r.accuracy == 0.75
    assert r.confusion == [[1, 0, 0], [0, 1, 1], [0, 0, 1]]
    assert r.support == [1, 2, 1]
    assert r.recall == [1.0, 0.5, 1.0]
    assert r.uar == pytest.approx(2.5 / 3)


def test_metric_errors():
    with pytest.raises(LengthMismatch):
        compute_metrics(["a"], ["a", "b"])
    with pytest.raises(EmptyEval):
        compute_metrics([], [])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(LABELS), st.sampled_from(LABELS)), min_size=1,
                max_size=80))
def test_accuracy_from_confusion_and_rows(pairs):
    pred, gold = zip(*pairs)
    r = compute_metrics(pred, gold, labels=LABELS)
    assert abs(accuracy_from_confusion(r.confusion) - r.accuracy) <= 1e-12
    assert np.array_equal(np.array(r.confusion).sum(axis=1), r.support)


def _report(arm, corpus, acc_pairs, train="synthA"):
    pred, gold = acc_pairs
    return compute_metrics(pred, gold, experiment_id=f"{arm}/{corpus}",
                           tags={"arm": arm, "corpus": corpus, "train_corpus": train,
                                 "feature": "mfcc_seq", "classifier": "lstm"})


def test_transfer_layout():
    reports = [_report("finetuned", "B", (["sad", "sad"], ["sad", "sad"])),
               _report("base", "B", (["sad", "anger"], ["sad", "sad"]))]
    table = render_table(reports, "transfer")
    lines = table.splitlines()
    assert len(lines) == 4
    assert lines[2].startswith("Train on synthA") and "50.00" in lines[2]
    assert lines[3].startswith("Fine-tune on smaller dataset") and "100.00" in lines[3]


def test_mtl_layout():
    reports = [_report("mtl", "A", (["sad"], ["sad"])), _report("single", "A", (["sad"], ["sad"]))]
    lines = render_table(reports, "mtl").splitlines()
    assert "only predict emotion" in lines[2]
    assert "predict both emotion and language ID" in lines[3]
    with pytest.raises(LayoutMismatch):
        render_table(reports, "transfer")


def test_empty_and_unknown_layout():
    with pytest.raises(LayoutMismatch):
        render_table([], "single_corpus")
    with pytest.raises(LayoutMismatch):
        render_table([_report("x", "A", (["sad"], ["sad"]))], "poster")


def test_json_roundtrip():
    reports = [_report("base", "B", (["sad", "anger", "fear"], ["sad", "sad", "fear"])),
               _report("finetuned", "B", (["sad", "sad", "fear"], ["sad", "sad", "fear"]))]
    table, doc = render_report(reports, "transfer", {"seed": 3})
    back, layout, prov = reports_from_json(doc)
    assert back == reports and layout == "transfer" and prov == {"seed": 3}
    assert render_report(back, layout, prov) == (table, doc)
