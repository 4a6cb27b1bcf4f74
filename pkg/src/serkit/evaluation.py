"""Accuracy, per-class precision/recall, confusion matrices and
aligned result tables (single corpus, cross corpus, transfer, multi-task)."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EmptyEval, LayoutMismatch, LengthMismatch

LAYOUTS = ("single_corpus", "cross_corpus", "transfer", "mtl")

TRANSFER_ROWS = {"base": "Train on {train}", "finetuned": "Fine-tune on smaller dataset"}
MTL_ROWS = {"single": "LSTM (only predict emotion)",
            "mtl": "Multi-task LSTM (predict both emotion and language ID)"}


@dataclass
class EvalReport:
    experiment_id: str
    labels: list
    accuracy: float
    uar: float
    precision: list
    recall: list
    undefined_precision: list
    undefined_recall: list
    support: list
    confusion: list
    tags: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    seed: int = 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def compute_metrics(predictions, gold, labels=None, experiment_id="", tags=None,
                    config=None, seed=0) -> EvalReport:
    """Confusion matrix rows are gold classes, columns predicted classes.

    Precision or recall of a class with no predictions or no support is
    reported as 0 and flagged in ``undefined_*``.
    """
    predictions = [str(p) for p in predictions]
    gold = [str(g) for g in gold]
    if len(predictions) != len(gold):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(gold)} gold labels")
    if not gold:
        raise EmptyEval("nothing to evaluate")
    if labels is None:
        from .corpus import EMOTIONS
        seen = set(gold) | set(predictions)
        labels = [e for e in EMOTIONS if e in seen] + sorted(seen - set(EMOTIONS))
    labels = list(labels)
    index = {lab: i for i, lab in enumerate(labels)}
    conf = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for g, p in zip(gold, predictions):
        conf[index[g], index[p]] += 1
    support = conf.sum(axis=1)
    predicted = conf.sum(axis=0)
    tp = np.diag(conf)
    precision = np.where(predicted > 0, tp / np.maximum(predicted, 1), 0.0)
    recall = np.where(support > 0, tp / np.maximum(support, 1), 0.0)
    present = support > 0
    return EvalReport(
        experiment_id=experiment_id,
        labels=labels,
        accuracy=float(tp.sum() / conf.sum()),
        uar=float(recall[present].mean()),
        precision=[float(v) for v in precision],
        recall=[float(v) for v in recall],
        undefined_precision=[bool(v) for v in predicted == 0],
        undefined_recall=[bool(v) for v in support == 0],
        support=[int(v) for v in support],
        confusion=conf.tolist(),
        tags=dict(tags or {}),
        config=dict(config or {}),
        seed=int(seed),
    )


def accuracy_from_confusion(confusion):
    c = np.asarray(confusion)
    return float(np.trace(c) / c.sum())


# ---------------------------------------------------------------------------
# tables

def _row_label(report, layout):
    t = report.tags
    if layout == "single_corpus":
        return f"{t.get('feature', '?')} | {t.get('classifier', '?')}"
    if layout == "cross_corpus":
        return (f"{t.get('feature', '?')} + {t.get('classifier', '?')} "
                f"(train {t.get('train_corpus', '?')})")
    arm = t.get("arm")
    if layout == "transfer":
        if arm not in TRANSFER_ROWS:
            raise LayoutMismatch(f"transfer report {report.experiment_id!r} lacks arm base/finetuned")
        return TRANSFER_ROWS[arm].format(train=t.get("train_corpus", "base corpus"))
    if arm not in MTL_ROWS:
        raise LayoutMismatch(f"mtl report {report.experiment_id!r} lacks arm single/mtl")
    return MTL_ROWS[arm]


def _row_order(layout, rows):
    if layout == "transfer":
        return sorted(rows, key=lambda r: not r.startswith("Train on"))
    if layout == "mtl":
        return sorted(rows, key=lambda r: r.startswith("Multi-task"))
    return rows


def render_table(reports, layout):
    if layout not in LAYOUTS:
        raise LayoutMismatch(f"unknown layout {layout!r}")
    if not reports:
        raise LayoutMismatch("no reports to render")
    grid, rows, cols = {}, [], []
    for r in reports:
        row = _row_label(r, layout)
        col = r.tags.get("test_corpus") or r.tags.get("corpus", "?")
        if row not in rows:
            rows.append(row)
        if col not in cols:
            cols.append(col)
        grid[(row, col)] = r.accuracy
    rows = _row_order(layout, rows)
    header = ["" if layout in ("transfer", "mtl") else "Feature | Classifier"] + cols
    body = [[row] + [f"{100 * grid[(row, c)]:.2f}" if (row, c) in grid else "-" for c in cols]
            for row in rows]
    widths = [max(len(line[i]) for line in [header] + body) for i in range(len(header))]
    fmt = lambda line: " | ".join(s.ljust(w) if i == 0 else s.rjust(w)
                                  for i, (s, w) in enumerate(zip(line, widths)))
    rule = "-+-".join("-" * w for w in widths)
    return "\n".join([fmt(header), rule] + [fmt(line) for line in body])


def reports_to_json(reports, layout, provenance=None):
    doc = {"layout": layout, "reports": [r.to_dict() for r in reports],
           "provenance": provenance or {}}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def reports_from_json(text):
    doc = json.loads(text)
    return [EvalReport.from_dict(d) for d in doc["reports"]], doc["layout"], doc.get("provenance", {})


def render_report(reports, layout, provenance=None):
    """Return (text table, JSON document) for a list of reports."""
    table = render_table(reports, layout)
    return table, reports_to_json(reports, layout, provenance)
