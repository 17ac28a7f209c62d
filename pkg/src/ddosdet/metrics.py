"""Confusion matrices, per-class scores, per-attack-type recall, and reports.

All scores derive from integer counts by a single float division, so they
match an exact rational recount bit for bit: precision = TP/(TP+FP),
recall = TP/(TP+FN), F = 2TP/(2TP+FP+FN) (the harmonic mean of precision
and recall), accuracy = trace/total. Any 0/0 case scores 0 and the metric
is flagged in the report rather than silently dropped.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatchError

CLASS_NAMES = ("Benign", "Attack")


@dataclass(frozen=True)
class ConfusionMatrix:
    """2x2 integer counts indexed (true class, predicted class)."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (2, 2) or np.any(c < 0):
            raise ValueError(f"confusion matrix must be 2x2 non-negative, got {c}")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(preds, truth) -> ConfusionMatrix:
    """Count (true, predicted) pairs over class indices {0: Benign, 1: Attack}."""
    preds = np.asarray(preds, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if preds.shape != truth.shape or preds.ndim != 1:
        raise LengthMismatchError(f"predictions {preds.shape} vs truth {truth.shape}")
    if len(preds) == 0:
        raise LengthMismatchError("cannot build a confusion matrix from zero samples")
    counts = np.zeros((2, 2), dtype=np.int64)
    np.add.at(counts, (truth, preds), 1)
    return ConfusionMatrix(counts)


@dataclass(frozen=True)
class EvalReport:
    """Scores for one model; class-indexed tuples follow (Benign, Attack)."""

    model: str
    confusion: ConfusionMatrix
    precision: tuple
    recall: tuple
    f_score: tuple
    accuracy: float
    per_type_recall: dict = None
    degenerate: tuple = ()
    history: object = None


def _ratio(num: int, den: int, flag_name: str, flags: list) -> float:
    if den == 0:
        flags.append(flag_name)
        return 0.0
    return num / den


def summarize(cm: ConfusionMatrix, preds=None, truth_types=None, model: str = "model") -> EvalReport:
    """Reduce a confusion matrix to an EvalReport.

    When ``preds`` and ``truth_types`` (per-sample predicted class indices
    and true attack-type tags) are supplied, a per-attack-type recall map
    is included: for each tag, the fraction of its samples predicted as
    their true class.
    """
    if cm.total < 1:
        raise LengthMismatchError("confusion matrix has no samples")
    c = cm.counts
    flags: list = []
    precision = []
    recall = []
    f_score = []
    for k, name in enumerate(CLASS_NAMES):
        tp = int(c[k, k])
        fp = int(c[1 - k, k])
        fn = int(c[k, 1 - k])
        precision.append(_ratio(tp, tp + fp, f"precision/{name}", flags))
        recall.append(_ratio(tp, tp + fn, f"recall/{name}", flags))
        f_score.append(_ratio(2 * tp, 2 * tp + fp + fn, f"f_score/{name}", flags))
    accuracy = (int(c[0, 0]) + int(c[1, 1])) / cm.total

    per_type = None
    if truth_types is not None:
        if preds is None:
            raise LengthMismatchError("per-type recall needs predictions alongside type tags")
        preds = np.asarray(preds, dtype=np.int64)
        if len(preds) != len(truth_types):
            raise LengthMismatchError(
                f"{len(preds)} predictions vs {len(truth_types)} type tags"
            )
        if len(preds) != cm.total:
            raise LengthMismatchError("type tags do not cover the confusion matrix total")
        totals: dict = {}
        hits: dict = {}
        for p, tag in zip(preds, truth_types):
            true_class = 0 if tag == "Benign" else 1
            totals[tag] = totals.get(tag, 0) + 1
            hits[tag] = hits.get(tag, 0) + (1 if int(p) == true_class else 0)
        per_type = {tag: hits[tag] / totals[tag] for tag in sorted(totals)}

    return EvalReport(
        model=model,
        confusion=cm,
        precision=tuple(precision),
        recall=tuple(recall),
        f_score=tuple(f_score),
        accuracy=accuracy,
        per_type_recall=per_type,
        degenerate=tuple(flags),
    )


@dataclass(frozen=True)
class ExternalRow:
    """A pre-computed comparison row (e.g. results reported elsewhere)."""

    model: str
    precision: tuple  # (attack, benign)
    recall: tuple
    f_score: tuple
    accuracy_pct: float


def accuracy_pct_forms(accuracy: float):
    """(one-decimal percent, integer percent); the integer form is the floor
    of the one-decimal form, so 99.7 prints as 99."""
    one_dp = round(accuracy * 1000.0) / 10.0
    return one_dp, int(one_dp)


def _pair(attack: float, benign: float) -> str:
    return f"{attack:.2f}, {benign:.2f}"


def report_table(reports, external_rows=()) -> str:
    """Render comparison rows as fixed-width text.

    Metric pairs are printed attack-first to match the report layout;
    accuracy appears as an integer percent in the table with the
    one-decimal form in a footnote.
    """
    if not reports and not external_rows:
        raise ValueError("report_table needs at least one report")
    rows = []
    footnotes = []
    for r in reports:
        one_dp, int_pct = accuracy_pct_forms(r.accuracy)
        rows.append(
            (
                r.model,
                _pair(r.precision[1], r.precision[0]),
                _pair(r.recall[1], r.recall[0]),
                _pair(r.f_score[1], r.f_score[0]),
                str(int_pct),
            )
        )
        footnotes.append(f"{r.model} accuracy: {one_dp:.1f}%")
        if r.degenerate:
            footnotes.append(f"{r.model} zero-denominator metrics (scored 0): "
                             + ", ".join(r.degenerate))
        if r.per_type_recall:
            parts = " ".join(f"{t}={v:.2f}" for t, v in r.per_type_recall.items())
            footnotes.append(f"{r.model} per-attack-type recall: {parts}")
    for er in external_rows:
        one_dp, int_pct = accuracy_pct_forms(er.accuracy_pct / 100.0)
        rows.append(
            (
                er.model,
                _pair(*er.precision),
                _pair(*er.recall),
                _pair(*er.f_score),
                str(int_pct),
            )
        )
        footnotes.append(f"{er.model} accuracy: {one_dp:.1f}%")

    header = ("Techniques", "Precision", "Recall", "F-score", "Accuracy(%)")
    sub = ("", "Attack & Benign", "Attack & Benign", "Attack & Benign", "")
    widths = [
        max(len(header[i]), len(sub[i]), *(len(row[i]) for row in rows)) for i in range(5)
    ]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(header)).rstrip(),
        "  ".join(s.ljust(widths[i]) for i, s in enumerate(sub)).rstrip(),
    ]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    lines.append("")
    lines.extend(footnotes)
    return "\n".join(lines) + "\n"


def report_csv(reports, external_rows=()) -> str:
    """Machine-readable rows: model,class,precision,recall,fscore,accuracy_pct."""
    out = ["model,class,precision,recall,fscore,accuracy_pct"]
    for r in reports:
        one_dp, _ = accuracy_pct_forms(r.accuracy)
        for k, name in enumerate(CLASS_NAMES):
            out.append(
                f"{r.model},{name},{r.precision[k]!r},{r.recall[k]!r},{r.f_score[k]!r},{one_dp:.1f}"
            )
    for er in external_rows:
        for k, name in enumerate(CLASS_NAMES):
            j = 1 - k  # external tuples are attack-first
            out.append(
                f"{er.model},{name},{er.precision[j]!r},{er.recall[j]!r},"
                f"{er.f_score[j]!r},{er.accuracy_pct:.1f}"
            )
    return "\n".join(out) + "\n"


def export_curves(history, path) -> None:
    """Write per-epoch training metrics as CSV (header plus one row per epoch)."""
    if len(history.records) == 0:
        raise ValueError("history is empty")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
        for rec in history.records:
            writer.writerow(
                [rec.epoch, repr(rec.train_loss), repr(rec.train_acc), repr(rec.val_loss), repr(rec.val_acc)]
            )


def read_curves(path):
    """Parse an exported curves CSV back into EpochRecord-shaped tuples."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]:
            raise ValueError(f"unexpected curves header: {header}")
        return [
            (int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4])) for r in reader
        ]
