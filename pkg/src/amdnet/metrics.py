"""Confusion matrix, one-vs-rest rates with macro averaging, and reports."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .data import CLASSES
from .exceptions import PreconditionError, ValidationError

COLUMNS = ("class", "tp", "fp", "fn", "tn", "precision", "sensitivity", "specificity", "f1")

# rows = actual, columns = predicted, CLASSES order
PUBLISHED_CONFUSION = np.array([
    [98, 1, 1, 0],
    [1, 99, 0, 0],
    [3, 0, 93, 4],
    [1, 0, 3, 96],
])


def _as_index(label, classes) -> int:
    if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
        if 0 <= label < len(classes):
            return int(label)
    elif label in classes:
        return classes.index(label)
    raise ValidationError(f"label {label!r} is not one of {list(classes)}")


def confusion_matrix(actual, predicted, classes=CLASSES) -> np.ndarray:
    """Count matrix with ``counts[actual, predicted]``.

    Labels may be class names or integer indices into ``classes``.
    """
    actual, predicted = list(actual), list(predicted)
    if len(actual) != len(predicted):
        raise ValidationError("actual and predicted label sequences differ in length")
    cm = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for a, p in zip(actual, predicted):
        cm[_as_index(a, classes), _as_index(p, classes)] += 1
    return cm


def _rate(num, den):
    den = np.asarray(den, dtype=np.float64)
    undefined = den == 0
    return np.where(undefined, 0.0, num / np.where(undefined, 1.0, den)), undefined


@dataclass
class MetricsReport:
    classes: tuple
    confusion: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray
    precision: np.ndarray
    sensitivity: np.ndarray
    specificity: np.ndarray
    f1: np.ndarray
    undefined: dict

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion) / self.total)

    def macro(self, name: str) -> float:
        return float(np.mean(getattr(self, name)))

    def summary(self) -> dict[str, float]:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro("precision"),
            "macro_sensitivity": self.macro("sensitivity"),
            "macro_specificity": self.macro("specificity"),
            "macro_f1": self.macro("f1"),
        }


def compute_metrics(cm, classes=CLASSES) -> MetricsReport:
    """One-vs-rest counts and rates per class.

    Rates with a zero denominator are reported as 0 and flagged in
    ``report.undefined[rate_name]`` (a boolean array per class).
    """
    cm = np.asarray(cm, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] != len(classes):
        raise ValidationError(f"confusion matrix must be {len(classes)} x {len(classes)}")
    if (cm < 0).any():
        raise ValidationError("confusion counts must be non-negative")
    total = cm.sum()
    if total == 0:
        raise PreconditionError("confusion matrix is empty")
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    tn = total - tp - fp - fn
    precision, u_p = _rate(tp, tp + fp)
    sensitivity, u_s = _rate(tp, tp + fn)
    specificity, u_sp = _rate(tn, tn + fp)
    f1, u_f = _rate(tp, tp + 0.5 * (fp + fn))
    undefined = {"precision": u_p, "sensitivity": u_s, "specificity": u_sp, "f1": u_f}
    return MetricsReport(tuple(classes), cm, tp, fp, fn, tn, precision, sensitivity,
                         specificity, f1, undefined)


def _rows(report: MetricsReport):
    for i, name in enumerate(report.classes):
        yield [name, int(report.tp[i]), int(report.fp[i]), int(report.fn[i]), int(report.tn[i]),
               f"{report.precision[i]:.4f}", f"{report.sensitivity[i]:.4f}",
               f"{report.specificity[i]:.4f}", f"{report.f1[i]:.4f}"]


def emit_report(report: MetricsReport, fmt: str = "text") -> str:
    """Render the per-class table and the macro/accuracy footer.

    ``csv`` gives the fixed column order followed by ``name,value`` footer
    lines; ``text`` gives an aligned table.  Values carry 4 decimals.
    """
    footer = [(k, f"{v:.4f}") for k, v in report.summary().items()]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        w.writerows(_rows(report))
        for k, v in footer:
            w.writerow([k, v])
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    widths = [10, 5, 5, 5, 5, 11, 11, 11, 8]
    lines = ["".join(str(c).rjust(wd) for c, wd in zip(COLUMNS, widths))]
    for row in _rows(report):
        lines.append("".join(str(c).rjust(wd) for c, wd in zip(row, widths)))
    lines.append("")
    lines.extend(f"{k:>18}: {v}" for k, v in footer)
    flagged = [f"{rate}[{report.classes[i]}]" for rate, mask in report.undefined.items()
               for i in np.flatnonzero(mask)]
    if flagged:
        lines.append("zero-denominator rates reported as 0: " + ", ".join(flagged))
    return "\n".join(lines) + "\n"


def parse_report_csv(text: str) -> tuple[list[dict], dict[str, float]]:
    """Inverse of ``emit_report(..., "csv")``: per-class rows and footer values."""
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    per_class, footer = [], {}
    for r in body:
        if len(r) == len(header):
            per_class.append(dict(zip(header, r)))
        elif len(r) == 2:
            footer[r[0]] = float(r[1])
    return per_class, footer
