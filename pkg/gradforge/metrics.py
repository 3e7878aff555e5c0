"""Classification error, top-k error and the confusion matrix."""
import csv
import io
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from sklearn.metrics import confusion_matrix
from tabulate import tabulate

from .errors import DomainError, LabelError, ShapeError
from .network import forward_many


@dataclass
class ConfusionMatrix:
    """``counts[i, j]`` is the number of class-j samples predicted as class i."""
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ShapeError(f"confusion counts must be square, got shape {self.counts.shape}")
        if (self.counts < 0).any():
            raise DomainError("confusion counts must be nonnegative")

    @property
    def num_classes(self):
        return self.counts.shape[0]

    @property
    def total(self):
        return int(self.counts.sum())


@dataclass
class Summary:
    column_accuracy: List[Optional[float]]  # per true class
    row_precision: List[Optional[float]]  # per predicted class, None for rows without predictions
    overall: float


def _scores(net, data):
    if len(data) == 0:
        raise DomainError("cannot evaluate on an empty dataset")
    outputs = forward_many(net, data.inputs)
    labels = np.asarray(data.labels)
    k = outputs.shape[1]
    if labels.min() < 0 or labels.max() >= k:
        raise LabelError(f"labels must lie in [0, {k}) for a network with {k} outputs")
    return outputs, labels


def confusion_from_labels(true_labels, predicted, num_classes):
    """Counts in the predicted-row / true-column layout."""
    return ConfusionMatrix(confusion_matrix(true_labels, predicted, labels=np.arange(num_classes)).T)


def evaluate(net, data):
    outputs, labels = _scores(net, data)
    return confusion_from_labels(labels, np.argmax(outputs, axis=1), outputs.shape[1])


def top_k_errors(outputs, labels, k):
    """Per-sample flags: the true label is not among the k largest outputs.

    Ranking is by value, ties broken towards the lower index.
    """
    outputs = np.asarray(outputs)
    if not 1 <= k <= outputs.shape[1]:
        raise DomainError(f"k must lie in [1, {outputs.shape[1]}], got {k}")
    ranked = np.argsort(-outputs, axis=1, kind="stable")[:, :k]
    return ~(ranked == np.asarray(labels)[:, None]).any(axis=1)


def top_k_error(net, data, k):
    outputs, labels = _scores(net, data)
    return float(np.mean(top_k_errors(outputs, labels, k)))


def summarize(cm):
    if cm.total == 0:
        raise DomainError("cannot summarize an empty confusion matrix")
    diag = np.diag(cm.counts)
    columns, rows = cm.counts.sum(axis=0), cm.counts.sum(axis=1)
    column_accuracy = [float(d / c) if c else None for d, c in zip(diag, columns)]
    row_precision = [float(d / r) if r else None for d, r in zip(diag, rows)]
    return Summary(column_accuracy, row_precision, float(diag.sum() / cm.total))


def _pct(value):
    return "-" if value is None else f"{100.0 * value:.1f}%"


def _rows(cm, class_names=None):
    names = class_names or [str(i) for i in range(cm.num_classes)]
    summary = summarize(cm)
    header = ["predicted \\ true"] + list(names) + ["all"]
    body = []
    for i, name in enumerate(names):
        body.append([name] + [int(c) for c in cm.counts[i]] + [_pct(summary.row_precision[i])])
    body.append(["all"] + [_pct(a) for a in summary.column_accuracy] + [_pct(summary.overall)])
    return header, body


def format_report(cm, class_names=None):
    """Aligned text table with an "all" row (column accuracy) and column (row precision)."""
    header, body = _rows(cm, class_names)
    return tabulate(body, headers=header, tablefmt="simple", stralign="right")


def to_csv(cm, class_names=None):
    header, body = _rows(cm, class_names)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(body)
    return buffer.getvalue()
