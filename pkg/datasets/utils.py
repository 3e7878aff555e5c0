import os
import os.path as osp

import numpy as np

from gradforge.errors import ConfigError, DomainError, LabelError, ParseError, ShapeError
from gradforge.rng import make_stream


def one_hot(labels, num_classes):
    """Rows of the identity: label j becomes e_j of length ``num_classes``."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise LabelError(f"labels must lie in [0, {num_classes})")
    return np.eye(num_classes)[labels]


class LabeledDataset:
    """Feature vectors with integer class labels.

    Args:
        inputs (array): N x n feature matrix, one sample per row.
        labels (array): N class indices in [0, num_classes).
        num_classes (int): class count K.
        input_shape (tuple): shape each row is reshaped to by conv layers,
            ``(n,)`` when omitted.
        classnames (list): optional display names, one per class.
    """

    def __init__(self, inputs, labels, num_classes, input_shape=None, classnames=None):
        inputs = np.asarray(inputs, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if inputs.ndim == 1 and inputs.size == 0:
            inputs = inputs.reshape(0, int(np.prod(input_shape)) if input_shape else 0)
        if inputs.ndim != 2:
            raise ShapeError(f"inputs must be a matrix, got shape {inputs.shape}")
        if labels.shape != (inputs.shape[0],):
            raise ShapeError(f"{inputs.shape[0]} inputs but labels of shape {labels.shape}")
        if num_classes < 1:
            raise ConfigError("data.classes", f"must be >= 1, got {num_classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            bad = labels[(labels < 0) | (labels >= num_classes)][0]
            raise LabelError(f"label {bad} is outside [0, {num_classes})")

        self._inputs = inputs
        self._labels = labels
        self._num_classes = int(num_classes)
        self._input_shape = tuple(input_shape) if input_shape else (inputs.shape[1],)
        self._classnames = classnames or [str(c) for c in range(num_classes)]

    @property
    def inputs(self):
        return self._inputs

    @property
    def labels(self):
        return self._labels

    @property
    def num_classes(self):
        return self._num_classes

    @property
    def input_shape(self):
        return self._input_shape

    @property
    def classnames(self):
        return self._classnames

    @property
    def targets(self):
        return one_hot(self._labels, self._num_classes)

    def __len__(self):
        return self._labels.shape[0]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self._inputs[indices], self._labels[indices], self._num_classes,
                              self._input_shape, self._classnames)


class Split:
    """Disjoint train / validation parts of one dataset, with their source indices."""

    def __init__(self, train, validation, train_indices, val_indices):
        self.train = train
        self.validation = validation
        self.train_indices = train_indices
        self.val_indices = val_indices


def split(data, val_fraction, seed):
    """Seeded shuffle, then the first round(f * N) indices go to validation.

    Both parts keep the source order.
    """
    if not 0.0 <= val_fraction < 1.0:
        raise ConfigError("data.val_fraction", f"must lie in [0, 1), got {val_fraction}")
    n = len(data)
    n_val = int(round(val_fraction * n))
    order = make_stream(seed, "split").permutation(n)
    val_indices = np.sort(order[:n_val])
    train_indices = np.sort(order[n_val:])
    return Split(data.subset(train_indices), data.subset(val_indices), train_indices, val_indices)


def load_csv(path, n_features, num_classes):
    """Read ``x_1,...,x_n,label`` rows. Blank lines and lines starting with ``#`` are skipped.

    Args:
        path (str): CSV file.
        n_features (int): number of real fields before the label.
        num_classes (int): labels must lie in [0, num_classes).
    """
    if not osp.exists(path):
        raise ConfigError("data", f"no file exists at {path}")
    inputs, labels = [], []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = [field.strip() for field in line.split(",")]
            if len(fields) != n_features + 1:
                raise ParseError(path, lineno, f"expected {n_features + 1} fields, got {len(fields)}")
            try:
                row = [float(v) for v in fields[:-1]]
                label = int(fields[-1])
            except ValueError:
                raise ParseError(path, lineno, f"malformed row '{line}'") from None
            if not 0 <= label < num_classes:
                raise LabelError(f"{path}:{lineno}: label {label} is outside [0, {num_classes})")
            inputs.append(row)
            labels.append(label)
    if not inputs:
        raise DomainError(f"{path} holds no samples")
    return LabeledDataset(np.array(inputs), np.array(labels), num_classes)


def dumps_csv(data):
    return "".join(",".join([repr(float(v)) for v in x] + [str(int(y))]) + "\n"
                   for x, y in zip(data.inputs, data.labels))


def write_csv(data, path):
    """Inverse of :func:`load_csv` for files written with shortest round-trip reals."""
    if osp.dirname(path) and not osp.exists(osp.dirname(path)):
        os.makedirs(osp.dirname(path))
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_csv(data))
