import numpy as np

from gradforge.errors import ConfigError

from .utils import LabeledDataset

classnames = ['A', 'B']

# Two interleaved groups in the unit square; no line separates them.
CATEGORY_A = [(0.1, 0.1), (0.3, 0.4), (0.1, 0.5), (0.6, 0.9), (0.4, 0.2)]
CATEGORY_B = [(0.6, 0.3), (0.5, 0.6), (0.9, 0.2), (0.4, 0.4), (0.7, 0.6)]
EXTRA_B = (0.3, 0.7)


def _check(n_features, classes):
    if n_features != 2:
        raise ConfigError("data.n_features", f"the toy points live in the plane, got n_features={n_features}")
    if classes != 2:
        raise ConfigError("data.classes", f"the toy points have two classes, got classes={classes}")


class ToyPoints(LabeledDataset):
    """The ten labelled points, category A as class 0 and B as class 1."""

    def __init__(self, n_features=2, classes=2, **kwargs):
        _check(n_features, classes)
        points = CATEGORY_A + CATEGORY_B
        labels = [0] * len(CATEGORY_A) + [1] * len(CATEGORY_B)
        super().__init__(np.array(points), np.array(labels), 2, classnames=classnames)


class ToyPointsExtended(LabeledDataset):
    """The ten toy points plus one extra category-B point at (0.3, 0.7)."""

    def __init__(self, n_features=2, classes=2, **kwargs):
        _check(n_features, classes)
        points = CATEGORY_A + CATEGORY_B + [EXTRA_B]
        labels = [0] * len(CATEGORY_A) + [1] * (len(CATEGORY_B) + 1)
        super().__init__(np.array(points), np.array(labels), 2, classnames=classnames)


def toy_dataset():
    return ToyPoints()


def toy_dataset_extended():
    return ToyPointsExtended()
