"""Componentwise nonlinearities, their derivatives, and softmax."""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from scipy.special import softmax as _softmax

from .errors import ConfigError, UnsupportedDerivativeError

SIGMOID = "sigmoid"
RELU = "relu"
LEAKY_RELU = "leaky_relu"
STEP = "step"
IDENTITY = "identity"

DEFAULT_LEAKY_SLOPE = 0.01


@dataclass(frozen=True)
class ActivationKind:
    tag: str
    slope: float = DEFAULT_LEAKY_SLOPE

    def __post_init__(self):
        if self.tag not in (SIGMOID, RELU, LEAKY_RELU, STEP, IDENTITY):
            raise ConfigError("activation", f"unknown activation '{self.tag}'")
        if self.tag == LEAKY_RELU and not 0.0 < self.slope < 1.0:
            raise ConfigError("activation", f"leaky slope must lie in (0, 1), got {self.slope}")

    @property
    def differentiable(self):
        return self.tag != STEP

    @classmethod
    def parse(cls, text):
        """Parse ``sigmoid``, ``relu``, ``leaky_relu:0.01``, ``step`` or ``identity``."""
        name, _, arg = text.strip().lower().partition(":")
        if name == LEAKY_RELU:
            try:
                slope = float(arg) if arg else DEFAULT_LEAKY_SLOPE
            except ValueError:
                raise ConfigError("activation", f"bad leaky slope in '{text}'") from None
            return cls(LEAKY_RELU, slope)
        if arg:
            raise ConfigError("activation", f"activation '{name}' takes no argument")
        return cls(name)

    def __str__(self):
        if self.tag == LEAKY_RELU:
            return f"{LEAKY_RELU}:{self.slope!r}"
        return self.tag


Sigmoid = ActivationKind(SIGMOID)
ReLU = ActivationKind(RELU)
LeakyReLU = ActivationKind(LEAKY_RELU)
Step = ActivationKind(STEP)
Identity = ActivationKind(IDENTITY)


def apply(kind, z):
    """sigma(z) componentwise."""
    if kind.tag == SIGMOID:
        return expit(z)
    if kind.tag == RELU:
        return np.where(z > 0, z, 0.0)
    if kind.tag == LEAKY_RELU:
        return np.where(z > 0, z, kind.slope * z)
    if kind.tag == STEP:
        return np.where(z > 0, 1.0, 0.0)
    return np.array(z, dtype=np.float64, copy=True)


def derivative(kind, z):
    """sigma'(z) componentwise. ReLU-type kinks take the left slope at exactly 0."""
    if kind.tag == SIGMOID:
        s = expit(z)
        return s * (1.0 - s)
    if kind.tag == RELU:
        return np.where(z > 0, 1.0, 0.0)
    if kind.tag == LEAKY_RELU:
        return np.where(z > 0, 1.0, kind.slope)
    if kind.tag == STEP:
        raise UnsupportedDerivativeError("step activation has zero derivative almost everywhere and cannot be trained")
    return np.ones_like(z, dtype=np.float64)


def softmax(v):
    """exp(v_s) / sum_j exp(v_j), evaluated as exp(v_s - max v) to avoid overflow."""
    return _softmax(np.asarray(v, dtype=np.float64))
