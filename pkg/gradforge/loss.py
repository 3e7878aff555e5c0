"""Cost functions and the output-layer delta."""
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import activation as act
from .errors import ConfigError, DomainError, LabelError, ShapeError
from .linalg import hadamard, sq_norm
from .network import forward_many

QUADRATIC = "quadratic"
SOFTMAX_LOG_LOSS = "softmax_log_loss"


@dataclass(frozen=True)
class LossKind:
    tag: str = QUADRATIC
    lam: float = 0.0  # L2 weight penalty strength, 0 disables

    def __post_init__(self):
        if self.tag not in (QUADRATIC, SOFTMAX_LOG_LOSS):
            raise ConfigError("loss.kind", f"expected '{QUADRATIC}' or '{SOFTMAX_LOG_LOSS}', got '{self.tag}'")
        if not self.lam >= 0.0:
            raise ConfigError("loss.lambda", f"must be >= 0, got {self.lam}")

    @property
    def uses_labels(self):
        return self.tag == SOFTMAX_LOG_LOSS


Quadratic = LossKind(QUADRATIC)
SoftmaxLogLoss = LossKind(SOFTMAX_LOG_LOSS)


def target_of(kind, data, index):
    """The target ``sample_cost`` expects for sample ``index``: one-hot vector or label."""
    if kind.uses_labels:
        return int(data.labels[index])
    return data.targets[index]


def _check_label(label, k):
    if not 0 <= label < k:
        raise LabelError(f"label {label} is outside [0, {k})")


def sample_cost(kind, output, target):
    """Cost of one sample: 0.5 ||y - a||^2, or the softmax log loss of the label."""
    if kind.tag == QUADRATIC:
        target = np.asarray(target, dtype=np.float64)
        if output.shape != target.shape:
            raise ShapeError(f"output has shape {output.shape}, target has shape {target.shape}")
        return 0.5 * sq_norm(target - output)
    label = int(target)
    _check_label(label, output.shape[0])
    return float(logsumexp(output) - output[label])


def weight_penalty(net):
    """Sum of squared Frobenius norms of all weight arrays. Biases are not penalised."""
    return sum(sq_norm(layer.weights) for layer in net.layers if layer.has_params)


def dataset_cost(kind, net, data):
    """Mean sample cost over ``data`` plus (lambda / N) * weight_penalty(net)."""
    n = len(data)
    if n == 0:
        raise DomainError("cannot evaluate the cost of an empty dataset")
    outputs = forward_many(net, data.inputs)
    if kind.tag == QUADRATIC:
        targets = data.targets
        if outputs.shape != targets.shape:
            raise ShapeError(f"network outputs have shape {outputs.shape}, targets have shape {targets.shape}")
        costs = 0.5 * np.sum((targets - outputs) ** 2, axis=1)
    else:
        labels = np.asarray(data.labels)
        if labels.min() < 0 or labels.max() >= outputs.shape[1]:
            raise LabelError(f"labels must lie in [0, {outputs.shape[1]})")
        costs = logsumexp(outputs, axis=1) - outputs[np.arange(n), labels]
    cost = float(np.mean(costs))
    if kind.lam > 0:
        cost += kind.lam / n * weight_penalty(net)
    return cost


def scaled_cost(net, data):
    """sum_i ||y(x_i) - a(x_i)||^2, i.e. 2N times the unregularised quadratic cost."""
    outputs = forward_many(net, data.inputs)
    return float(np.sum((data.targets - outputs) ** 2))


def output_delta(kind, trace, target):
    """Sensitivity of the sample cost to the output layer's weighted input."""
    z = trace.weighted_inputs[-1]
    a = trace.output
    final = trace.kinds[-1]
    if kind.tag == QUADRATIC:
        target = np.asarray(target, dtype=np.float64)
        if a.shape != target.shape:
            raise ShapeError(f"output has shape {a.shape}, target has shape {target.shape}")
        return hadamard(act.derivative(final, z), a - target)
    if final.tag != act.IDENTITY:
        raise ConfigError("loss.kind", f"{SOFTMAX_LOG_LOSS} needs an identity output activation, got '{final}'")
    label = int(target)
    _check_label(label, a.shape[0])
    delta = act.softmax(a)
    delta[label] -= 1.0
    return delta
