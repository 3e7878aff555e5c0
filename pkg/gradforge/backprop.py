"""Back propagation and its finite-difference check.

``backward`` runs the delta recursion

    delta_L = sigma'(z_L) o (a_L - y)
    delta_l = sigma'(z_l) o J_{l+1}^T delta_{l+1}
    dC/db_l = delta_l,    dC/dW_l = delta_l a_{l-1}^T

where ``J^T`` is ``W^T`` for a dense layer and the layer's Jacobian-transpose
action for conv and pool layers. ``backward_diagonal_form`` computes the same
thing with explicit ``D_l = diag(sigma'(z_l))`` matrices. ``fd_gradient``
differentiates the cost numerically, one parameter at a time.
"""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import activation as act
from .conv import PoolLayer, pool_tie_gap
from .errors import ShapeError
from .linalg import diag, hadamard
from .loss import output_delta, sample_cost, weight_penalty
from .network import flatten_params, forward, param_count, unflatten_params

DEFAULT_H = 1e-6
DEFAULT_TOLERANCE = 1e-6
# Keeps 0 / 0 out of relative_error; see resolution_floor for the real floor.
GRAD_FLOOR = 1e-12
# Rounding error of one cost evaluation, in units of eps * scale.
ROUNDOFF_ULPS = 16


@dataclass
class GradientBundle:
    """Per-layer gradients, ``None`` for layers without parameters."""
    weight_grads: List[Optional[np.ndarray]]
    bias_grads: List[Optional[np.ndarray]]

    @classmethod
    def zeros_like(cls, net):
        weights = [np.zeros_like(layer.weights) if layer.has_params else None for layer in net.layers]
        biases = [np.zeros_like(layer.biases) if layer.has_params else None for layer in net.layers]
        return cls(weights, biases)

    def _check(self, other):
        for mine, theirs in zip(self.weight_grads + self.bias_grads, other.weight_grads + other.bias_grads):
            if (mine is None) != (theirs is None) or (mine is not None and mine.shape != theirs.shape):
                raise ShapeError("gradient bundles have different shapes")
        if len(self.weight_grads) != len(other.weight_grads):
            raise ShapeError("gradient bundles have different layer counts")

    def add(self, other, scale=1.0):
        """self + scale * other, for shape-identical bundles."""
        self._check(other)
        weights = [None if g is None else g + scale * h for g, h in zip(self.weight_grads, other.weight_grads)]
        biases = [None if g is None else g + scale * h for g, h in zip(self.bias_grads, other.bias_grads)]
        return GradientBundle(weights, biases)

    def scaled(self, scale):
        return GradientBundle([None if g is None else scale * g for g in self.weight_grads],
                              [None if g is None else scale * g for g in self.bias_grads])

    def flatten(self):
        """One vector in the order of :func:`network.flatten_params`."""
        chunks = []
        for w, b in zip(self.weight_grads, self.bias_grads):
            if w is not None:
                chunks.append(w.reshape(-1))
                chunks.append(b)
        return np.concatenate(chunks) if chunks else np.zeros(0)

    @classmethod
    def unflatten(cls, net, theta):
        shaped = unflatten_params(net, theta)
        return cls([layer.weights if layer.has_params else None for layer in shaped.layers],
                   [layer.biases if layer.has_params else None for layer in shaped.layers])


def _check_trace(net, trace):
    if len(trace.weighted_inputs) != len(net.layers):
        raise ShapeError(f"trace covers {len(trace.weighted_inputs)} layers, network has {len(net.layers)}")
    for index, z in enumerate(trace.weighted_inputs):
        if z.shape[0] != np.prod(net.shapes[index + 1]):
            raise ShapeError(f"trace weighted input {index} has shape {z.shape}, layer output is {net.shapes[index + 1]}")


def _mask(trace, index):
    if trace.masks is None:
        return None
    return trace.masks[index]


def backward_from_delta(net, trace, delta, lam=0.0, n_samples=1):
    """Run the recursion from a given output delta."""
    _check_trace(net, trace)
    n_layers = len(net.layers)
    weight_grads, bias_grads = [None] * n_layers, [None] * n_layers
    for index in reversed(range(n_layers)):
        layer = net.layers[index]
        upstream, gw, gb = layer.backward(delta, trace.activations[index], net.shapes[index], trace.caches[index])
        if layer.has_params:
            if lam > 0:
                gw = gw + (2.0 * lam / n_samples) * layer.weights
            weight_grads[index], bias_grads[index] = gw, gb
        if index > 0:
            delta = hadamard(act.derivative(trace.kinds[index - 1], trace.weighted_inputs[index - 1]), upstream)
            mask = _mask(trace, index - 1)
            if mask is not None:
                delta = hadamard(delta, mask)
    return GradientBundle(weight_grads, bias_grads)


def backward(net, trace, target, loss, n_samples=1):
    """Gradient of one sample's cost with respect to every weight and bias.

    With ``loss.lam > 0`` the weight gradients also carry
    ``(2 lambda / n_samples) W``, the share of the penalty that belongs to one
    of ``n_samples`` training points.
    """
    return backward_from_delta(net, trace, output_delta(loss, trace, target), loss.lam, n_samples)


def backward_diagonal_form(net, trace, target, loss, n_samples=1):
    """Same result as :func:`backward`, written with D_l = diag(sigma'(z_l))."""
    _check_trace(net, trace)
    n_layers = len(net.layers)
    final = trace.kinds[-1]
    if loss.uses_labels:
        delta = output_delta(loss, trace, target)
    else:
        residual = trace.output - np.asarray(target, dtype=np.float64)
        delta = diag(act.derivative(final, trace.weighted_inputs[-1])) @ residual
    weight_grads, bias_grads = [None] * n_layers, [None] * n_layers
    for index in reversed(range(n_layers)):
        layer = net.layers[index]
        a_prev = trace.activations[index]
        if layer.kind == "dense":
            upstream = layer.weights.T @ delta
            gw = delta[:, None] * a_prev[None, :]
            gb = delta.copy()
        else:
            upstream, gw, gb = layer.backward(delta, a_prev, net.shapes[index], trace.caches[index])
        if layer.has_params:
            if loss.lam > 0:
                gw = gw + (2.0 * loss.lam / n_samples) * layer.weights
            weight_grads[index], bias_grads[index] = gw, gb
        if index > 0:
            d = diag(act.derivative(trace.kinds[index - 1], trace.weighted_inputs[index - 1]))
            mask = _mask(trace, index - 1)
            if mask is not None:
                d = d @ diag(mask)
            delta = d @ upstream
    return GradientBundle(weight_grads, bias_grads)


def fd_gradient(net, x, target, loss, h=DEFAULT_H, n_samples=1, masks=None):
    """Central differences (C(p + h e_r) - C(p - h e_r)) / 2h over every parameter p_r.

    Each evaluation is a fresh forward pass. The cost includes the
    ``(lambda / n_samples) * ||W||^2`` share of the weight penalty so the
    result is comparable with :func:`backward`.
    """
    if not h > 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")

    def cost(theta):
        perturbed = unflatten_params(net, theta)
        value = sample_cost(loss, forward(perturbed, x, masks).output, target)
        if loss.lam > 0:
            value += loss.lam / n_samples * weight_penalty(perturbed)
        return value

    theta = flatten_params(net)
    grad = np.zeros(param_count(net))
    for r in range(theta.size):
        step = np.zeros_like(theta)
        step[r] = h
        grad[r] = (cost(theta + step) - cost(theta - step)) / (2.0 * h)
    return GradientBundle.unflatten(net, grad)


def kink_margin(net, trace):
    """Distance of the trace from any point where the network is not differentiable.

    That is the smallest |z| over ReLU-type units and the smallest gap
    between the two largest entries of a max-pool window. ``inf`` when the
    network has no kinks.
    """
    margin = np.inf
    for index, layer in enumerate(net.layers):
        if layer.activation.tag in (act.RELU, act.LEAKY_RELU):
            margin = min(margin, float(np.min(np.abs(trace.weighted_inputs[index]))))
        if isinstance(layer, PoolLayer):
            x = trace.activations[index].reshape(net.shapes[index])
            margin = min(margin, pool_tie_gap(layer, x))
    return margin


def resolution_floor(net, x, target, loss, h=DEFAULT_H, tolerance=DEFAULT_TOLERANCE, n_samples=1, masks=None):
    """Smallest gradient component that central differences resolve to ``tolerance``.

    Each cost evaluation is off by about ``ROUNDOFF_ULPS * eps * scale``,
    where ``scale`` is the largest of |C|, any |z| or |a| in the forward
    trace and 1. The difference quotient divides that by ``h``. Below the
    returned value a component's error is roundoff, so it is measured
    against the floor.
    """
    if not h > 0 or not tolerance > 0:
        raise ValueError(f"step and tolerance must be positive, got h={h}, tolerance={tolerance}")
    trace = forward(net, x, masks)
    cost = sample_cost(loss, trace.output, target)
    if loss.lam > 0:
        cost += loss.lam / n_samples * weight_penalty(net)
    scale = max([abs(cost), 1.0] + [float(np.max(np.abs(v))) for v in trace.weighted_inputs + trace.activations])
    return max(GRAD_FLOOR, ROUNDOFF_ULPS * np.finfo(np.float64).eps * scale / (h * tolerance))


def relative_error(a, b, floor=GRAD_FLOOR):
    """|a - b| / max(|a|, |b|, floor), componentwise."""
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


@dataclass
class LayerCheck:
    layer: int  # 1-based, counting parameterised layers among all layers
    description: str
    weight_error: float
    bias_error: float
    worst: tuple  # ("weights" | "biases", index tuple)


@dataclass
class GradcheckReport:
    layers: List[LayerCheck]

    @property
    def max_error(self):
        return max((max(c.weight_error, c.bias_error) for c in self.layers), default=0.0)

    def passed(self, tolerance):
        return self.max_error < tolerance


def compare_gradients(net, analytic, numeric, floor=GRAD_FLOOR):
    """Per-layer maximum relative error between two bundles."""
    analytic._check(numeric)
    checks = []
    for index, layer in enumerate(net.layers):
        if not layer.has_params:
            continue
        w_err = relative_error(analytic.weight_grads[index], numeric.weight_grads[index], floor)
        b_err = relative_error(analytic.bias_grads[index], numeric.bias_grads[index], floor)
        if w_err.max() >= b_err.max():
            worst = ("weights", tuple(int(i) for i in np.unravel_index(np.argmax(w_err), w_err.shape)))
        else:
            worst = ("biases", (int(np.argmax(b_err)),))
        checks.append(LayerCheck(index + 1, layer.describe(), float(w_err.max()), float(b_err.max()), worst))
    return GradcheckReport(checks)


def gradcheck(net, x, target, loss, h=DEFAULT_H, n_samples=1, tolerance=DEFAULT_TOLERANCE, masks=None):
    """Compare :func:`backward` against :func:`fd_gradient` at one sample.

    Errors are relative down to :func:`resolution_floor` for ``tolerance``.
    """
    trace = forward(net, x, masks)
    analytic = backward(net, trace, target, loss, n_samples)
    numeric = fd_gradient(net, x, target, loss, h, n_samples, masks)
    floor = resolution_floor(net, x, target, loss, h, tolerance, n_samples, masks)
    return compare_gradients(net, analytic, numeric, floor)
