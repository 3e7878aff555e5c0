"""Stochastic gradient training.

Schemes:
  full_batch               every step uses all N points, in index order
  single_with_replacement  one point drawn uniformly per step, N steps per epoch
  epoch_shuffle            one point per step from a fresh permutation each epoch
  mini_batch               m points per step; i.i.d. draws with replacement, or
                           consecutive chunks of a per-epoch permutation without

The update is p <- p - eta * g without momentum and v <- mu v - eta g,
p <- p + v with it. Dropout zeroes hidden outputs during training steps only.
"""
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .backprop import backward
from .errors import ConfigError, DivergenceError, DomainError, ShapeError
from .loss import dataset_cost, target_of
from .network import forward
from .rng import make_stream

FULL_BATCH = "full_batch"
SINGLE_WITH_REPLACEMENT = "single_with_replacement"
EPOCH_SHUFFLE = "epoch_shuffle"
MINI_BATCH = "mini_batch"
SCHEMES = (FULL_BATCH, SINGLE_WITH_REPLACEMENT, EPOCH_SHUFFLE, MINI_BATCH)

STEP = "step"
EPOCH = "epoch"


@dataclass(frozen=True)
class TrainConfig:
    scheme: str = SINGLE_WITH_REPLACEMENT
    batch_size: int = 1
    with_replacement: bool = False
    lr_schedule: Tuple[Tuple[int, float], ...] = ((1, 0.05),)  # (length, eta) segments
    schedule_unit: str = STEP
    momentum: float = 0.0
    dropout: Tuple[float, ...] = ()  # drop probability per layer, empty disables
    dropout_rescale: bool = True
    niter: int = 0
    epochs: int = 0  # takes precedence over niter when positive
    seed: int = 1
    cost_log_stride: int = 1
    patience: int = 0
    record_samples: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError("train.scheme", f"expected one of {', '.join(SCHEMES)}, got '{self.scheme}'")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size", f"must be >= 1, got {self.batch_size}")
        if not self.lr_schedule:
            raise ConfigError("train.lr_schedule", "needs at least one [length, eta] segment")
        for segment in self.lr_schedule:
            if len(segment) != 2:
                raise ConfigError("train.lr_schedule", f"segment {list(segment)} is not [length, eta]")
            length, eta = segment
            if length < 1:
                raise ConfigError("train.lr_schedule", f"segment length must be >= 1, got {length}")
            if not eta > 0:
                raise ConfigError("train.lr_schedule", f"learning rate must be positive, got {eta}")
        if self.schedule_unit not in (STEP, EPOCH):
            raise ConfigError("train.schedule_unit", f"expected '{STEP}' or '{EPOCH}', got '{self.schedule_unit}'")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("train.momentum", f"must lie in [0, 1), got {self.momentum}")
        for p in self.dropout:
            if not 0.0 <= p < 1.0:
                raise ConfigError("train.dropout", f"drop probabilities must lie in [0, 1), got {p}")
        if self.niter < 0 or self.epochs < 0:
            raise ConfigError("train.niter", "step and epoch budgets must be >= 0")
        if self.cost_log_stride < 1:
            raise ConfigError("train.cost_log_stride", f"must be >= 1, got {self.cost_log_stride}")
        if self.patience < 0:
            raise ConfigError("train.patience", f"must be >= 0, got {self.patience}")

    def steps_per_epoch(self, n):
        if self.scheme == FULL_BATCH:
            return 1
        if self.scheme == MINI_BATCH:
            return math.ceil(n / self.batch_size)
        return n

    def total_steps(self, n):
        if self.epochs > 0:
            return self.epochs * self.steps_per_epoch(n)
        return self.niter


@dataclass
class CostEntry:
    step: int
    train_cost: float
    val_cost: Optional[float] = None


@dataclass
class TrainReport:
    cost_history: List[CostEntry]
    final_net: object
    steps_taken: int
    sample_indices: Optional[List[int]] = None
    stopped_early: bool = False

    @property
    def final_cost(self):
        return self.cost_history[-1].train_cost


def learning_rate(schedule, unit, step, epoch):
    """Eta for a 0-based step or epoch. The last segment's eta persists past the schedule."""
    position = step if unit == STEP else epoch
    end = 0
    for length, eta in schedule:
        end += length
        if position < end:
            return float(eta)
    return float(schedule[-1][1])


def apply_dropout(a, p_drop, rng):
    """Zero each component of ``a`` with probability ``p_drop``. Returns (masked, mask)."""
    if not 0.0 <= p_drop < 1.0:
        raise ConfigError("train.dropout", f"drop probabilities must lie in [0, 1), got {p_drop}")
    if p_drop == 0.0:
        return a.copy(), np.ones_like(a)
    mask = (rng.random(a.shape) >= p_drop).astype(np.float64)
    return a * mask, mask


def dropout_masks(net, probs, rng):
    """One mask per layer output (None where the drop probability is 0)."""
    masks = []
    for index, p in enumerate(probs):
        if p == 0.0:
            masks.append(None)
        else:
            size = int(np.prod(net.shapes[index + 1]))
            _, mask = apply_dropout(np.ones(size), p, rng)
            masks.append(mask)
    return masks


def _check_dropout(net, probs):
    if not probs:
        return
    if len(probs) != len(net.layers):
        raise ConfigError("train.dropout", f"needs one probability per layer ({len(net.layers)}), got {len(probs)}")
    if probs[-1] != 0.0:
        raise ConfigError("train.dropout", "the output layer cannot be dropped")


def scale_for_inference(net, probs):
    """Multiply the weights fed by each dropped layer by its keep probability (1 - p)."""
    _check_dropout(net, probs)
    layers = list(net.layers)
    for index, p in enumerate(probs):
        if p == 0.0:
            continue
        consumer = next((j for j in range(index + 1, len(layers)) if layers[j].has_params), None)
        if consumer is None:
            raise ConfigError("train.dropout", f"layer {index + 1} is dropped but no later layer has weights")
        layer = layers[consumer]
        layers[consumer] = layer.with_params(layer.weights * (1.0 - p), layer.biases)
    return net.with_layers(layers)


def batch_gradient(net, inputs, targets, loss, n_samples=1, masks=None):
    """Average of the per-sample gradients, accumulated in the given order."""
    if len(inputs) == 0:
        raise DomainError("cannot take a gradient step on an empty batch")
    if len(inputs) != len(targets):
        raise ShapeError(f"{len(inputs)} inputs but {len(targets)} targets")
    total = None
    for k, (x, y) in enumerate(zip(inputs, targets)):
        trace = forward(net, x, None if masks is None else masks[k])
        grad = backward(net, trace, y, loss, n_samples)
        total = grad if total is None else total.add(grad)
    if len(inputs) == 1:
        return total
    return total.scaled(1.0 / len(inputs))


def sgd_step(net, inputs, targets, loss, eta, momentum=0.0, velocity=None, n_samples=1, masks=None):
    """One update from the (averaged) gradient over ``inputs``. Returns (net, velocity)."""
    if not eta > 0:
        raise ConfigError("train.lr_schedule", f"learning rate must be positive, got {eta}")
    grad = batch_gradient(net, inputs, targets, loss, n_samples, masks)
    if momentum > 0.0 and velocity is not None:
        velocity = velocity.scaled(momentum).add(grad, -eta)
    else:
        velocity = grad.scaled(-eta)
    layers = []
    for layer, vw, vb in zip(net.layers, velocity.weight_grads, velocity.bias_grads):
        if layer.has_params:
            if vw.shape != layer.weights.shape or vb.shape != layer.biases.shape:
                raise ShapeError(f"gradient does not match the parameters of '{layer.describe()}'")
            layer = layer.with_params(layer.weights + vw, layer.biases + vb)
        layers.append(layer)
    return net.with_layers(layers), velocity


def _index_batches(config, n, rng):
    """Endless stream of index batches under the configured scheme."""
    while True:
        if config.scheme == FULL_BATCH:
            yield list(range(n))
        elif config.scheme == SINGLE_WITH_REPLACEMENT:
            for _ in range(n):
                yield [int(rng.integers(n))]
        elif config.scheme == EPOCH_SHUFFLE:
            for i in rng.permutation(n):
                yield [int(i)]
        elif config.with_replacement:
            for _ in range(config.steps_per_epoch(n)):
                yield [int(i) for i in rng.integers(n, size=config.batch_size)]
        else:
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                yield [int(i) for i in order[start:start + config.batch_size]]


def _write_entry(log, entry, eta):
    if log is None:
        return
    log.write(f"---- Step {entry.step} ----\n")
    log.write(f"Train Cost: {entry.train_cost:.10g}\n")
    if entry.val_cost is not None:
        log.write(f"Validation Cost: {entry.val_cost:.10g}\n")
    log.write(f"Learning Rate: {eta:g}\n\n")


def train(net, train_data, val_data, loss, config, log=None):
    """Run the training loop: pick samples, forward, backward, update.

    ``val_data`` may be None or empty. Training cost is logged every
    ``cost_log_stride`` steps. With validation data every epoch end is logged
    too, with the validation cost. ``log`` is an open text file for the per-step log.
    """
    n = len(train_data)
    if n == 0:
        raise DomainError("training set is empty")
    if train_data.inputs.shape[1] != net.input_dim:
        raise ShapeError(f"training inputs have {train_data.inputs.shape[1]} features, network expects {net.input_dim}")
    if config.scheme == MINI_BATCH and config.batch_size > n:
        raise ConfigError("train.batch_size", f"batch size {config.batch_size} exceeds the {n} training points")
    _check_dropout(net, config.dropout)
    use_val = val_data is not None and len(val_data) > 0
    dropping = any(p > 0 for p in config.dropout)

    sampling_rng = make_stream(config.seed, "sampling")
    dropout_rng = make_stream(config.seed, "dropout")
    batches = _index_batches(config, n, sampling_rng)
    per_epoch = config.steps_per_epoch(n)
    total = config.total_steps(n)

    def entry_at(step, with_val):
        cost = dataset_cost(loss, net, train_data)
        if not math.isfinite(cost):
            raise DivergenceError(f"training cost became {cost} at step {step}")
        val = dataset_cost(loss, net, val_data) if with_val else None
        return CostEntry(step, cost, val)

    history = [entry_at(0, use_val)]
    _write_entry(log, history[0], learning_rate(config.lr_schedule, config.schedule_unit, 0, 0))
    samples = [] if config.record_samples else None
    velocity = None
    best_val, stale, stopped = math.inf, 0, False
    step = 0
    while step < total:
        epoch = step // per_epoch
        eta = learning_rate(config.lr_schedule, config.schedule_unit, step, epoch)
        batch = next(batches)
        if samples is not None:
            samples.extend(batch)
        inputs = train_data.inputs[batch]
        targets = [target_of(loss, train_data, i) for i in batch]
        masks = [dropout_masks(net, config.dropout, dropout_rng) for _ in batch] if dropping else None
        net, velocity = sgd_step(net, inputs, targets, loss, eta, config.momentum, velocity, n, masks)
        step += 1

        epoch_end = step % per_epoch == 0
        if step % config.cost_log_stride == 0 or (use_val and epoch_end):
            history.append(entry_at(step, use_val and epoch_end))
            _write_entry(log, history[-1], eta)
        if use_val and epoch_end and config.patience > 0:
            val = history[-1].val_cost
            if val < best_val:
                best_val, stale = val, 0
            else:
                stale += 1
            if stale >= config.patience:
                stopped = True
                break

    if history[-1].step != step:
        history.append(entry_at(step, use_val))
        _write_entry(log, history[-1], learning_rate(config.lr_schedule, config.schedule_unit, step, step // per_epoch))
    if dropping and config.dropout_rescale:
        net = scale_for_inference(net, config.dropout)
    return TrainReport(history, net, step, samples, stopped)
