"""Convolution and pooling.

Two conventions live here. ``conv1d`` follows the convolution sum
``y_k = sum_n x_n g_{k-n}`` with the filter list read as
``filter[j] = g_{-j}``; that makes row ``k`` of its matrix the filter itself,
shifted right by ``k * stride`` (so ``[1, -1]`` takes forward differences
``x_k - x_{k+1}``). Against a textbook flipped convolution the filter is
reversed: ``conv1d(x, f) == np.convolve(x, f[::-1], 'valid')`` for unit
stride and no padding.

The 2-D layers use cross-correlation, the usual CNN convention:
``out(r, c, o) = b_o + sum_{i, j, ch} F(i, j, ch, o) * X(r*s + i, c*s + j, ch)``
over the zero-padded input ``X``.

Tensors are ``(height, width, channels)`` float64 arrays in C order, so a
flattened tensor is the ``(row, col, channel)`` ordering the dense layers see.
"""
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.linalg import toeplitz

from . import activation as act
from .errors import ShapeError

MAX = "max"
AVG = "avg"


def conv_output_length(n, f, stride, pad):
    """floor((n + 2 pad - f) / stride) + 1, or a ShapeError when that is < 1."""
    if stride < 1 or pad < 0:
        raise ShapeError(f"stride must be >= 1 and pad >= 0, got stride={stride}, pad={pad}")
    span = n + 2 * pad - f
    if span < 0:
        raise ShapeError(f"filter of size {f} does not fit input of size {n} with padding {pad}")
    return span // stride + 1


def _pad_pair(pad):
    if isinstance(pad, (tuple, list)):
        before, after = (int(p) for p in pad)
    else:
        before = after = int(pad)
    if before < 0 or after < 0:
        raise ShapeError(f"padding must be nonnegative, got {pad}")
    return before, after


def conv1d(x, filt, stride=1, pad=0):
    """1-D convolution of ``x`` with ``filt`` (see module docstring for the convention).

    ``pad`` is either a count of zeros added at both ends or a
    ``(before, after)`` pair.
    """
    x = np.asarray(x, dtype=np.float64)
    filt = np.asarray(filt, dtype=np.float64)
    before, after = _pad_pair(pad)
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    xp = np.pad(x, (before, after))
    if filt.size == 0 or filt.size > xp.size:
        raise ShapeError(f"filter of length {filt.size} is longer than padded input of length {xp.size}")
    windows = sliding_window_view(xp, filt.size)[::stride]
    return windows @ filt


def conv1d_as_matrix(input_len, filt, stride=1, pad=0, padded=True):
    """Banded matrix ``M`` with ``M @ np.pad(x, pad) == conv1d(x, filt, stride, pad)``.

    The unit-stride operator is Toeplitz; striding keeps every ``stride``-th
    row. With ``padded=False`` the columns that only ever meet padding zeros
    are dropped, so ``M @ x == conv1d(x, ...)`` directly.
    """
    filt = np.asarray(filt, dtype=np.float64)
    before, after = _pad_pair(pad)
    n = input_len + before + after
    q = filt.size
    if q == 0 or q > n:
        raise ShapeError(f"filter of length {q} is longer than padded input of length {n}")
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    first_col = np.zeros(n - q + 1)
    first_col[0] = filt[0]
    first_row = np.zeros(n)
    first_row[:q] = filt
    matrix = toeplitz(first_col, first_row)[::stride]
    if not padded:
        matrix = matrix[:, before:before + input_len]
    return np.ascontiguousarray(matrix)


@dataclass(frozen=True, eq=False)
class ConvLayer:
    filters: np.ndarray  # (fh, fw, in_channels, out_channels)
    biases: np.ndarray  # (out_channels,)
    stride: int = 1
    pad: int = 0
    activation: act.ActivationKind = act.Identity

    kind = "conv"
    has_params = True

    def __post_init__(self):
        if self.filters.ndim != 4:
            raise ShapeError(f"conv filters must be a 4-way array, got shape {self.filters.shape}")
        if self.biases.shape != (self.filters.shape[3],):
            raise ShapeError(f"conv biases have shape {self.biases.shape}, expected ({self.filters.shape[3]},)")
        if self.stride < 1 or self.pad < 0:
            raise ShapeError(f"conv stride must be >= 1 and pad >= 0, got {self.stride}, {self.pad}")

    @property
    def weights(self):
        return self.filters

    def with_params(self, weights, biases):
        return replace(self, filters=weights, biases=biases)

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"conv layer needs a (height, width, channels) input, got {in_shape}")
        fh, fw, cin, cout = self.filters.shape
        h, w, c = in_shape
        if c != cin:
            raise ShapeError(f"conv layer expects {cin} input channels, got {c}")
        return (conv_output_length(h, fh, self.stride, self.pad),
                conv_output_length(w, fw, self.stride, self.pad), cout)

    def describe(self):
        fh, fw, cin, cout = self.filters.shape
        return f"conv {fh} {fw} {cin} {cout} {self.stride} {self.pad} {self.activation}"

    def weighted_input(self, a_prev, in_shape):
        z = _conv_weighted(self, a_prev.reshape(in_shape))
        return z.reshape(-1), None

    def weighted_input_many(self, a_prev, in_shape):
        z = _conv_weighted(self, a_prev.reshape((a_prev.shape[0],) + tuple(in_shape)))
        return z.reshape(a_prev.shape[0], -1)

    def backward(self, delta, a_prev, in_shape, cache):
        out_shape = self.output_shape(in_shape)
        dx, gw, gb = conv_backward(self, a_prev.reshape(in_shape), delta.reshape(out_shape))
        return dx.reshape(-1), gw, gb


def _pad_spatial(x, pad):
    if pad == 0:
        return x
    widths = [(0, 0)] * (x.ndim - 3) + [(pad, pad), (pad, pad), (0, 0)]
    return np.pad(x, widths)


def _conv_weighted(layer, x):
    """Weighted input of a conv layer for one tensor or a leading batch of them."""
    fh, fw, cin, cout = layer.filters.shape
    h, w, c = x.shape[-3:]
    if c != cin:
        raise ShapeError(f"conv layer expects {cin} input channels, got {c}")
    s = layer.stride
    ho = conv_output_length(h, fh, s, layer.pad)
    wo = conv_output_length(w, fw, s, layer.pad)
    xp = _pad_spatial(x, layer.pad)
    z = np.empty(x.shape[:-3] + (ho, wo, cout))
    z[...] = layer.biases
    for i in range(fh):
        for j in range(fw):
            patch = xp[..., i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s, :]
            z += patch @ layer.filters[i, j]
    return z


def conv2d_forward(layer, x):
    """Apply the conv layer (weighted input, then activation) to one tensor."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"conv2d_forward needs a (height, width, channels) tensor, got shape {x.shape}")
    return act.apply(layer.activation, _conv_weighted(layer, x))


def conv_backward(layer, x, delta):
    """Jacobian-transpose action of a conv layer's weighted input.

    ``x`` is the forward input tensor and ``delta`` the sensitivity of the
    cost to the layer's weighted input. Returns the input delta (before the
    previous layer's derivative is applied), the filter gradient and the
    bias gradient.
    """
    fh, fw, cin, cout = layer.filters.shape
    h, w, _ = x.shape
    s, p = layer.stride, layer.pad
    if delta.shape != layer.output_shape(x.shape):
        raise ShapeError(f"conv delta has shape {delta.shape}, expected {layer.output_shape(x.shape)}")
    ho, wo, _ = delta.shape
    xp = _pad_spatial(x, p)
    dxp = np.zeros_like(xp)
    grad_filters = np.zeros_like(layer.filters)
    delta_rows = delta.reshape(-1, cout)
    for i in range(fh):
        for j in range(fw):
            rows = slice(i, i + s * (ho - 1) + 1, s)
            cols = slice(j, j + s * (wo - 1) + 1, s)
            grad_filters[i, j] = xp[rows, cols, :].reshape(-1, cin).T @ delta_rows
            dxp[rows, cols, :] += delta @ layer.filters[i, j].T
    grad_biases = delta_rows.sum(axis=0)
    return dxp[p:p + h, p:p + w, :], grad_filters, grad_biases


def conv2d_as_matrix(layer, in_shape):
    """Dense matrix of the conv layer's linear part acting on the flattened, unpadded input."""
    fh, fw, cin, cout = layer.filters.shape
    h, w, _ = in_shape
    ho, wo, _ = layer.output_shape(in_shape)
    s, p = layer.stride, layer.pad
    matrix = np.zeros((ho * wo * cout, h * w * cin))
    for r in range(ho):
        for c in range(wo):
            out0 = (r * wo + c) * cout
            for i in range(fh):
                for j in range(fw):
                    row, col = r * s + i - p, c * s + j - p
                    if 0 <= row < h and 0 <= col < w:
                        in0 = (row * w + col) * cin
                        matrix[out0:out0 + cout, in0:in0 + cin] += layer.filters[i, j].T
    return matrix


@dataclass
class PoolTrace:
    in_shape: tuple
    rows: Optional[np.ndarray] = None  # argmax input row per output entry, max pooling only
    cols: Optional[np.ndarray] = None


@dataclass(frozen=True)
class PoolLayer:
    mode: str = MAX
    window: int = 2
    stride: int = 2
    activation: act.ActivationKind = act.Identity

    kind = "pool"
    has_params = False

    def __post_init__(self):
        if self.mode not in (MAX, AVG):
            raise ShapeError(f"pool mode must be '{MAX}' or '{AVG}', got '{self.mode}'")
        if self.window < 1 or self.stride < 1:
            raise ShapeError(f"pool window and stride must be >= 1, got {self.window}, {self.stride}")

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"pool layer needs a (height, width, channels) input, got {in_shape}")
        h, w, c = in_shape
        return (conv_output_length(h, self.window, self.stride, 0),
                conv_output_length(w, self.window, self.stride, 0), c)

    def describe(self):
        return f"pool {self.mode} {self.window} {self.stride} {self.activation}"

    def weighted_input(self, a_prev, in_shape):
        z, trace = _pool(self, a_prev.reshape(in_shape), record=True)
        return z.reshape(-1), trace

    def weighted_input_many(self, a_prev, in_shape):
        z, _ = _pool(self, a_prev.reshape((a_prev.shape[0],) + tuple(in_shape)), record=False)
        return z.reshape(a_prev.shape[0], -1)

    def backward(self, delta, a_prev, in_shape, cache):
        dx = pool_backward(self, cache, delta.reshape(self.output_shape(in_shape)))
        return dx.reshape(-1), None, None


def _windows(layer, x):
    h, w, _ = x.shape[-3:]
    ho = conv_output_length(h, layer.window, layer.stride, 0)
    wo = conv_output_length(w, layer.window, layer.stride, 0)
    win = sliding_window_view(x, (layer.window, layer.window), axis=(-3, -2))
    win = win[..., ::layer.stride, ::layer.stride, :, :, :]
    return win[..., :ho, :wo, :, :, :]


def _pool(layer, x, record):
    win = _windows(layer, x)
    if layer.mode == AVG:
        return win.mean(axis=(-2, -1)), PoolTrace(in_shape=x.shape[-3:])
    flat = win.reshape(win.shape[:-2] + (layer.window * layer.window,))
    k = np.argmax(flat, axis=-1)
    z = np.take_along_axis(flat, k[..., None], axis=-1)[..., 0]
    if not record:
        return z, None
    ho, wo, _ = z.shape
    di, dj = np.divmod(k, layer.window)
    rows = np.arange(ho)[:, None, None] * layer.stride + di
    cols = np.arange(wo)[None, :, None] * layer.stride + dj
    return z, PoolTrace(in_shape=x.shape, rows=rows, cols=cols)


def pool_forward(layer, x):
    """Pool one tensor. Returns the activated output and the trace backward needs."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"pool_forward needs a (height, width, channels) tensor, got shape {x.shape}")
    z, trace = _pool(layer, x, record=True)
    return act.apply(layer.activation, z), trace


def pool_backward(layer, trace, delta):
    """Route ``delta`` back through the pool: to the recorded argmax, or spread evenly."""
    expected = layer.output_shape(trace.in_shape)
    if delta.shape != expected:
        raise ShapeError(f"pool delta has shape {delta.shape}, expected {expected}")
    dx = np.zeros(trace.in_shape)
    ho, wo, c = delta.shape
    if layer.mode == MAX:
        channels = np.broadcast_to(np.arange(c), delta.shape)
        np.add.at(dx, (trace.rows, trace.cols, channels), delta)
        return dx
    share = delta / (layer.window * layer.window)
    s = layer.stride
    for i in range(layer.window):
        for j in range(layer.window):
            dx[i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s, :] += share
    return dx


def pool_as_matrix(layer, in_shape):
    """Dense matrix of an average pool acting on the flattened input."""
    if layer.mode != AVG:
        raise ShapeError("only average pooling is linear")
    h, w, c = in_shape
    ho, wo, _ = layer.output_shape(in_shape)
    weight = 1.0 / (layer.window * layer.window)
    matrix = np.zeros((ho * wo * c, h * w * c))
    for r in range(ho):
        for col in range(wo):
            for ch in range(c):
                out = (r * wo + col) * c + ch
                for i in range(layer.window):
                    for j in range(layer.window):
                        matrix[out, ((r * layer.stride + i) * w + col * layer.stride + j) * c + ch] += weight
    return matrix


def pool_tie_gap(layer, x):
    """Smallest gap between the two largest entries of any max-pool window (inf for avg)."""
    if layer.mode != MAX or layer.window == 1:
        return np.inf
    win = _windows(layer, x)
    flat = np.sort(win.reshape(win.shape[:-2] + (-1,)), axis=-1)
    return float(np.min(flat[..., -1] - flat[..., -2]))
