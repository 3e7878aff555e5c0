"""Layer stack, parameters, forward pass and model files.

The input layer is not a layer object: a network is its ``input_shape`` plus
an ordered tuple of dense, conv and pool layers. Activations travel between
layers as flat vectors; conv and pool layers reshape them with the shape
inferred for their input.
"""
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from . import activation as act
from .conv import AVG, MAX, ConvLayer, PoolLayer
from .errors import ParseError, ShapeError
from .linalg import as_matrix, as_vector, matvec, outer, transpose_matvec
from .rng import PRNG_NAME, make_stream

MODEL_MAGIC = "GRADFORGE"
MODEL_VERSION = "v1"


@dataclass(frozen=True, eq=False)
class DenseLayer:
    weights: np.ndarray  # (n_l, n_{l-1})
    biases: np.ndarray  # (n_l,)
    activation: act.ActivationKind = act.Sigmoid

    kind = "dense"
    has_params = True

    def __post_init__(self):
        object.__setattr__(self, "weights", as_matrix(self.weights, "dense weights"))
        object.__setattr__(self, "biases", as_vector(self.biases, "dense biases"))
        if self.weights.shape[0] != self.biases.shape[0]:
            raise ShapeError(f"dense layer has {self.weights.shape[0]} weight rows but {self.biases.shape[0]} biases")

    def with_params(self, weights, biases):
        return replace(self, weights=weights, biases=biases)

    def output_shape(self, in_shape):
        n_in = math.prod(in_shape)
        if self.weights.shape[1] != n_in:
            raise ShapeError(f"dense layer expects {self.weights.shape[1]} inputs, previous layer gives {n_in}")
        return (self.weights.shape[0],)

    def describe(self):
        return f"dense {self.weights.shape[0]} {self.weights.shape[1]} {self.activation}"

    def weighted_input(self, a_prev, in_shape):
        return matvec(self.weights, a_prev) + self.biases, None

    def weighted_input_many(self, a_prev, in_shape):
        return a_prev @ self.weights.T + self.biases

    def backward(self, delta, a_prev, in_shape, cache):
        return transpose_matvec(self.weights, delta), outer(delta, a_prev), delta.copy()


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    input_shape: tuple
    layers: tuple
    shapes: tuple = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(n) for n in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ShapeError("a network needs at least one layer")
        if not self.input_shape or min(self.input_shape) < 1:
            raise ShapeError(f"input shape must be positive, got {self.input_shape}")
        shapes = [self.input_shape]
        for index, layer in enumerate(self.layers):
            try:
                shapes.append(tuple(layer.output_shape(shapes[-1])))
            except ShapeError as e:
                raise ShapeError(f"layer {index + 1} ({layer.describe()}): {e}") from None
        object.__setattr__(self, "shapes", tuple(shapes))

    @property
    def input_dim(self):
        return math.prod(self.input_shape)

    @property
    def output_dim(self):
        return math.prod(self.shapes[-1])

    def input_shape_of(self, index):
        return self.shapes[index]

    def with_layers(self, layers):
        return NetworkSpec(self.input_shape, tuple(layers))

    @classmethod
    def from_descriptions(cls, input_shape, descriptions):
        """Build a zero-parameter network from layer description strings."""
        shape = tuple(int(n) for n in input_shape)
        layers = []
        for text in descriptions:
            layer = parse_layer(text, shape)
            shape = tuple(layer.output_shape(shape))
            layers.append(layer)
        return cls(tuple(input_shape), tuple(layers))


def parse_layer(text, in_shape):
    """Parse ``dense n_out act``, ``conv fh fw in out stride pad act`` or ``pool max|avg window stride [act]``."""
    parts = text.split()
    if not parts:
        raise ShapeError("empty layer description")
    kind, args = parts[0].lower(), parts[1:]
    try:
        if kind == "dense" and len(args) == 2:
            n_out = int(args[0])
            n_in = math.prod(in_shape)
            return DenseLayer(np.zeros((n_out, n_in)), np.zeros(n_out), act.ActivationKind.parse(args[1]))
        if kind == "conv" and len(args) == 7:
            fh, fw, cin, cout, stride, pad = (int(a) for a in args[:6])
            return ConvLayer(np.zeros((fh, fw, cin, cout)), np.zeros(cout), stride, pad,
                             act.ActivationKind.parse(args[6]))
        if kind == "pool" and len(args) in (3, 4):
            mode = args[0].lower()
            activation = act.ActivationKind.parse(args[3]) if len(args) == 4 else act.Identity
            return PoolLayer(mode, int(args[1]), int(args[2]), activation)
    except ValueError as e:
        if isinstance(e, ShapeError):
            raise
        raise ShapeError(f"bad layer description '{text}': {e}") from None
    raise ShapeError(f"bad layer description '{text}'")


@dataclass
class ForwardTrace:
    """Everything one forward pass computed.

    ``activations[0]`` is the input and ``activations[l + 1]`` the output of
    ``layers[l]``, whose weighted input is ``weighted_inputs[l]``.
    """
    activations: List[np.ndarray]
    weighted_inputs: List[np.ndarray]
    kinds: List[act.ActivationKind]
    caches: list
    masks: Optional[list] = None

    @property
    def output(self):
        return self.activations[-1]


def forward(net, x, masks=None):
    """Feed ``x`` through the network, recording a and z at every layer.

    ``masks`` optionally holds one dropout mask (or None) per layer; a mask
    multiplies that layer's output.
    """
    x = as_vector(x, "input")
    if x.shape[0] != net.input_dim:
        raise ShapeError(f"input has {x.shape[0]} components, network expects {net.input_dim}")
    activations, weighted, kinds, caches = [x], [], [], []
    a = x
    for index, layer in enumerate(net.layers):
        z, cache = layer.weighted_input(a, net.shapes[index])
        a = act.apply(layer.activation, z)
        if masks is not None and masks[index] is not None:
            a = a * masks[index]
        activations.append(a)
        weighted.append(z)
        kinds.append(layer.activation)
        caches.append(cache)
    return ForwardTrace(activations, weighted, kinds, caches, masks)


def forward_many(net, inputs):
    """Outputs for a batch of inputs given as the rows of ``inputs``."""
    a = np.asarray(inputs, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.input_dim:
        raise ShapeError(f"inputs have shape {a.shape}, network expects rows of length {net.input_dim}")
    for index, layer in enumerate(net.layers):
        a = act.apply(layer.activation, layer.weighted_input_many(a, net.shapes[index]))
    return a


def predict_class(net, x):
    """Index of the largest output; the lowest index wins ties."""
    return int(np.argmax(forward(net, x).output))


def predict_classes(net, inputs):
    return np.argmax(forward_many(net, inputs), axis=1)


def param_count(net):
    return sum(layer.weights.size + layer.biases.size for layer in net.layers if layer.has_params)


def infer_shapes(net):
    """Output shape of every layer, input first."""
    return list(net.shapes)


def init_params(net, seed):
    """Redraw every weight and bias i.i.d. N(0, 1) from the seed's init stream."""
    rng = make_stream(seed, "init")
    layers = []
    for layer in net.layers:
        if layer.has_params:
            weights = rng.standard_normal(layer.weights.shape)
            biases = rng.standard_normal(layer.biases.shape)
            layer = layer.with_params(weights, biases)
        layers.append(layer)
    return net.with_layers(layers)


def flatten_params(net):
    """All parameters as one vector, layer by layer, weights (row-major) before biases."""
    chunks = []
    for layer in net.layers:
        if layer.has_params:
            chunks.append(layer.weights.reshape(-1))
            chunks.append(layer.biases)
    return np.concatenate(chunks) if chunks else np.zeros(0)


def unflatten_params(net, theta):
    """Inverse of :func:`flatten_params`."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (param_count(net),):
        raise ShapeError(f"parameter vector has shape {theta.shape}, network has {param_count(net)} parameters")
    layers, offset = [], 0
    for layer in net.layers:
        if layer.has_params:
            nw, nb = layer.weights.size, layer.biases.size
            weights = theta[offset:offset + nw].reshape(layer.weights.shape)
            biases = theta[offset + nw:offset + nw + nb].copy()
            offset += nw + nb
            layer = layer.with_params(weights.copy(), biases)
        layers.append(layer)
    return net.with_layers(layers)


def _fmt(values):
    return " ".join(format(float(v), ".17g") for v in values)


def dumps_model(net):
    lines = [f"{MODEL_MAGIC} {MODEL_VERSION} {PRNG_NAME}",
             "input " + " ".join(str(n) for n in net.input_shape)]
    for layer in net.layers:
        lines.append("layer " + layer.describe())
        if layer.has_params:
            lines.append("weights")
            rows = layer.weights.reshape(-1, layer.weights.shape[-1])
            lines.extend(_fmt(row) for row in rows)
            lines.append("biases")
            lines.append(_fmt(layer.biases))
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_model(net, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_model(net))


def loads_model(text, path="<string>"):
    lines = text.splitlines()
    cursor = [0]

    def take():
        if cursor[0] >= len(lines):
            raise ParseError(path, len(lines), "unexpected end of model file")
        cursor[0] += 1
        return cursor[0], lines[cursor[0] - 1].strip()

    def floats(lineno, line, count):
        try:
            values = [float(v) for v in line.split()]
        except ValueError:
            raise ParseError(path, lineno, f"expected numbers, got '{line}'") from None
        if len(values) != count:
            raise ParseError(path, lineno, f"expected {count} values, got {len(values)}")
        return values

    lineno, header = take()
    parts = header.split()
    if len(parts) != 3 or parts[0] != MODEL_MAGIC or parts[1] != MODEL_VERSION:
        raise ParseError(path, lineno, f"not a {MODEL_MAGIC} {MODEL_VERSION} model file")
    lineno, line = take()
    if not line.startswith("input "):
        raise ParseError(path, lineno, "expected 'input <shape>'")
    try:
        shape = tuple(int(n) for n in line.split()[1:])
    except ValueError:
        raise ParseError(path, lineno, f"bad input shape '{line}'") from None

    layers = []
    while True:
        lineno, line = take()
        if line == "end":
            break
        if not line.startswith("layer "):
            raise ParseError(path, lineno, f"expected 'layer ...' or 'end', got '{line}'")
        words = line.split()[1:]
        try:
            layer = _layer_from_header(words)
        except (ValueError, IndexError) as e:
            raise ParseError(path, lineno, f"bad layer header: {e}") from None
        if layer.has_params:
            lineno, line = take()
            if line != "weights":
                raise ParseError(path, lineno, "expected 'weights'")
            n_rows = layer.weights.size // layer.weights.shape[-1]
            rows = [floats(*take(), layer.weights.shape[-1]) for _ in range(n_rows)]
            lineno, line = take()
            if line != "biases":
                raise ParseError(path, lineno, "expected 'biases'")
            biases = floats(*take(), layer.biases.size)
            layer = layer.with_params(np.array(rows).reshape(layer.weights.shape), np.array(biases))
        layers.append(layer)
    try:
        return NetworkSpec(shape, tuple(layers))
    except ShapeError as e:
        raise ParseError(path, lineno, str(e)) from None


def _layer_from_header(words):
    kind = words[0]
    if kind == "dense":
        rows, cols = int(words[1]), int(words[2])
        return DenseLayer(np.zeros((rows, cols)), np.zeros(rows), act.ActivationKind.parse(words[3]))
    if kind == "conv":
        fh, fw, cin, cout, stride, pad = (int(w) for w in words[1:7])
        return ConvLayer(np.zeros((fh, fw, cin, cout)), np.zeros(cout), stride, pad,
                         act.ActivationKind.parse(words[7]))
    if kind == "pool":
        if words[1] not in (MAX, AVG):
            raise ValueError(f"unknown pool mode '{words[1]}'")
        return PoolLayer(words[1], int(words[2]), int(words[3]), act.ActivationKind.parse(words[4]))
    raise ValueError(f"unknown layer kind '{kind}'")


def load_model(path):
    with open(path, "r", encoding="utf-8") as f:
        return loads_model(f.read(), path)
