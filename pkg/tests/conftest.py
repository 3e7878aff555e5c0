import numpy as np
import pytest

from datasets.toy import toy_dataset
from gradforge import activation as act
from gradforge.network import DenseLayer, NetworkSpec, init_params

TOY_LAYERS = ["dense 2 sigmoid", "dense 3 sigmoid", "dense 2 sigmoid"]


@pytest.fixture
def toy_net():
    """The 2-2-3-2 sigmoid network with seeded N(0, 1) parameters."""
    return init_params(NetworkSpec.from_descriptions((2,), TOY_LAYERS), seed=1)


@pytest.fixture
def toy_data():
    return toy_dataset()


@pytest.fixture
def conv_net():
    """6x6x2 input -> conv -> max pool -> conv (relu) -> dense."""
    net = NetworkSpec.from_descriptions((6, 6, 2), [
        "conv 3 3 2 3 1 1 sigmoid",
        "pool max 2 2",
        "conv 2 2 3 4 1 0 relu",
        "dense 3 identity",
    ])
    return init_params(net, seed=7)


@pytest.fixture
def make_dense_net():
    """Factory for dense nets with standard normal parameters; ``widths`` includes the input width."""

    def make(rng, widths, kinds):
        layers = [DenseLayer(rng.standard_normal((widths[i + 1], widths[i])), rng.standard_normal(widths[i + 1]), kinds[i])
                  for i in range(len(kinds))]
        return NetworkSpec((widths[0],), layers)
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def linear_net():
    """A single identity neuron a = w x + b with w = 1, b = 0."""
    return NetworkSpec((1,), [DenseLayer(np.array([[1.0]]), np.array([0.0]), act.Identity)])
