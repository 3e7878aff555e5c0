"""Long training runs. Deselected by default; run with ``pytest -m slow``."""
import numpy as np
import pytest

from datasets.toy import toy_dataset
from datasets.toy_images import toy_images
from gradforge.loss import Quadratic, SoftmaxLogLoss, dataset_cost, scaled_cost
from gradforge.network import NetworkSpec, init_params
from gradforge.optimize import MINI_BATCH, SINGLE_WITH_REPLACEMENT, TrainConfig, batch_gradient, train

TOY_LAYERS = ["dense 2 sigmoid", "dense 3 sigmoid", "dense 2 sigmoid"]

# configs/cnn_smoke.yaml
SMOKE_LAYERS = [
    "conv 5 5 3 8 1 2 identity",
    "pool max 2 2 relu",
    "conv 5 5 8 8 1 2 relu",
    "pool avg 2 2",
    "conv 5 5 8 16 1 2 relu",
    "pool avg 2 2",
    "conv 4 4 16 16 1 0 relu",
    "dense 10 identity",
]


@pytest.mark.slow
def test_toy_problem_over_ten_seeds():
    data = toy_dataset()
    spec = NetworkSpec.from_descriptions((2,), TOY_LAYERS)
    finals = []
    for seed in range(1, 11):
        config = TrainConfig(scheme=SINGLE_WITH_REPLACEMENT, lr_schedule=((1, 0.05),), niter=1000000, seed=seed,
                             cost_log_stride=100000)
        report = train(init_params(spec, seed), data, None, Quadratic, config)
        finals.append(scaled_cost(report.final_net, data))
    finals = np.array(finals)
    assert np.sum(finals < 1e-2) >= 8, finals
    assert np.sum(finals < 5e-3) >= 5, finals


@pytest.mark.slow
def test_block_network_halves_training_cost():
    data = toy_images(500, seed=1, size=32, classes=10)
    net = init_params(NetworkSpec.from_descriptions(data.input_shape, SMOKE_LAYERS), seed=1)
    initial = dataset_cost(SoftmaxLogLoss, net, data)

    # Standard normal weights give logits in the thousands; size the rate from the first batch.
    g = batch_gradient(net, data.inputs[:50], list(data.labels[:50]), SoftmaxLogLoss).flatten()
    eta = 0.1 * initial / float(g @ g)
    config = TrainConfig(scheme=MINI_BATCH, batch_size=50, epochs=20, schedule_unit="epoch",
                         lr_schedule=((5, eta), (5, eta / 10), (10, eta / 100)), seed=1, cost_log_stride=50)
    report = train(net, data, None, SoftmaxLogLoss, config)
    assert report.final_cost <= 0.5 * initial
