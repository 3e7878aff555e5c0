import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from gradforge import activation as act
from gradforge.backprop import (ROUNDOFF_ULPS, GradientBundle, backward, backward_diagonal_form, backward_from_delta,
                                compare_gradients, fd_gradient, gradcheck, kink_margin, relative_error, resolution_floor)
from gradforge.errors import ShapeError
from gradforge.loss import LossKind, Quadratic, SoftmaxLogLoss, output_delta
from gradforge.network import forward
from gradforge.optimize import dropout_masks

KINDS = [act.Sigmoid, act.ReLU, act.LeakyReLU]
KINK_TOLERANCE = 1e-4


def _away_from_kinks(net, draw):
    for _ in range(100):
        x = draw()
        if kink_margin(net, forward(net, x)) > KINK_TOLERANCE:
            return x
    pytest.skip("no sample away from kinks")


def _random_case(make_dense_net, rng):
    depth = int(rng.integers(2, 5))
    widths = [int(w) for w in rng.integers(1, 7, size=depth + 1)]
    loss = LossKind(str(rng.choice(["quadratic", "softmax_log_loss"])), float(rng.choice([0.0, 0.1])))
    kinds = [KINDS[int(rng.integers(len(KINDS)))] for _ in range(depth)]
    if loss.uses_labels:
        kinds[-1] = act.Identity
    net = make_dense_net(rng, widths, kinds)
    label = int(rng.integers(widths[-1]))
    target = label if loss.uses_labels else np.eye(widths[-1])[label]
    return net, loss, target


class TestGradientOracle:

    def test_random_networks_match_finite_differences(self, make_dense_net):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(100):
            net, loss, target = _random_case(make_dense_net, rng)
            x = _away_from_kinks(net, lambda: rng.uniform(-1.0, 1.0, net.input_dim))
            n_samples = int(rng.integers(1, 20))
            worst = max(worst, gradcheck(net, x, target, loss, h=1e-6, n_samples=n_samples).max_error)
        assert worst < 1e-6

    def test_toy_network(self, toy_net):
        report = gradcheck(toy_net, np.array([0.3, 0.7]), np.array([0.0, 1.0]), Quadratic)
        assert len(report.layers) == 3
        assert report.passed(1e-6)

    @pytest.mark.parametrize("scale", [1 + 1e-5, 1 - 1e-5])
    def test_slightly_scaled_gradient_fails(self, toy_net, scale):
        x, y = np.array([0.3, 0.7]), np.array([0.0, 1.0])
        analytic = backward(toy_net, forward(toy_net, x), y, Quadratic)
        numeric = fd_gradient(toy_net, x, y, Quadratic)
        floor = resolution_floor(toy_net, x, y, Quadratic)
        assert compare_gradients(toy_net, analytic, numeric, floor).max_error < 1e-6
        assert not compare_gradients(toy_net, analytic.scaled(scale), numeric, floor).max_error < 1e-6

    @pytest.mark.parametrize("c", [100.0, 1.0 / 30.0])
    def test_gradient_scales_with_cost(self, toy_net, c):
        x, y = np.array([0.2, 0.9]), np.array([1.0, 0.0])
        trace = forward(toy_net, x)
        plain = backward(toy_net, trace, y, Quadratic)
        scaled = backward_from_delta(toy_net, trace, c * output_delta(Quadratic, trace, y))
        assert_allclose(scaled.flatten() / c, plain.flatten(), rtol=1e-10, atol=1e-13)

    @pytest.mark.parametrize("layer", [0, 1, 2])
    def test_weight_change_leaves_earlier_layers_alone(self, toy_net, layer):
        x = np.array([0.3, 0.7])
        before = forward(toy_net, x)
        layers = list(toy_net.layers)
        weights = layers[layer].weights.copy()
        weights[0, 1] += 0.5
        layers[layer] = layers[layer].with_params(weights, layers[layer].biases)
        after = forward(toy_net.with_layers(layers), x)
        for index in range(layer + 1):
            assert_array_equal(after.activations[index], before.activations[index])
        assert not np.array_equal(after.activations[layer + 1], before.activations[layer + 1])

    def test_conv_network(self, conv_net):
        rng = np.random.default_rng(3)
        x = _away_from_kinks(conv_net, lambda: rng.uniform(0.0, 1.0, conv_net.input_dim))
        report = gradcheck(conv_net, x, 2, SoftmaxLogLoss)
        assert [c.layer for c in report.layers] == [1, 3, 4]
        assert report.max_error < 1e-6

    def test_pool_layers_have_no_gradient(self, conv_net):
        grads = backward(conv_net, forward(conv_net, np.full(conv_net.input_dim, 0.5)), 0, SoftmaxLogLoss)
        assert grads.weight_grads[1] is None and grads.bias_grads[1] is None

    def test_weight_decay_term(self, toy_net):
        x, y = np.array([0.2, 0.9]), np.array([1.0, 0.0])
        plain = backward(toy_net, forward(toy_net, x), y, Quadratic, n_samples=10)
        decayed = backward(toy_net, forward(toy_net, x), y, LossKind("quadratic", 0.5), n_samples=10)
        for layer, gp, gd, bp, bd in zip(toy_net.layers, plain.weight_grads, decayed.weight_grads,
                                         plain.bias_grads, decayed.bias_grads):
            assert_allclose(gd - gp, (2 * 0.5 / 10) * layer.weights, rtol=1e-12, atol=1e-15)
            assert_array_equal(bd, bp)


class TestDiagonalForm:

    @pytest.mark.parametrize("loss", [Quadratic, LossKind("quadratic", 0.1)])
    def test_agrees_with_hadamard_recursion(self, toy_net, loss, rng):
        for _ in range(10):
            x = rng.uniform(0.0, 1.0, 2)
            trace = forward(toy_net, x)
            a = backward(toy_net, trace, np.array([1.0, 0.0]), loss, 5)
            b = backward_diagonal_form(toy_net, trace, np.array([1.0, 0.0]), loss, 5)
            assert_allclose(a.flatten(), b.flatten(), rtol=1e-12, atol=1e-15)

    def test_agrees_on_four_layer_net(self, make_dense_net, rng):
        net = make_dense_net(rng, [4, 3, 4, 5, 2], [act.Sigmoid] * 4)
        y = np.array([0.0, 1.0])
        for _ in range(10):
            trace = forward(net, rng.uniform(-1.0, 1.0, 4))
            a = backward(net, trace, y, Quadratic)
            b = backward_diagonal_form(net, trace, y, Quadratic)
            assert np.max(np.abs(a.flatten() - b.flatten())) < 1e-12

    def test_agrees_on_softmax_conv_net(self, conv_net):
        trace = forward(conv_net, np.linspace(0.0, 1.0, conv_net.input_dim))
        a = backward(conv_net, trace, 1, SoftmaxLogLoss)
        b = backward_diagonal_form(conv_net, trace, 1, SoftmaxLogLoss)
        assert_allclose(a.flatten(), b.flatten(), rtol=1e-12, atol=1e-15)


class TestDropoutMasks:

    def test_masked_coordinate_has_zero_delta(self, make_dense_net):
        rng = np.random.default_rng(11)
        net = make_dense_net(rng, [3, 6, 5, 2], [act.Sigmoid, act.Sigmoid, act.Sigmoid])
        masks = dropout_masks(net, [0.5, 0.5, 0.0], np.random.default_rng(0))
        masks[0][0] = 0.0
        trace = forward(net, np.array([0.1, 0.5, 0.9]), masks)
        grads = backward(net, trace, np.array([0.0, 1.0]), Quadratic)
        for layer in (0, 1):
            dropped = masks[layer] == 0.0
            assert np.all(grads.bias_grads[layer][dropped] == 0.0)
            assert np.all(grads.weight_grads[layer][dropped] == 0.0)

    def test_masked_gradient_matches_finite_differences(self, make_dense_net):
        rng = np.random.default_rng(12)
        net = make_dense_net(rng, [3, 6, 5, 2], [act.Sigmoid, act.LeakyReLU, act.Sigmoid])
        masks = dropout_masks(net, [0.35, 0.15, 0.0], np.random.default_rng(1))
        x = _away_from_kinks(net, lambda: rng.uniform(-1.0, 1.0, 3))
        assert gradcheck(net, x, np.array([1.0, 0.0]), Quadratic, masks=masks).max_error < 1e-6


class TestHelpers:

    def test_relative_error_floor(self):
        assert relative_error(1e-9, 2e-9) == pytest.approx(0.5)
        assert relative_error(1e-9, 2e-9, floor=1e-2) == pytest.approx(1e-7)
        assert relative_error(1.0, 1.1) == pytest.approx(0.1 / 1.1)
        assert relative_error(0.0, 0.0) == 0.0

    def test_resolution_floor(self, toy_net):
        x, y = np.array([0.3, 0.7]), np.array([0.0, 1.0])
        floor = resolution_floor(toy_net, x, y, Quadratic)
        assert floor >= ROUNDOFF_ULPS * np.finfo(np.float64).eps / 1e-12
        assert resolution_floor(toy_net, x, y, Quadratic, tolerance=1e-5) == pytest.approx(floor / 10)
        assert resolution_floor(toy_net, x, y, Quadratic, h=5e-7) == pytest.approx(2 * floor)
        with pytest.raises(ValueError):
            resolution_floor(toy_net, x, y, Quadratic, tolerance=0.0)

    def test_kink_margin(self, make_dense_net):
        rng = np.random.default_rng(5)
        sigmoid_net = make_dense_net(rng, [2, 3, 2], [act.Sigmoid, act.Sigmoid])
        assert kink_margin(sigmoid_net, forward(sigmoid_net, np.array([0.1, 0.2]))) == np.inf
        relu_net = make_dense_net(rng, [2, 3, 2], [act.ReLU, act.Sigmoid])
        trace = forward(relu_net, np.array([0.1, 0.2]))
        assert kink_margin(relu_net, trace) == pytest.approx(np.abs(trace.weighted_inputs[0]).min())

    def test_bundle_arithmetic(self, toy_net):
        g = backward(toy_net, forward(toy_net, np.array([0.5, 0.5])), np.array([0.0, 1.0]), Quadratic)
        assert_allclose(g.add(g).flatten(), g.scaled(2.0).flatten())
        assert_array_equal(GradientBundle.unflatten(toy_net, g.flatten()).flatten(), g.flatten())
        assert not GradientBundle.zeros_like(toy_net).flatten().any()

    def test_bundle_shape_mismatch(self, toy_net, conv_net):
        a = GradientBundle.zeros_like(toy_net)
        b = GradientBundle.zeros_like(conv_net)
        with pytest.raises(ShapeError):
            a.add(b)

    def test_fd_step_must_be_positive(self, toy_net):
        with pytest.raises(ValueError):
            fd_gradient(toy_net, np.array([0.1, 0.1]), np.array([1.0, 0.0]), Quadratic, h=0.0)
