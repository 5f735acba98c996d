import numpy as np
import pytest

from brns.nn import (AdamState, MlpNetwork, adam_step, flatten_weights, mlp_forward, mlp_grad_mse,
                     mlp_init, unflatten_weights)


def random_net(rng, dims=(3, 5, 4, 2), acts=("tanh", "leaky_relu", "linear")):
    return mlp_init(list(dims), list(acts), rng)


def finite_difference_grads(net, x, target, h=1e-6):
    grads = []
    for layer, w in enumerate(net.params):
        g = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            plus, minus = net.copy(), net.copy()
            plus.params[layer][idx] += h
            minus.params[layer][idx] -= h
            lp = np.sum((mlp_forward(plus, x) - target) ** 2)
            lm = np.sum((mlp_forward(minus, x) - target) ** 2)
            g[idx] = (lp - lm) / (2 * h)
        grads.append(g)
    return grads


class TestInit:
    def test_shapes(self):
        net = mlp_init([2, 6, 4], ["leaky_relu", "linear"], np.random.default_rng(0))
        assert [w.shape for w in net.weights] == [(6, 2), (4, 6)]

    def test_rejects_bad_activation_count(self):
        with pytest.raises(ValueError):
            mlp_init([2, 6, 4], ["linear"], np.random.default_rng(0))

    def test_rejects_non_chaining(self):
        with pytest.raises(ValueError):
            MlpNetwork([np.zeros((6, 2)), np.zeros((4, 5))], ["tanh", "linear"])

    def test_he_variance(self):
        # fan_in 8 -> variance 2/8 = 0.25
        net = mlp_init([8, 12500], ["linear"], np.random.default_rng(1))
        w = net.weights[0].ravel()
        assert w.size == 100_000
        sigma = np.sqrt(0.25)
        assert abs(w.mean()) < 3 * sigma / np.sqrt(w.size)
        assert abs(w.var() - 0.25) / 0.25 < 0.05

    def test_bias_free_by_default(self):
        net = mlp_init([2, 6, 4], ["leaky_relu", "linear"], np.random.default_rng(0))
        assert net.biases is None and net.n_params == 12 + 24

    def test_biases_drawn_after_weights(self):
        plain = mlp_init([2, 6, 4], ["leaky_relu", "linear"], np.random.default_rng(0))
        biased = mlp_init([2, 6, 4], ["leaky_relu", "linear"], np.random.default_rng(0), bias_std=0.5)
        for a, b in zip(plain.weights, biased.weights):
            np.testing.assert_array_equal(a, b)
        assert [c.shape for c in biased.biases] == [(6,), (4,)]
        assert biased.n_params == 12 + 24 + 6 + 4

    def test_rejects_bad_bias_shape(self):
        with pytest.raises(ValueError):
            MlpNetwork([np.zeros((6, 2))], ["linear"], biases=[np.zeros(2)])

    def test_fan_in_two_gives_unit_variance(self):
        net = mlp_init([2, 50000], ["linear"], np.random.default_rng(2))
        assert abs(net.weights[0].var() - 1.0) < 0.02


class TestForward:
    def test_zero_weights(self):
        net = MlpNetwork([np.zeros((4, 3)), np.zeros((2, 4))], ["tanh", "linear"])
        np.testing.assert_array_equal(mlp_forward(net, [1.0, -2.0, 3.0]), [0.0, 0.0])

    def test_identity_linear(self):
        net = MlpNetwork([np.eye(3)], ["linear"])
        x = np.array([0.5, -1.5, 2.0])
        np.testing.assert_array_equal(mlp_forward(net, x), x)

    def test_bias_shifts_preactivation(self):
        net = MlpNetwork([np.eye(2), np.ones((1, 2))], ["leaky_relu", "linear"],
                         biases=[np.array([-1.0, 0.5]), np.array([2.0])])
        # layer 1: leaky([0.5 - 1, 1 + 0.5]) = [-0.005, 1.5]; layer 2: sum + 2
        assert mlp_forward(net, [0.5, 1.0])[0] == pytest.approx(-0.005 + 1.5 + 2.0)

    def test_bias_free_is_homogeneous(self):
        net = random_net(np.random.default_rng(8), acts=("leaky_relu", "leaky_relu", "linear"))
        x = np.array([0.3, -0.2, 0.7])
        np.testing.assert_allclose(mlp_forward(net, 2.5 * x), 2.5 * mlp_forward(net, x), rtol=1e-12)

    def test_leaky_relu_negative(self):
        net = MlpNetwork([np.ones((1, 1))], ["leaky_relu"])
        assert mlp_forward(net, [-2.0])[0] == pytest.approx(-0.02)

    def test_dimension_mismatch(self):
        net = MlpNetwork([np.eye(3)], ["linear"])
        with pytest.raises(ValueError):
            mlp_forward(net, [1.0, 2.0])

    def test_pure(self):
        net = random_net(np.random.default_rng(3))
        x = np.random.default_rng(4).normal(size=(7, 3))
        np.testing.assert_array_equal(mlp_forward(net, x), mlp_forward(net, x))

    def test_batch_matches_rows(self):
        net = random_net(np.random.default_rng(5))
        x = np.random.default_rng(6).normal(size=(4, 3))
        np.testing.assert_allclose(mlp_forward(net, x), [mlp_forward(net, r) for r in x], rtol=1e-14)

    def test_output_variance_grows_with_init_scale(self):
        x = np.full(4, 0.5)
        variances = []
        for s in (0.5, 1.0, 2.0):
            outs = [mlp_forward(mlp_init([4, 12, 12, 8], ["leaky_relu", "leaky_relu", "linear"],
                                         np.random.default_rng(i), std_scale=s), x) for i in range(300)]
            variances.append(np.var(outs))
        assert variances[0] < variances[1] < variances[2]


class TestGradients:
    def test_zero_at_target(self):
        net = random_net(np.random.default_rng(7))
        x = np.array([0.1, 0.2, 0.3])
        loss, grads = mlp_grad_mse(net, x, mlp_forward(net, x))
        assert loss == 0.0
        assert all(np.all(g == 0) for g in grads)

    def test_single_neuron(self):
        net = MlpNetwork([np.ones((1, 1))], ["linear"])
        loss, grads = mlp_grad_mse(net, [2.0], [0.0])
        assert loss == 4.0
        assert grads[0][0, 0] == 8.0

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        net = random_net(rng)
        x, target = rng.normal(size=3), rng.normal(size=2)
        _, grads = mlp_grad_mse(net, x, target)
        fd = finite_difference_grads(net, x, target)
        for g, f in zip(grads, fd):
            np.testing.assert_allclose(g, f, rtol=1e-5, atol=1e-8)

    @pytest.mark.parametrize("seed", range(3))
    def test_bias_grads_match_finite_differences(self, seed):
        rng = np.random.default_rng(100 + seed)
        net = mlp_init([3, 5, 4, 2], ["tanh", "leaky_relu", "linear"], rng, bias_std=0.3)
        x, target = rng.normal(size=3), rng.normal(size=2)
        _, grads = mlp_grad_mse(net, x, target)
        assert len(grads) == 6
        for g, f in zip(grads, finite_difference_grads(net, x, target)):
            np.testing.assert_allclose(g, f, rtol=1e-5, atol=1e-8)

    def test_batch_is_mean_of_rows(self):
        rng = np.random.default_rng(11)
        net = random_net(rng)
        X, T = rng.normal(size=(5, 3)), rng.normal(size=(5, 2))
        loss, grads = mlp_grad_mse(net, X, T)
        rows = [mlp_grad_mse(net, x, t) for x, t in zip(X, T)]
        assert loss == pytest.approx(np.mean([r[0] for r in rows]))
        for layer, g in enumerate(grads):
            np.testing.assert_allclose(g, np.mean([r[1][layer] for r in rows], axis=0), rtol=1e-12, atol=1e-15)

    def test_target_shape_checked(self):
        net = random_net(np.random.default_rng(0))
        with pytest.raises(ValueError):
            mlp_grad_mse(net, np.zeros(3), np.zeros(3))


class TestAdam:
    def test_zero_grads_leave_weights(self):
        net = random_net(np.random.default_rng(0))
        state = AdamState.for_network(net)
        new, new_state = adam_step(net, state, [np.zeros_like(w) for w in net.weights])
        for a, b in zip(new.weights, net.weights):
            np.testing.assert_array_equal(a, b)
        assert new_state.t == 1

    def test_first_step_is_lr_sign(self):
        net = random_net(np.random.default_rng(1))
        state = AdamState.for_network(net, lr=0.01)
        grads = [np.random.default_rng(2).normal(size=w.shape) for w in net.weights]
        new, _ = adam_step(net, state, grads)
        for a, b, g in zip(new.weights, net.weights, grads):
            np.testing.assert_allclose(a - b, -0.01 * np.sign(g), atol=1e-8)

    def test_scalar_descent(self):
        # minimise (w - 3)^2 from w = 0
        net = MlpNetwork([np.zeros((1, 1))], ["linear"])
        state = AdamState.for_network(net, lr=0.1)
        for _ in range(200):
            w = net.weights[0][0, 0]
            net, state = adam_step(net, state, [np.array([[2.0 * (w - 3.0)]])])
        assert abs(net.weights[0][0, 0] - 3.0) < 0.05

    def test_updates_biases(self):
        net = mlp_init([2, 3], ["linear"], np.random.default_rng(0), bias_std=1.0)
        state = AdamState.for_network(net, lr=0.01)
        grads = [np.zeros((3, 2)), np.array([1.0, -1.0, 0.0])]
        new, _ = adam_step(net, state, grads)
        np.testing.assert_allclose(new.biases[0] - net.biases[0], [-0.01, 0.01, 0.0], atol=1e-8)
        np.testing.assert_array_equal(new.weights[0], net.weights[0])

    def test_shape_mismatch(self):
        net = random_net(np.random.default_rng(0))
        with pytest.raises(ValueError):
            adam_step(net, AdamState.for_network(net), [np.zeros((1, 1))])


def test_flatten_roundtrip():
    net = random_net(np.random.default_rng(3))
    again = unflatten_weights(flatten_weights(net), net.layer_dims, net.activations)
    for a, b in zip(again.weights, net.weights):
        np.testing.assert_array_equal(a, b)


def test_dict_roundtrip():
    net = random_net(np.random.default_rng(4))
    again = MlpNetwork.from_dict(net.to_dict())
    assert again.activations == net.activations
    for a, b in zip(again.weights, net.weights):
        np.testing.assert_array_equal(a, b)


def test_dict_roundtrip_with_biases():
    net = mlp_init([2, 4, 3], ["leaky_relu", "linear"], np.random.default_rng(5), bias_std=0.2)
    again = MlpNetwork.from_dict(net.to_dict())
    for a, b in zip(again.params, net.params):
        np.testing.assert_array_equal(a, b)
    assert "biases" not in random_net(np.random.default_rng(5)).to_dict()
