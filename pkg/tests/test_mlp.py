import numpy as np
import pytest

from voltsim.predictors.mlp import MlpConfig, Network, fit_mlp


def numeric_grad(net, X, y, eps=1e-6):
    g = np.empty_like(net.theta)
    for k in range(len(net.theta)):
        old = net.theta[k]
        net.theta[k] = old + eps
        up = net.loss(X, y)
        net.theta[k] = old - eps
        down = net.loss(X, y)
        net.theta[k] = old
        g[k] = (up - down) / (2 * eps)
    return g


@pytest.mark.parametrize("activation", ["relu", "tanh", "logistic", "identity"])
def test_gradient_matches_finite_differences(activation):
    rng = np.random.default_rng(0)
    net = Network.initialise([4, 5, 3, 1], activation, rng)
    net.theta += rng.normal(0, 0.1, net.theta.shape)
    X, y = rng.normal(size=(20, 4)), rng.normal(size=20)
    _, g = net.loss_and_grad(X, y)
    np.testing.assert_allclose(g, numeric_grad(net, X, y), rtol=1e-4, atol=1e-7)


def test_zero_network_outputs_zero():
    net = Network([3, 4, 1])
    np.testing.assert_array_equal(net.forward(np.random.default_rng(1).random((5, 3))), 0.0)


def test_hand_computed_forward_pass():
    W1 = np.array([[1.0, -1.0], [0.5, 2.0]])
    b1 = np.array([0.1, -0.2])
    W2 = np.array([[2.0], [-3.0]])
    b2 = np.array([0.25])
    net = Network.from_layers([W1, W2], [b1, b2])
    x = np.array([[1.0, 2.0]])
    h = np.maximum(0, [1 + 1 + 0.1, -1 + 4 - 0.2])
    expected = 2 * h[0] - 3 * h[1] + 0.25
    assert net.forward(x)[0] == pytest.approx(expected, abs=1e-12)
    np.testing.assert_array_equal(net.forward(np.vstack([x, x])), [expected, expected])


def test_learns_identity():
    rng = np.random.default_rng(2)
    X = rng.random((100, 1))
    cfg = MlpConfig(hidden_layers=(8,), max_epochs=500, batch_size=20, learning_rate=1e-2,
                    patience=50, tol=1e-9, seed=0)
    net, _ = fit_mlp(X, X[:, 0], cfg)
    assert net.loss(X, X[:, 0]) < 0.01


def test_zero_epochs_keeps_initial_weights():
    X = np.random.default_rng(3).random((30, 2))
    cfg = MlpConfig(hidden_layers=(4,), max_epochs=0, seed=9)
    net, log = fit_mlp(X, X[:, 0], cfg)
    init = Network.initialise([2, 4, 1], "relu", np.random.default_rng(9))
    assert log.epochs == 0
    np.testing.assert_array_equal(net.forward(X), init.forward(X))


def test_constant_target():
    X = np.random.default_rng(4).random((4000, 3))
    net, _ = fit_mlp(X, np.full(4000, 0.5), MlpConfig(hidden_layers=(6, 4), tol=1e-9, seed=1))
    assert net.loss(X, np.full(4000, 0.5)) < 1e-3


def test_fit_is_deterministic():
    rng = np.random.default_rng(5)
    X, y = rng.random((120, 3)), rng.random(120)
    a, _ = fit_mlp(X, y, MlpConfig(seed=4))
    b, _ = fit_mlp(X, y, MlpConfig(seed=4))
    np.testing.assert_array_equal(a.theta, b.theta)


def test_tail_split_option():
    rng = np.random.default_rng(6)
    X, y = rng.random((80, 2)), rng.random(80)
    net, log = fit_mlp(X, y, MlpConfig(validation_split="tail", max_epochs=5))
    assert log.epochs <= 5 and np.isfinite(net.forward(X)).all()


def test_comparable_to_sklearn():
    from sklearn.neural_network import MLPRegressor

    rng = np.random.default_rng(7)
    X = rng.random((800, 4))
    y = np.sin(3 * X[:, 0]) * X[:, 1] + 0.05 * rng.normal(size=800)
    cfg = MlpConfig(hidden_layers=(18, 14, 9, 10), tol=1e-6, seed=0)
    net, _ = fit_mlp(X[:600], y[:600], cfg)
    ref = MLPRegressor(hidden_layer_sizes=(18, 14, 9, 10), early_stopping=True,
                       max_iter=200, random_state=0).fit(X[:600], y[:600])
    ours = np.mean((net.forward(X[600:]) - y[600:]) ** 2)
    theirs = np.mean((ref.predict(X[600:]) - y[600:]) ** 2)
    assert ours < 1.5 * theirs + 1e-3


def test_config_validation():
    with pytest.raises(ValueError):
        MlpConfig(activation="swish")
    with pytest.raises(ValueError):
        MlpConfig(validation_fraction=1.0)
    with pytest.raises(ValueError):
        Network([3, 2])
