"""Fully connected feed-forward regressor trained with Adam on squared error.

Weights and biases are views into one flat parameter vector so that the
optimiser update and finite-difference checks operate on a single array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .forest import DimensionMismatch, EmptyTrainingSet


class NonFiniteLoss(FloatingPointError):
    pass


ACTIVATIONS = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0).astype(float)),
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "logistic": (lambda z: 1.0 / (1.0 + np.exp(-z)), lambda z, a: a * (1.0 - a)),
    "identity": (lambda z: z, lambda z, a: np.ones_like(z)),
}


@dataclass(frozen=True)
class MlpConfig:
    hidden_layers: tuple[int, ...] = (18, 14, 9, 10)
    activation: str = "relu"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 200
    max_epochs: int = 200
    patience: int = 10
    tol: float = 1e-3
    validation_fraction: float = 0.1
    # "tail" holds out the last rows as given (time order), "random" a random subset
    validation_split: str = "random"
    seed: int = 0

    def __post_init__(self):
        if len(self.hidden_layers) < 1 or min(self.hidden_layers) < 1:
            raise ValueError("need at least one hidden layer, all widths >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.validation_split not in ("random", "tail"):
            raise ValueError(f"unknown validation_split {self.validation_split!r}")


class Network:
    """Dense network with a linear output unit."""

    def __init__(self, sizes: Sequence[int], activation: str = "relu",
                 theta: Optional[np.ndarray] = None):
        self.sizes = tuple(int(s) for s in sizes)
        if self.sizes[-1] != 1:
            raise ValueError("output layer must have a single unit")
        self.activation = activation
        n_params = sum((a + 1) * b for a, b in zip(self.sizes, self.sizes[1:]))
        self.theta = np.zeros(n_params) if theta is None else np.array(theta, dtype=float)
        if self.theta.shape != (n_params,):
            raise ValueError(f"expected {n_params} parameters, got {self.theta.shape}")

    @classmethod
    def initialise(cls, sizes: Sequence[int], activation: str,
                   rng: np.random.Generator) -> "Network":
        """Glorot-uniform weights, zero biases."""
        net = cls(sizes, activation)
        for W, b in net.layers():
            fan_in, fan_out = W.shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            W[...] = rng.uniform(-bound, bound, size=W.shape)
        return net

    @classmethod
    def from_layers(cls, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray],
                    activation: str = "relu") -> "Network":
        sizes = [np.shape(weights[0])[0]] + [np.shape(W)[1] for W in weights]
        net = cls(sizes, activation)
        for (W, b), Wv, bv in zip(net.layers(), weights, biases):
            W[...] = Wv
            b[...] = bv
        return net

    def layers(self, theta: Optional[np.ndarray] = None) -> list[tuple[np.ndarray, np.ndarray]]:
        """(W, b) views into ``theta`` (default: the network's own parameters)."""
        theta = self.theta if theta is None else theta
        out, pos = [], 0
        for a, b in zip(self.sizes, self.sizes[1:]):
            W = theta[pos:pos + a * b].reshape(a, b)
            pos += a * b
            out.append((W, theta[pos:pos + b]))
            pos += b
        return out

    def forward(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.sizes[0]:
            raise DimensionMismatch(f"expected {self.sizes[0]} features, got {X.shape[1]}")
        act = ACTIVATIONS[self.activation][0]
        h = X
        layers = self.layers()
        for W, b in layers[:-1]:
            h = act(h @ W + b)
        W, b = layers[-1]
        return (h @ W + b)[:, 0]

    def loss_and_grad(self, X: np.ndarray, y: np.ndarray, grad: Optional[np.ndarray] = None,
                      layers=None, layers_of_grad=None) -> tuple[float, np.ndarray]:
        """Mean squared error and its gradient with respect to ``theta``.

        ``grad`` may be a preallocated buffer; ``layers`` and
        ``layers_of_grad`` may pass cached views of theta and of that buffer.
        """
        act, dact = ACTIVATIONS[self.activation]
        layers = self.layers() if layers is None else layers
        hs, zs = [X], []
        for W, b in layers[:-1]:
            z = hs[-1] @ W + b
            zs.append(z)
            hs.append(act(z))
        W, b = layers[-1]
        out = (hs[-1] @ W + b)[:, 0]
        resid = out - y
        loss = float(np.mean(resid * resid))

        if grad is None:
            grad = np.empty_like(self.theta)
        glayers = self.layers(grad) if layers_of_grad is None else layers_of_grad
        delta = (2.0 / len(y)) * resid[:, None]
        for i in range(len(layers) - 1, -1, -1):
            gW, gb = glayers[i]
            gW[...] = hs[i].T @ delta
            gb[...] = delta.sum(axis=0)
            if i:
                delta = (delta @ layers[i][0].T) * dact(zs[i - 1], hs[i])
        return loss, grad

    def loss(self, X: np.ndarray, y: np.ndarray) -> float:
        r = self.forward(X) - y
        return float(np.mean(r * r))


@dataclass
class TrainingLog:
    epochs: int = 0
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0


def fit_mlp(X, y, cfg: MlpConfig = MlpConfig()) -> tuple[Network, TrainingLog]:
    """Minibatch Adam with early stopping on a held-out validation split.

    The parameters with the lowest validation loss are returned.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) < 2 or len(X) != len(y):
        raise EmptyTrainingSet(f"need at least two matching rows, got {X.shape}, {y.shape}")
    rng = np.random.default_rng(cfg.seed)
    net = Network.initialise((X.shape[1], *cfg.hidden_layers, 1), cfg.activation, rng)
    log = TrainingLog()
    if cfg.max_epochs <= 0:
        return net, log

    n_val = min(len(X) - 1, max(1, int(round(cfg.validation_fraction * len(X)))))
    if cfg.validation_split == "tail":
        val, train = np.arange(len(X) - n_val, len(X)), np.arange(len(X) - n_val)
    else:
        perm = rng.permutation(len(X))
        val, train = perm[:n_val], perm[n_val:]
    Xv, yv = X[val], y[val]

    m = np.zeros_like(net.theta)
    v = np.zeros_like(net.theta)
    g = np.empty_like(net.theta)
    upd = np.empty_like(net.theta)
    views, gviews = net.layers(), net.layers(g)
    b1, b2 = cfg.beta1, cfg.beta2
    step = 0
    best = net.loss(Xv, yv)
    best_theta = net.theta.copy()
    wait = 0
    for epoch in range(1, cfg.max_epochs + 1):
        rng.shuffle(train)
        Xe, ye = X[train], y[train]
        total = 0.0
        for lo in range(0, len(train), cfg.batch_size):
            xb, yb = Xe[lo:lo + cfg.batch_size], ye[lo:lo + cfg.batch_size]
            loss, _ = net.loss_and_grad(xb, yb, g, views, gviews)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} at epoch {epoch}")
            total += loss * len(yb)
            step += 1
            m *= b1
            m += (1 - b1) * g
            v *= b2
            np.multiply(g, g, out=upd)
            upd *= 1 - b2
            v += upd
            lr = cfg.learning_rate * np.sqrt(1 - b2 ** step) / (1 - b1 ** step)
            np.sqrt(v, out=upd)
            upd += cfg.epsilon
            np.divide(m, upd, out=upd)
            upd *= lr
            net.theta -= upd
        vloss = net.loss(Xv, yv)
        if not np.isfinite(vloss):
            raise NonFiniteLoss(f"validation loss became {vloss} at epoch {epoch}")
        log.epochs = epoch
        log.train_loss.append(total / len(train))
        log.val_loss.append(vloss)
        if vloss < best - cfg.tol:
            best, best_theta, wait = vloss, net.theta.copy(), 0
            log.best_epoch = epoch
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    net.theta[...] = best_theta
    return net, log
