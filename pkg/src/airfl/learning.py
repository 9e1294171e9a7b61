"""Loss models (multinomial logistic, one-hidden-layer MLP, quadratic toy) and local SGD.

Model parameters live in a single flat vector so the whole uplink pipeline
(sparsification, clipping, projection) operates on plain arrays. Gradients are
hand-derived; each model is continuously differentiable (softmax cross-entropy,
sigmoid hidden units) so a finite Lipschitz constant is at least plausible.
"""

from __future__ import annotations

import numpy as np


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_batch(X: np.ndarray, y: np.ndarray, p: int) -> None:
    if len(X) == 0:
        raise ValueError("empty mini-batch")
    if X.ndim != 2 or X.shape[1] != p:
        raise ValueError(f"feature dimension mismatch: got {X.shape}, expected (*, {p})")
    if len(y) != len(X):
        raise ValueError("batch features/labels length mismatch")


class MultinomialLogistic:
    """Softmax regression; theta packs the (c, p) weight matrix then the c biases."""

    kind = "multinomial-logistic"

    def __init__(self, num_features: int, num_classes: int):
        self.p = num_features
        self.c = num_classes
        self.dim = num_classes * (num_features + 1)

    def init_params(self, rng: np.random.Generator | None = None) -> np.ndarray:
        # Zero init: the softmax is uniform, so the initial loss is ln(c) exactly.
        return np.zeros(self.dim)

    def _unpack(self, theta: np.ndarray):
        if theta.shape != (self.dim,):
            raise ValueError(f"theta has dimension {theta.shape}, expected ({self.dim},)")
        W = theta[: self.c * self.p].reshape(self.c, self.p)
        b = theta[self.c * self.p:]
        return W, b

    def loss(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        _check_batch(X, y, self.p)
        W, b = self._unpack(theta)
        logp = _log_softmax(X @ W.T + b)
        return float(-logp[np.arange(len(y)), y].mean())

    def grad(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        _check_batch(X, y, self.p)
        W, b = self._unpack(theta)
        probs = _softmax(X @ W.T + b)
        probs[np.arange(len(y)), y] -= 1.0
        probs /= len(y)
        return np.concatenate([(probs.T @ X).ravel(), probs.sum(axis=0)])

    def predict(self, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
        W, b = self._unpack(theta)
        return np.argmax(X @ W.T + b, axis=1)


class OneHiddenMLP:
    """p -> h sigmoid -> c softmax classifier.

    Smooth replacement for the reference ReLU/dropout network: ReLU breaks the
    gradient-Lipschitz assumption the bound evaluator relies on.
    """

    kind = "one-hidden-layer-mlp"

    def __init__(self, num_features: int, hidden: int, num_classes: int):
        self.p = num_features
        self.h = hidden
        self.c = num_classes
        self.dim = hidden * (num_features + 1) + num_classes * (hidden + 1)

    def init_params(self, rng: np.random.Generator | None = None) -> np.ndarray:
        if rng is None:
            rng = np.random.default_rng(0)
        w1 = rng.standard_normal(self.h * self.p) / np.sqrt(self.p)
        b1 = np.zeros(self.h)
        w2 = rng.standard_normal(self.c * self.h) / np.sqrt(self.h)
        b2 = np.zeros(self.c)
        return np.concatenate([w1, b1, w2, b2])

    def _unpack(self, theta: np.ndarray):
        if theta.shape != (self.dim,):
            raise ValueError(f"theta has dimension {theta.shape}, expected ({self.dim},)")
        i = 0
        W1 = theta[i:i + self.h * self.p].reshape(self.h, self.p); i += self.h * self.p
        b1 = theta[i:i + self.h]; i += self.h
        W2 = theta[i:i + self.c * self.h].reshape(self.c, self.h); i += self.c * self.h
        b2 = theta[i:]
        return W1, b1, W2, b2

    def _forward(self, theta, X):
        W1, b1, W2, b2 = self._unpack(theta)
        a1 = 1.0 / (1.0 + np.exp(-(X @ W1.T + b1)))
        return a1, a1 @ W2.T + b2

    def loss(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        _check_batch(X, y, self.p)
        _, z2 = self._forward(theta, X)
        logp = _log_softmax(z2)
        return float(-logp[np.arange(len(y)), y].mean())

    def grad(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        _check_batch(X, y, self.p)
        W1, b1, W2, b2 = self._unpack(theta)
        a1 = 1.0 / (1.0 + np.exp(-(X @ W1.T + b1)))
        d2 = _softmax(a1 @ W2.T + b2)
        d2[np.arange(len(y)), y] -= 1.0
        d2 /= len(y)
        d1 = (d2 @ W2) * a1 * (1.0 - a1)
        return np.concatenate([
            (d1.T @ X).ravel(), d1.sum(axis=0),
            (d2.T @ a1).ravel(), d2.sum(axis=0),
        ])

    def predict(self, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
        _, z2 = self._forward(theta, X)
        return np.argmax(z2, axis=1)


class QuadraticToy:
    """f(theta; c) = 0.5 * ||theta - c||^2 averaged over the batch of centers c.

    Gradient-Lipschitz constant is exactly 1 and full-batch gradients are
    noise-free, which makes every bound input analytic.
    """

    kind = "quadratic"

    def __init__(self, dim: int):
        self.p = dim
        self.dim = dim

    def init_params(self, rng: np.random.Generator | None = None) -> np.ndarray:
        return np.zeros(self.dim)

    def loss(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        _check_batch(X, y, self.p)
        return float(0.5 * ((theta - X) ** 2).sum(axis=1).mean())

    def grad(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        _check_batch(X, y, self.p)
        return theta - X.mean(axis=0)

    predict = None


def loss_eval(model, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    """Average loss of `model` at `theta` over the given samples."""
    return model.loss(theta, X, y)


def grad_minibatch(model, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Mini-batch gradient estimate (mean of per-sample loss gradients)."""
    return model.grad(theta, X, y)


def local_sgd(model, theta_init: np.ndarray, Q: int, eta: float, batch_fn) -> np.ndarray:
    """Run Q sequential SGD steps theta <- theta - eta * grad(batch_fn(q)).

    batch_fn(q) must return the (X, y) mini-batch for local step q; keying the
    sampler on q keeps the whole run reproducible.
    """
    if Q < 1:
        raise ValueError("Q must be >= 1")
    if eta < 0:
        raise ValueError("learning rate must be non-negative")
    theta = theta_init.copy()
    for q in range(Q):
        X, y = batch_fn(q)
        theta -= eta * model.grad(theta, X, y)
        if not np.all(np.isfinite(theta)):
            raise FloatingPointError(f"non-finite parameters after local step q={q}")
    return theta


def model_diff(theta_start: np.ndarray, theta_end: np.ndarray) -> np.ndarray:
    """Model difference transmitted uplink: start minus end."""
    if theta_start.shape != theta_end.shape:
        raise ValueError("model dimension mismatch")
    return theta_start - theta_end


def make_model(kind: str, num_features: int, num_classes: int, hidden: int = 32):
    if kind == "logistic":
        return MultinomialLogistic(num_features, num_classes)
    if kind == "mlp":
        return OneHiddenMLP(num_features, hidden, num_classes)
    if kind == "quadratic":
        return QuadraticToy(num_features)
    raise ValueError(f"unknown model kind '{kind}'")
