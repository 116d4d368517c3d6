"""Linear and neural meta-classifiers: logistic regression, hinge SVM, MLP."""

import numpy as np
from scipy.special import expit, logsumexp

from .errors import DivergenceError


def _one_hot(codes, n_classes):
    out = np.zeros((len(codes), n_classes))
    out[np.arange(len(codes)), codes] = 1.0
    return out


def softmax_rows(z):
    return np.exp(z - logsumexp(z, axis=1, keepdims=True))


# ---------------------------------------------------------------------------
# Multinomial logistic regression (full-batch gradient descent, L2).
# ---------------------------------------------------------------------------

class LogisticRegressionModel:
    def __init__(self, l2=1e-3, lr=0.5, iters=500, seed=0):
        self.l2, self.lr, self.iters, self.seed = l2, lr, iters, seed
        self.W = None
        self.b = None

    @staticmethod
    def loss_and_grad(W, b, X, Y, l2):
        """Mean cross-entropy + (l2/2)||W||^2 with exact gradients."""
        n = X.shape[0]
        Z = X @ W + b
        logp = Z - logsumexp(Z, axis=1, keepdims=True)
        loss = -float(np.sum(Y * logp)) / n + 0.5 * l2 * float(np.sum(W * W))
        dZ = (np.exp(logp) - Y) / n
        return loss, X.T @ dZ + l2 * W, dZ.sum(axis=0)

    def fit(self, X, codes, n_classes):
        rng = np.random.default_rng(self.seed)
        self.W = rng.uniform(-0.01, 0.01, size=(X.shape[1], n_classes))
        self.b = np.zeros(n_classes)
        Y = _one_hot(codes, n_classes)
        for _ in range(self.iters):
            loss, dW, db = self.loss_and_grad(self.W, self.b, X, Y, self.l2)
            if not np.isfinite(loss):
                raise DivergenceError("logistic regression loss diverged")
            self.W -= self.lr * dW
            self.b -= self.lr * db
        return self

    def decision(self, X):
        return X @ self.W + self.b


# ---------------------------------------------------------------------------
# One-vs-rest linear SVM via squared-hinge SGD; argmax of decision scores.
# ---------------------------------------------------------------------------

class LinearSVMModel:
    def __init__(self, C=1.0, lr=0.01, epochs=50, seed=0):
        self.C, self.lr, self.epochs, self.seed = C, lr, epochs, seed
        self.W = None
        self.b = None

    def fit(self, X, codes, n_classes):
        rng = np.random.default_rng(self.seed)
        n, d = X.shape
        self.W = np.zeros((d, n_classes))
        self.b = np.zeros(n_classes)
        Ypm = 2.0 * _one_hot(codes, n_classes) - 1.0
        lam = 1.0 / (self.C * n)
        for _ in range(self.epochs):
            for i in rng.permutation(n):
                margins = Ypm[i] * (X[i] @ self.W + self.b)
                # squared hinge: d/dm (1 - m)_+^2 = -2 (1 - m)_+
                coef = 2.0 * np.maximum(1.0 - margins, 0.0) * Ypm[i]
                self.W *= 1.0 - self.lr * lam
                self.W += self.lr * np.outer(X[i], coef)
                self.b += self.lr * coef
            if not np.all(np.isfinite(self.W)):
                raise DivergenceError("SVM weights diverged")
        return self

    def decision(self, X):
        return X @ self.W + self.b


# ---------------------------------------------------------------------------
# One-hidden-layer MLP with tanh activation and softmax output.
# ---------------------------------------------------------------------------

class MLPModel:
    def __init__(self, hidden=64, lr=1e-2, epochs=200, l2=0.0, seed=0, batch_size=64):
        self.hidden, self.lr, self.epochs = hidden, lr, epochs
        self.l2, self.seed, self.batch_size = l2, seed, batch_size
        self.params = None

    @staticmethod
    def init_params(d, hidden, n_classes, seed):
        rng = np.random.default_rng(seed)
        return {
            "W1": rng.uniform(-0.1, 0.1, size=(d, hidden)),
            "b1": np.zeros(hidden),
            "W2": rng.uniform(-0.1, 0.1, size=(hidden, n_classes)),
            "b2": np.zeros(n_classes),
        }

    @staticmethod
    def loss_and_grad(params, X, Y, l2=0.0):
        n = X.shape[0]
        H = np.tanh(X @ params["W1"] + params["b1"])
        Z = H @ params["W2"] + params["b2"]
        logp = Z - logsumexp(Z, axis=1, keepdims=True)
        loss = -float(np.sum(Y * logp)) / n + 0.5 * l2 * (
            float(np.sum(params["W1"] ** 2)) + float(np.sum(params["W2"] ** 2))
        )
        dZ = (np.exp(logp) - Y) / n
        dH = dZ @ params["W2"].T
        dA = dH * (1.0 - H * H)
        grads = {
            "W1": X.T @ dA + l2 * params["W1"],
            "b1": dA.sum(axis=0),
            "W2": H.T @ dZ + l2 * params["W2"],
            "b2": dZ.sum(axis=0),
        }
        return loss, grads

    def forward(self, params, X):
        H = np.tanh(X @ params["W1"] + params["b1"])
        return softmax_rows(H @ params["W2"] + params["b2"])

    def fit(self, X, codes, n_classes):
        self.params = self.init_params(X.shape[1], self.hidden, n_classes, self.seed)
        Y = _one_hot(codes, n_classes)
        rng = np.random.default_rng(self.seed)
        for _ in range(self.epochs):
            order = rng.permutation(X.shape[0])
            for start in range(0, len(order), self.batch_size):
                sel = order[start:start + self.batch_size]
                loss, grads = self.loss_and_grad(self.params, X[sel], Y[sel], self.l2)
                if not np.isfinite(loss):
                    raise DivergenceError("MLP loss diverged")
                for k in self.params:
                    self.params[k] -= self.lr * grads[k]
        return self

    def decision(self, X):
        return self.forward(self.params, X)
