"""Multinomial logistic regression trained by full-batch gradient descent."""

from __future__ import annotations

import numpy as np

from .base import register, softmax


def softmax_loss_grad(W: np.ndarray, b: np.ndarray, X: np.ndarray, Y: np.ndarray, l2: float):
    """Mean cross-entropy plus ``l2/2 * ||W||^2`` and its gradients.

    ``Y`` is one-hot ``(n, k)``. The bias is not penalised.
    """
    n = X.shape[0]
    P = softmax(X @ W + b)
    loss = -np.sum(Y * np.log(np.clip(P, 1e-300, None))) / n + 0.5 * l2 * np.sum(W * W)
    G = (P - Y) / n
    return float(loss), X.T @ G + l2 * W, G.sum(axis=0)


def _fit_logreg(X, y, k, hp, seed):
    Y = np.zeros((len(y), k))
    Y[np.arange(len(y)), y] = 1.0
    W = np.zeros((X.shape[1], k))
    b = np.zeros(k)
    lr, l2 = hp["learning_rate"], hp["l2"]
    for _ in range(hp["iterations"]):
        _, dW, db = softmax_loss_grad(W, b, X, Y, l2)
        W -= lr * dW
        b -= lr * db
    return {"W": W, "b": b}


def _proba_logreg(params, X, hp):
    return softmax(X @ params["W"] + params["b"])


register("LogisticRegression", _fit_logreg, _proba_logreg)
