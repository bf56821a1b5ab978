"""One-hidden-layer ReLU perceptron with a softmax output, trained with Adam."""

from __future__ import annotations

import numpy as np

from .base import register, softmax


def init_params(n_in: int, n_hidden: int, n_out: int, rng: np.random.Generator) -> dict:
    """Glorot-uniform weights, zero biases."""
    lim1 = np.sqrt(6.0 / (n_in + n_hidden))
    lim2 = np.sqrt(6.0 / (n_hidden + n_out))
    return {
        "W1": rng.uniform(-lim1, lim1, size=(n_in, n_hidden)),
        "b1": np.zeros(n_hidden),
        "W2": rng.uniform(-lim2, lim2, size=(n_hidden, n_out)),
        "b2": np.zeros(n_out),
    }


def forward(params: dict, X: np.ndarray):
    Z1 = X @ params["W1"] + params["b1"]
    H = np.maximum(Z1, 0.0)
    P = softmax(H @ params["W2"] + params["b2"])
    return Z1, H, P


def mlp_loss_grad(params: dict, X: np.ndarray, Y: np.ndarray, l2: float = 0.0):
    """Mean cross-entropy (plus optional weight decay) and backprop gradients."""
    n = X.shape[0]
    Z1, H, P = forward(params, X)
    loss = -np.sum(Y * np.log(np.clip(P, 1e-300, None))) / n
    if l2:
        loss += 0.5 * l2 * (np.sum(params["W1"] ** 2) + np.sum(params["W2"] ** 2))
    dZ2 = (P - Y) / n
    dH = dZ2 @ params["W2"].T
    dZ1 = dH * (Z1 > 0)
    grads = {
        "W1": X.T @ dZ1 + l2 * params["W1"],
        "b1": dZ1.sum(axis=0),
        "W2": H.T @ dZ2 + l2 * params["W2"],
        "b2": dZ2.sum(axis=0),
    }
    return float(loss), grads


def _fit_mlp(X, y, k, hp, seed):
    rng = np.random.default_rng(seed)
    n, d = X.shape
    params = init_params(d, hp["hidden"], k, rng)
    Y = np.zeros((n, k))
    Y[np.arange(n), y] = 1.0
    lr, b1, b2, eps = hp["learning_rate"], hp["beta1"], hp["beta2"], hp["eps"]
    m = {key: np.zeros_like(v) for key, v in params.items()}
    v = {key: np.zeros_like(val) for key, val in params.items()}
    step = 0
    batch = hp["batch_size"]
    for _ in range(hp["epochs"]):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            rows = order[start:start + batch]
            _, grads = mlp_loss_grad(params, X[rows], Y[rows], hp["l2"])
            step += 1
            corr1 = 1.0 - b1 ** step
            corr2 = 1.0 - b2 ** step
            for key, g in grads.items():
                m[key] = b1 * m[key] + (1.0 - b1) * g
                v[key] = b2 * v[key] + (1.0 - b2) * g * g
                params[key] -= lr * (m[key] / corr1) / (np.sqrt(v[key] / corr2) + eps)
    return params


def _proba_mlp(params, X, hp):
    return forward(params, X)[2]


register("MLP", _fit_mlp, _proba_mlp)
