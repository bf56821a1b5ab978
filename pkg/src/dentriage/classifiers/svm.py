"""One-vs-rest SVMs trained with Pegasos (primal for linear, kernelized for RBF)."""

from __future__ import annotations

import numpy as np

from .base import register, softmax


def hinge_subgradient_step(weights, bias, x, y, lam: float, step: float):
    """One Pegasos update on example ``(x, y)``.

    Weights always shrink by ``(1 - step * lam)``; the hinge term
    ``step * y * x`` (and ``step * y`` for the bias) is added only when the
    margin ``y * (w.x + b)`` is below 1. ``weights`` may be a stack of
    one-vs-rest rows ``(k, d)`` with matching ``bias`` and ``y`` of shape ``(k,)``.
    """
    if step <= 0 or lam < 0:
        raise ValueError("step must be > 0 and lam >= 0")
    w = np.asarray(weights, dtype=float)
    b = np.asarray(bias, dtype=float)
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    margin = y * (w @ x + b)
    push = np.where(margin < 1.0, step * y, 0.0)
    new_w = (1.0 - step * lam) * w + np.multiply.outer(push, x)
    new_b = b + push
    if new_w.ndim == 1:
        return new_w, float(new_b)
    return new_w, new_b


def hinge_objective(weights, bias, x, y, lam) -> float:
    w = np.asarray(weights, dtype=float)
    return max(0.0, 1.0 - y * (float(w @ x) + bias)) + 0.5 * lam * float(w @ w)


def rbf_kernel(u, v, gamma: float) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    diff = u - v
    return float(np.exp(-gamma * float(diff @ diff)))


def rbf_gram(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def resolve_gamma(gamma, X: np.ndarray) -> float:
    """``"auto"`` is 1/d; ``"scale"`` is 1/(d * Var(X)), which equals 1/d for unit-variance features."""
    d = X.shape[1]
    if gamma == "auto":
        return 1.0 / d
    if gamma == "scale":
        var = float(X.var())
        return 1.0 / (d * var) if var > 0 else 1.0 / d
    return float(gamma)


def _ovr_targets(y, k):
    Ypm = -np.ones((len(y), k))
    Ypm[np.arange(len(y)), y] = 1.0
    return Ypm


def _fit_linear(X, y, k, hp, seed):
    lam, epochs = hp["lam"], hp["epochs"]
    n, d = X.shape
    Ypm = _ovr_targets(y, k)
    # intercept rides on a constant feature, so it is shrunk with the weights
    Xa = np.hstack([X, np.ones((n, 1))])
    W = np.zeros((k, d + 1))
    zero_bias = np.zeros(k)
    radius = 1.0 / np.sqrt(lam)
    rng = np.random.default_rng(seed)
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            W, _ = hinge_subgradient_step(W, zero_bias, Xa[i], Ypm[i], lam, 1.0 / (lam * t))
            norms = np.sqrt((W * W).sum(axis=1))
            over = norms > radius
            if over.any():
                W[over] *= (radius / norms[over])[:, None]
    return {"W": W[:, :-1].copy(), "b": W[:, -1].copy()}


def _proba_linear(params, X, hp):
    return softmax(X @ params["W"].T + params["b"])


def _fit_rbf(X, y, k, hp, seed):
    lam, epochs = hp["lam"], hp["epochs"]
    n, d = X.shape
    gamma = resolve_gamma(hp["gamma"], X)
    Ypm = _ovr_targets(y, k)
    G = rbf_gram(X, X, gamma)
    # A[c, j] = alpha[c, j] * y[c, j]; alpha counts margin violations of example j
    A = np.zeros((k, n))
    rng = np.random.default_rng(seed)
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            margins = Ypm[i] * (A @ G[:, i]) / (lam * t)
            hit = margins < 1.0
            A[hit, i] += Ypm[i, hit]
    coef = A / (lam * t)
    support = np.flatnonzero(np.abs(A).sum(axis=0) > 0)
    return {"gamma": gamma, "support_vectors": X[support].copy(), "coef": coef[:, support].copy()}


def _proba_rbf(params, X, hp):
    if len(params["support_vectors"]) == 0:
        return np.full((X.shape[0], params["coef"].shape[0]), 1.0 / params["coef"].shape[0])
    K = rbf_gram(X, params["support_vectors"], params["gamma"])
    return softmax(K @ params["coef"].T)


register("LinearSVM", _fit_linear, _proba_linear)
register("RbfSVM", _fit_rbf, _proba_rbf)
