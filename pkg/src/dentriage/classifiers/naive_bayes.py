from __future__ import annotations

import math

import numpy as np

from .base import register, softmax

_LOG_2PI = math.log(2.0 * math.pi)
VARIANCE_FLOOR = 1e-9


def gaussian_log_pdf(x, mean, variance):
    """Log density of N(mean, variance) at ``x``; variances below 1e-9 are floored."""
    variance = np.maximum(variance, VARIANCE_FLOOR)
    diff = np.asarray(x, dtype=float) - mean
    out = -0.5 * (_LOG_2PI + np.log(variance)) - diff * diff / (2.0 * variance)
    return float(out) if np.ndim(out) == 0 else out


def _class_log_prior(y, k):
    counts = np.bincount(y, minlength=k).astype(float)
    return np.log(counts / counts.sum())


def _fit_multinomial(X, y, k, hp, seed):
    if (X < 0).any():
        raise ValueError("MultinomialNB needs non-negative features")
    alpha = hp["alpha"]
    feature_counts = np.zeros((k, X.shape[1]))
    np.add.at(feature_counts, y, X)
    smoothed = feature_counts + alpha
    log_prob = np.log(smoothed) - np.log(smoothed.sum(axis=1, keepdims=True))
    return {"class_log_prior": _class_log_prior(y, k), "feature_log_prob": log_prob}


def _proba_multinomial(params, X, hp):
    joint = X @ params["feature_log_prob"].T + params["class_log_prior"]
    return softmax(joint)


def _fit_gaussian(X, y, k, hp, seed):
    means = np.zeros((k, X.shape[1]))
    variances = np.zeros((k, X.shape[1]))
    for c in range(k):
        Xc = X[y == c]
        means[c] = Xc.mean(axis=0)
        variances[c] = Xc.var(axis=0)
    # absolute epsilon scaled by the largest feature variance, then the hard floor
    epsilon = hp["var_smoothing"] * float(X.var(axis=0).max())
    variances = np.maximum(variances + epsilon, VARIANCE_FLOOR)
    return {"class_log_prior": _class_log_prior(y, k), "means": means, "variances": variances}


def _joint_gaussian(params, X):
    means, variances = params["means"], params["variances"]
    ll = np.stack([gaussian_log_pdf(X, means[c], variances[c]).sum(axis=1) for c in range(len(means))], axis=1)
    return ll + params["class_log_prior"]


def _proba_gaussian(params, X, hp):
    return softmax(_joint_gaussian(params, X))


register("MultinomialNB", _fit_multinomial, _proba_multinomial)
register("GaussianNB", _fit_gaussian, _proba_gaussian)
