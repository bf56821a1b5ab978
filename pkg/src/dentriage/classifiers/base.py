from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

FORMAT_VERSION = 1

DEFAULT_HYPERPARAMS: dict[str, dict[str, Any]] = {
    "MultinomialNB": {"alpha": 1.0},
    "GaussianNB": {"var_smoothing": 1e-9},
    "DecisionTree": {"max_depth": 20, "min_samples_split": 2},
    "RandomForest": {
        "n_trees": 100,
        "bootstrap": True,
        "max_features": "sqrt",
        "max_depth": 20,
        "min_samples_split": 2,
    },
    "GradientBoosting": {"n_rounds": 100, "max_depth": 3, "learning_rate": 0.1, "min_samples_split": 2},
    "LinearSVM": {"lam": 1e-4, "epochs": 20},
    "RbfSVM": {"lam": 1e-4, "epochs": 20, "gamma": "scale"},
    "LogisticRegression": {"l2": 1e-4, "iterations": 500, "learning_rate": 0.1},
    "MLP": {
        "hidden": 100,
        "learning_rate": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "epochs": 200,
        "batch_size": 32,
        "l2": 0.0,
    },
}

ALGORITHMS = tuple(DEFAULT_HYPERPARAMS)

# display names used in reports, same order as the result tables
DISPLAY_NAMES = {
    "GaussianNB": "Gaussian Naive Bayes",
    "DecisionTree": "Decision Tree",
    "GradientBoosting": "Gradient Boosting",
    "RandomForest": "Random Forest",
    "LinearSVM": "Linear SVM",
    "RbfSVM": "RBF kernel SVM",
    "LogisticRegression": "Logistic Regression",
    "MultinomialNB": "Multinomial Naive Bayes",
    "MLP": "MLP",
}


def _check_positive(name: str, value, integer: bool = False, allow_zero: bool = False):
    if isinstance(value, bool) or not isinstance(value, int if integer else (int, float)):
        raise ValueError(f"{name} must be {'an integer' if integer else 'a number'}, got {value!r}")
    if not math.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        raise ValueError(f"{name} out of range: {value!r}")


_INT_PARAMS = {"max_depth", "min_samples_split", "n_trees", "n_rounds", "epochs", "iterations", "hidden", "batch_size"}
_ZERO_OK = {"l2", "var_smoothing"}


@dataclass(frozen=True)
class ClassifierSpec:
    algorithm: str
    hyperparams: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in DEFAULT_HYPERPARAMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {', '.join(ALGORITHMS)}")
        unknown = set(self.hyperparams) - set(DEFAULT_HYPERPARAMS[self.algorithm])
        if unknown:
            raise ValueError(f"unknown hyperparameter(s) for {self.algorithm}: {sorted(unknown)}")
        for key, value in self.resolved().items():
            if key in ("bootstrap",):
                if not isinstance(value, bool):
                    raise ValueError("bootstrap must be a bool")
            elif key == "max_features":
                if value not in (None, "sqrt") and not (isinstance(value, int) and value >= 1):
                    raise ValueError("max_features must be None, 'sqrt' or a positive integer")
            elif key == "gamma":
                if value not in ("scale", "auto"):
                    _check_positive(key, value, allow_zero=True)
            elif key in ("beta1", "beta2"):
                if not 0 <= value < 1:
                    raise ValueError(f"{key} must lie in [0, 1)")
            else:
                _check_positive(key, value, integer=key in _INT_PARAMS, allow_zero=key in _ZERO_OK)
        if self.algorithm in ("DecisionTree", "RandomForest") and self.resolved()["min_samples_split"] < 2:
            raise ValueError("min_samples_split must be at least 2")

    def resolved(self) -> dict[str, Any]:
        return {**DEFAULT_HYPERPARAMS[self.algorithm], **self.hyperparams}

    @property
    def name(self) -> str:
        return self.algorithm

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "hyperparams": dict(self.hyperparams), "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict) -> "ClassifierSpec":
        return cls(data["algorithm"], dict(data.get("hyperparams", {})), int(data.get("seed", 0)))


@dataclass(frozen=True)
class TrainedModel:
    spec: ClassifierSpec
    n_classes: int
    n_features: int
    params: dict[str, Any]


FitFn = Callable[[np.ndarray, np.ndarray, int, dict, int], dict]
ProbaFn = Callable[[dict, np.ndarray, dict], np.ndarray]
_REGISTRY: dict[str, tuple[FitFn, ProbaFn]] = {}


def register(algorithm: str, fit_fn: FitFn, proba_fn: ProbaFn) -> None:
    _REGISTRY[algorithm] = (fit_fn, proba_fn)


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _freeze(obj):
    if isinstance(obj, np.ndarray):
        obj.setflags(write=False)
    elif isinstance(obj, dict):
        for v in obj.values():
            _freeze(v)
    elif isinstance(obj, list):
        for v in obj:
            _freeze(v)
    return obj


def _as_matrix(X, name: str = "features") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError(f"{name} contain non-finite values")
    return X


def fit(spec: ClassifierSpec, features, labels, n_classes: int | None = None) -> TrainedModel:
    """Train ``spec.algorithm`` on a dense ``(n, d)`` matrix and 0-based labels."""
    X = _as_matrix(features)
    y = np.asarray(labels)
    if y.ndim != 1 or len(y) != len(X):
        raise ValueError(f"labels must be a vector of length {len(X)}")
    if len(y) and not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError("labels must be integer class indices")
    y = y.astype(np.int64)
    if len(y) == 0:
        raise ValueError("cannot fit on zero examples")
    if y.min() < 0:
        raise ValueError("labels must be non-negative")
    k = int(y.max()) + 1 if n_classes is None else int(n_classes)
    if y.max() >= k:
        raise ValueError(f"label {int(y.max())} out of range for {k} classes")
    present = np.bincount(y, minlength=k)
    if k < 2 or (present > 0).sum() < 2:
        raise ValueError("need at least two classes with examples")
    if (present == 0).any():
        raise ValueError(f"class(es) {np.flatnonzero(present == 0).tolist()} have no training examples")
    fit_fn, _ = _REGISTRY[spec.algorithm]
    params = fit_fn(X, y, k, spec.resolved(), spec.seed)
    return TrainedModel(spec, k, X.shape[1], _freeze(params))


def predict_proba(model: TrainedModel, x) -> np.ndarray:
    """Class probabilities for one vector ``(d,)`` or a batch ``(n, d)``."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    _, proba_fn = _REGISTRY[model.spec.algorithm]
    P = proba_fn(model.params, X, model.spec.resolved())
    return P[0] if single else P


def predict(model: TrainedModel, x) -> np.ndarray | int:
    P = predict_proba(model, x)
    # np.argmax keeps the first maximum, i.e. the lowest class index on ties
    if P.ndim == 1:
        return int(np.argmax(P))
    return np.argmax(P, axis=1)


def _encode(obj):
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": obj.tolist(), "dtype": str(obj.dtype), "shape": list(obj.shape)}
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _decode(obj):
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.array(obj["__ndarray__"], dtype=obj["dtype"]).reshape(obj["shape"])
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format": "dentriage.model",
        "version": FORMAT_VERSION,
        "spec": model.spec.to_dict(),
        "n_classes": model.n_classes,
        "n_features": model.n_features,
        "params": _encode(model.params),
    }


def model_from_dict(data: dict) -> TrainedModel:
    if data.get("format") != "dentriage.model":
        raise ValueError("not a serialized dentriage model")
    if data.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {data.get('version')!r}")
    spec = ClassifierSpec.from_dict(data["spec"])
    return TrainedModel(spec, int(data["n_classes"]), int(data["n_features"]), _freeze(_decode(data["params"])))


def dumps(model: TrainedModel) -> str:
    # repr-based float encoding in json makes the round trip bit-exact
    return json.dumps(model_to_dict(model), sort_keys=True)


def loads(text: str) -> TrainedModel:
    return model_from_dict(json.loads(text))
