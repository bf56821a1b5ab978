"""The nine classical classifiers behind one ``fit`` / ``predict`` interface."""

from . import linear, mlp, naive_bayes, svm, trees  # noqa: F401  (registers algorithms)
from .base import (
    ALGORITHMS,
    DEFAULT_HYPERPARAMS,
    DISPLAY_NAMES,
    ClassifierSpec,
    TrainedModel,
    dumps,
    fit,
    loads,
    model_from_dict,
    model_to_dict,
    predict,
    predict_proba,
    softmax,
)
from .naive_bayes import gaussian_log_pdf
from .svm import hinge_subgradient_step, rbf_kernel
from .trees import gini_impurity

__all__ = [
    "ALGORITHMS",
    "DEFAULT_HYPERPARAMS",
    "DISPLAY_NAMES",
    "ClassifierSpec",
    "TrainedModel",
    "dumps",
    "fit",
    "gaussian_log_pdf",
    "gini_impurity",
    "hinge_subgradient_step",
    "loads",
    "model_from_dict",
    "model_to_dict",
    "predict",
    "predict_proba",
    "rbf_kernel",
    "softmax",
]
