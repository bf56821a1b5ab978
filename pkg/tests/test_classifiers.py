import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dentriage import classifiers
from dentriage.classifiers import ClassifierSpec, TrainedModel, fit, predict, predict_proba
from dentriage.classifiers.linear import softmax_loss_grad
from dentriage.classifiers.mlp import init_params, mlp_loss_grad
from dentriage.classifiers.svm import hinge_objective, resolve_gamma
from dentriage.classifiers.trees import staged_log_loss

from oracles import BruteTree, central_difference, relative_error

ALL = list(classifiers.ALGORITHMS)
FAST = {
    "RandomForest": {"n_trees": 10},
    "GradientBoosting": {"n_rounds": 10},
    "MLP": {"epochs": 30},
}


def spec(alg, seed=0, **hp):
    return ClassifierSpec(alg, {**FAST.get(alg, {}), **hp}, seed)


def blobs(rng, n=60, d=5, k=3):
    centers = rng.normal(0, 3, size=(k, d))
    y = np.arange(n) % k
    X = np.abs(centers[y] + rng.normal(0, 0.5, size=(n, d)))
    return X, y


# --- hand examples ---------------------------------------------------------

def test_multinomial_nb_hand_example():
    X = np.array([[2.0, 1.0], [0.0, 2.0]])
    model = fit(ClassifierSpec("MultinomialNB"), X, [0, 1])
    probs = np.exp(model.params["feature_log_prob"])
    assert probs[0] == pytest.approx([0.6, 0.4])
    assert probs[1] == pytest.approx([0.25, 0.75])
    assert np.exp(model.params["class_log_prior"]) == pytest.approx([0.5, 0.5])
    assert predict(model, [1.0, 0.0]) == 0
    assert predict_proba(model, [1.0, 0.0]) == pytest.approx([0.3 / 0.425, 0.125 / 0.425], abs=1e-4)


def test_zero_logistic_model_predicts_class_zero(rng):
    model = TrainedModel(ClassifierSpec("LogisticRegression"), 3, 4, {"W": np.zeros((4, 3)), "b": np.zeros(3)})
    X = rng.normal(size=(10, 4))
    assert predict(model, X).tolist() == [0] * 10
    assert predict_proba(model, X[0]) == pytest.approx([1 / 3] * 3)


def test_softmax_uniform():
    assert classifiers.softmax(np.zeros(4)) == pytest.approx([0.25] * 4)


@pytest.mark.parametrize("counts, expected", [([7, 0], 0.0), ([5, 5], 0.5), ([2, 1], 4 / 9)])
def test_gini(counts, expected):
    assert classifiers.gini_impurity(counts) == pytest.approx(expected)


def test_gini_rejects_empty():
    with pytest.raises(ValueError):
        classifiers.gini_impurity([0, 0])


def test_gaussian_log_pdf():
    assert classifiers.gaussian_log_pdf(3.0, 3.0, 1.0) == pytest.approx(-0.918939, abs=1e-6)
    assert classifiers.gaussian_log_pdf(4.0, 3.0, 1.0) == pytest.approx(-1.418939, abs=1e-6)
    assert classifiers.gaussian_log_pdf(1.3, 1.0, 0.7) == classifiers.gaussian_log_pdf(0.7, 1.0, 0.7)
    # variance is floored rather than rejected
    assert math.isfinite(classifiers.gaussian_log_pdf(0.0, 0.0, 0.0))


def test_rbf_kernel():
    assert classifiers.rbf_kernel([1, 2], [1, 2], 3.0) == 1.0
    assert classifiers.rbf_kernel([1, 2], [5, -2], 0.0) == 1.0
    assert classifiers.rbf_kernel([0, 0], [1, 0], 1.0) == pytest.approx(0.367879, abs=1e-6)
    with pytest.raises(ValueError):
        classifiers.rbf_kernel([0, 0], [1, 0, 0], 1.0)


def test_hinge_step_examples():
    w, b = classifiers.hinge_subgradient_step([0.0, 0.0], 0.0, [1.0, 0.0], 1, 0.0, 0.5)
    assert w.tolist() == [0.5, 0.0] and b == 0.5
    w0 = np.array([2.0, 1.0])
    w, b = classifiers.hinge_subgradient_step(w0, 0.0, [1.0, 0.0], 1, 0.0, 0.3)
    assert w.tolist() == w0.tolist() and b == 0.0
    with pytest.raises(ValueError):
        classifiers.hinge_subgradient_step(w0, 0.0, [1.0, 0.0], 1, 0.1, 0.0)


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.floats(-1, 1),
       st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.sampled_from([-1, 1]), st.floats(0, 1))
def test_hinge_step_never_increases_objective(w, b, x, y, lam):
    w, x = np.array(w), np.array(x)
    before = hinge_objective(w, b, x, y, lam)
    w2, b2 = classifiers.hinge_subgradient_step(w, b, x, y, lam, 1e-4)
    assert hinge_objective(w2, b2, x, y, lam) <= before + 1e-12


def test_resolve_gamma():
    X = np.array([[0.0, 2.0], [2.0, 0.0]])
    assert resolve_gamma("auto", X) == 0.5
    assert resolve_gamma("scale", X) == pytest.approx(1 / (2 * X.var()))
    assert resolve_gamma(0.25, X) == 0.25


# --- contract --------------------------------------------------------------

@pytest.mark.parametrize("alg", ALL)
def test_single_feature_separation(alg, rng):
    x = np.concatenate([rng.uniform(0.0, 0.2, 20), rng.uniform(0.8, 1.0, 20)])
    X = np.column_stack([x, 1.0 - x])
    y = np.array([0] * 20 + [1] * 20)
    model = fit(spec(alg, epochs=200) if alg == "MLP" else spec(alg), X, y)
    assert (predict(model, X) == y).mean() == 1.0


@pytest.mark.parametrize("alg", ALL)
def test_determinism_and_serialization(alg, rng):
    X, y = blobs(rng)
    a = fit(spec(alg, seed=3), X, y)
    b = fit(spec(alg, seed=3), X, y)
    assert classifiers.dumps(a) == classifiers.dumps(b)
    back = classifiers.loads(classifiers.dumps(a))
    assert np.array_equal(predict_proba(back, X), predict_proba(a, X))
    P = predict_proba(a, X)
    assert P.shape == (len(X), 3)
    assert np.all(P >= 0) and np.allclose(P.sum(axis=1), 1.0, atol=1e-9)


@pytest.mark.parametrize("alg", ALL)
def test_fit_errors(alg):
    X = np.eye(4)
    with pytest.raises(ValueError):
        fit(spec(alg), X, [1, 1, 1, 1])
    bad = X.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        fit(spec(alg), bad, [0, 1, 0, 1])
    model = fit(spec(alg), X, [0, 1, 0, 1])
    with pytest.raises(ValueError):
        predict(model, np.ones(5))


def test_missing_class_rejected():
    with pytest.raises(ValueError):
        fit(ClassifierSpec("MultinomialNB"), np.eye(3), [0, 2, 0], n_classes=3)


def test_model_is_immutable(rng):
    X, y = blobs(rng)
    model = fit(ClassifierSpec("LogisticRegression"), X, y)
    with pytest.raises(ValueError):
        model.params["W"][0, 0] = 1.0


@pytest.mark.parametrize("bad", [
    ("MultinomialNB", {"alpha": 0}),
    ("DecisionTree", {"max_depth": 0}),
    ("LogisticRegression", {"learning_rate": -1.0}),
    ("MLP", {"beta1": 1.0}),
    ("RbfSVM", {"gamma": "wide"}),
    ("LinearSVM", {"margin": 1}),
    ("Perceptron", {}),
])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        ClassifierSpec(*bad)


def test_spec_round_trip():
    s = ClassifierSpec("RandomForest", {"n_trees": 7}, 9)
    assert ClassifierSpec.from_dict(s.to_dict()) == s
    assert s.resolved()["n_trees"] == 7 and s.resolved()["max_depth"] == 20


@given(st.integers(0, 10_000), st.sampled_from(ALL))
def test_probability_simplex_on_random_inputs(seed, alg):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, size=(12, 3))
    y = np.arange(12) % 2
    model = fit(spec(alg, n_trees=3) if alg == "RandomForest" else spec(alg, epochs=5) if alg in ("MLP", "LinearSVM", "RbfSVM") else spec(alg), X, y)
    P = predict_proba(model, rng.uniform(-1, 2, size=(5, 3)))
    assert np.all(P >= 0) and np.allclose(P.sum(axis=1), 1.0, atol=1e-9)


# --- gradients -------------------------------------------------------------

def test_logistic_gradient_check():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n, d, k = rng.integers(2, 8), rng.integers(1, 6), rng.integers(2, 5)
        X = rng.normal(size=(n, d))
        Y = np.eye(k)[rng.integers(0, k, size=n)]
        params = {"W": rng.normal(size=(d, k)), "b": rng.normal(size=k)}
        l2 = float(rng.uniform(0, 0.1))
        _, dW, db = softmax_loss_grad(params["W"], params["b"], X, Y, l2)
        num = central_difference(lambda: softmax_loss_grad(params["W"], params["b"], X, Y, l2)[0], params)
        assert relative_error(dW, num["W"]) <= 1e-4
        assert relative_error(db, num["b"]) <= 1e-4


def test_mlp_gradient_check():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n, d, h, k = rng.integers(2, 6), rng.integers(1, 5), rng.integers(2, 6), rng.integers(2, 4)
        X = rng.normal(size=(n, d))
        Y = np.eye(k)[rng.integers(0, k, size=n)]
        params = init_params(d, h, k, rng)
        params["b1"] = rng.normal(0, 0.5, size=h)
        l2 = float(rng.uniform(0, 0.1))
        _, grads = mlp_loss_grad(params, X, Y, l2)
        num = central_difference(lambda: mlp_loss_grad(params, X, Y, l2)[0], params)
        for key in params:
            assert relative_error(grads[key], num[key]) <= 1e-4, key


# --- trees -----------------------------------------------------------------

@given(st.integers(0, 2**31 - 1))
def test_decision_tree_matches_brute_force_cart(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 17))
    d = int(rng.integers(1, 5))
    k = int(rng.integers(2, 4))
    X = rng.integers(0, 2, size=(n, d)).astype(float)
    y = rng.integers(0, k, size=n)
    y[:k] = np.arange(k)  # every class present
    model = fit(ClassifierSpec("DecisionTree"), X, y, k)
    oracle = BruteTree(X.tolist(), y.tolist(), k)
    grid = np.array([[(i >> j) & 1 for j in range(d)] for i in range(2 ** d)], dtype=float)
    assert predict(model, grid).tolist() == oracle.predict(grid.tolist())
    assert predict(model, X).tolist() == oracle.predict(X.tolist())


@given(st.integers(0, 2**31 - 1))
def test_depth_limited_tree_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 3, size=(14, 3)).astype(float)
    y = rng.integers(0, 3, size=14)
    y[:3] = [0, 1, 2]
    model = fit(ClassifierSpec("DecisionTree", {"max_depth": 2, "min_samples_split": 4}), X, y, 3)
    oracle = BruteTree(X.tolist(), y.tolist(), 3, max_depth=2, min_samples_split=4)
    assert predict(model, X).tolist() == oracle.predict(X.tolist())


@pytest.mark.parametrize("max_features", [None, 6])
def test_single_tree_forest_equals_decision_tree(max_features, rng):
    X, y = blobs(rng, n=80, d=6, k=4)
    X = np.round(X, 1)
    dt = fit(ClassifierSpec("DecisionTree"), X, y)
    rf = fit(ClassifierSpec("RandomForest", {"n_trees": 1, "bootstrap": False, "max_features": max_features}), X, y)
    Q = rng.uniform(0, X.max(), size=(200, 6))
    assert np.array_equal(predict(dt, Q), predict(rf, Q))
    assert np.array_equal(dt.params["tree"]["threshold"], rf.params["trees"][0]["threshold"])


def test_forest_tree_seeds_are_per_tree(rng):
    X, y = blobs(rng)
    a = fit(ClassifierSpec("RandomForest", {"n_trees": 4}, 5), X, y)
    b = fit(ClassifierSpec("RandomForest", {"n_trees": 6}, 5), X, y)
    # trees 0..3 depend only on (seed, tree index)
    for ta, tb in zip(a.params["trees"], b.params["trees"]):
        assert np.array_equal(ta["threshold"], tb["threshold"])


def test_boosting_log_loss_monotone(table4_corpus):
    from dentriage.features import build_vocabulary, tfidf_vector, to_dense, preprocess_texts
    from dentriage.preprocess import PipelineConfig, default_lexicon

    ds = table4_corpus.subset(range(300))
    docs = preprocess_texts(ds.texts, PipelineConfig(enable_spellcheck=False), default_lexicon())
    vocab = build_vocabulary(docs)
    X = to_dense([tfidf_vector(d, vocab) for d in docs], len(vocab))
    model = fit(ClassifierSpec("GradientBoosting", {"n_rounds": 30}), X, ds.labels(), 4)
    losses = staged_log_loss(model.params, X, ds.labels())
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0]
