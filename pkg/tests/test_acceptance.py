"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``criterion N: PASS|FAIL`` line (also collected into the
terminal summary) before asserting.
"""

import json
import os
import time

import numpy as np
import pytest

from dentriage import classifiers, synthetic
from dentriage.classifiers import ClassifierSpec
from dentriage.classifiers.linear import softmax_loss_grad
from dentriage.classifiers.mlp import init_params, mlp_loss_grad
from dentriage.cli import main
from dentriage.corpus import Dataset, Stage, save_corpus
from dentriage.eval import Balancing, BenchmarkGrid, ConfusionMatrix, compute_metrics, confusion_matrix, run_benchmark
from dentriage.features import build_vocabulary, tfidf_vector, to_dense
from dentriage.fewshot import FsbmConfig, ProjectionHead, fsbm_fit, fsbm_predict_many, pair_loss_grad
from dentriage.llm_icl import Demonstration, ParseFailure, build_prompt, make_template

from conftest import ACCEPTANCE_LINES, FIXTURES
from oracles import BruteTree, central_difference, dense_tfidf, relative_error, weighted_metrics
from test_fewshot import clustered_corpus

SEEDS = range(5)
TABLE4 = [67, 354, 219, 64]


def verdict(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


# --- 1 ----------------------------------------------------------------------

def test_criterion_1_distribution_reproduction(tmp_path, capsys):
    path = tmp_path / "reports.csv"
    save_corpus(synthetic.generate_synthetic_corpus(0, TABLE4, confusion=0.3), path)
    start = time.perf_counter()
    code = main(["prepare", "--corpus", str(path), "--out", str(tmp_path / "out"), "--json"])
    elapsed = time.perf_counter() - start
    summary = json.loads(capsys.readouterr().out)
    s1, s2 = summary["stages"]["1"], summary["stages"]["2"]
    ok = (code == 0
          and list(s1["distribution"].values()) == TABLE4
          and list(s2["distribution"].values()) == [421, 283]
          and len(set(s1["train_balanced"].values())) == 1
          and len(set(s2["train_balanced"].values())) == 1
          and elapsed < 1.0)
    verdict(1, ok, f"stage1 {list(s1['distribution'].values())} stage2 {list(s2['distribution'].values())} "
                   f"balanced train {list(s1['train_balanced'].values())} / {list(s2['train_balanced'].values())} "
                   f"in {elapsed:.2f}s")


# --- 2 ----------------------------------------------------------------------

def test_criterion_2_tfidf_oracle():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n_terms = int(rng.integers(1, 13))
        terms = [f"t{i}" for i in range(n_terms)]
        docs = [[terms[j] for j in rng.integers(0, n_terms, size=rng.integers(0, 7))]
                for _ in range(int(rng.integers(1, 9)))]
        if not any(docs):
            docs[0].append(terms[0])
        vocab = build_vocabulary(docs)
        oracle_terms, oracle_rows = dense_tfidf(docs)
        got = to_dense([tfidf_vector(d, vocab) for d in docs], len(vocab))
        if vocab.terms != oracle_terms:
            worst = np.inf
            break
        worst = max(worst, float(np.abs(got - np.array(oracle_rows)).max(initial=0.0)))
    elapsed = time.perf_counter() - start
    verdict(2, worst <= 1e-9 and elapsed < 5.0, f"max |diff| {worst:.2e} over 200 corpora in {elapsed:.2f}s")


# --- 3 ----------------------------------------------------------------------

def test_criterion_3_metric_oracle():
    rng = np.random.default_rng(3)
    worst, recall_is_accuracy = 0.0, True
    for _ in range(500):
        k = int(rng.integers(2, 6))
        counts = rng.integers(0, 50, size=(k, k))
        counts[0, 0] += 1
        m = compute_metrics(ConfusionMatrix(counts))
        want = weighted_metrics(counts.tolist())
        got = (m.accuracy, m.precision, m.recall, m.f_measure)
        worst = max(worst, max(abs(a - b) for a, b in zip(got, want)))
        recall_is_accuracy &= m.recall == m.accuracy
    verdict(3, worst <= 1e-12 and recall_is_accuracy,
            f"max |diff| {worst:.1e} over 500 matrices; recall == accuracy on all: {recall_is_accuracy}")


# --- 4 ----------------------------------------------------------------------

def test_criterion_4_gradient_checks():
    rng = np.random.default_rng(4)
    start = time.perf_counter()
    worst = {"logistic": 0.0, "mlp": 0.0, "fsbm head": 0.0}
    for _ in range(50):
        n, d, k = int(rng.integers(2, 8)), int(rng.integers(1, 6)), int(rng.integers(2, 5))
        X, Y = rng.normal(size=(n, d)), np.eye(k)[rng.integers(0, k, size=n)]
        p = {"W": rng.normal(size=(d, k)), "b": rng.normal(size=k)}
        _, dW, db = softmax_loss_grad(p["W"], p["b"], X, Y, 0.01)
        num = central_difference(lambda: softmax_loss_grad(p["W"], p["b"], X, Y, 0.01)[0], p)
        worst["logistic"] = max(worst["logistic"], relative_error(dW, num["W"]), relative_error(db, num["b"]))

        h = int(rng.integers(2, 6))
        q = init_params(d, h, k, rng)
        q["b1"] = rng.normal(0, 0.5, size=h)
        _, grads = mlp_loss_grad(q, X, Y, 0.01)
        num = central_difference(lambda: mlp_loss_grad(q, X, Y, 0.01)[0], q)
        worst["mlp"] = max(worst["mlp"], *(relative_error(grads[key], num[key]) for key in q))

        dout = int(rng.integers(2, 6))
        Ea, Eb = rng.normal(size=(n, d + 1)), rng.normal(size=(n, d + 1))
        T = rng.integers(0, 2, size=n).astype(float)
        r = {"W": rng.normal(size=(d + 1, dout)), "b": rng.normal(size=dout)}
        _, gW, gb = pair_loss_grad(ProjectionHead(r["W"], r["b"]), Ea, Eb, T)
        num = central_difference(lambda: pair_loss_grad(ProjectionHead(r["W"], r["b"]), Ea, Eb, T)[0].mean(), r)
        worst["fsbm head"] = max(worst["fsbm head"], relative_error(gW, num["W"]), relative_error(gb, num["b"]))
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-4 and elapsed < 30
    verdict(4, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f" (50 draws each, {elapsed:.1f}s)")


# --- 5 ----------------------------------------------------------------------

def test_criterion_5_separable_sanity(separable_stage2):
    start = time.perf_counter()
    corpus = Dataset(separable_stage2.examples)  # four-class view; the grid collapses it to stage 2
    grid = BenchmarkGrid(stages=(2,), balancings=("balanced",))
    cells = run_benchmark(corpus, grid, base_seed=5)
    acc = {c.classifier_name: c.metrics.accuracy if c.ok else 0.0 for c in cells}
    ds, provider = clustered_corpus(seed=5, per_class=50)
    idx = np.arange(len(ds))
    train, test = ds.subset(idx[idx % 5 != 0]), ds.subset(idx[idx % 5 == 0])
    model = fsbm_fit(train, provider, FsbmConfig(per_class=40), seed=5)
    clustered = float((fsbm_predict_many(model, test.texts) == test.labels()).mean())
    elapsed = time.perf_counter() - start
    ok = min(acc.values()) >= 0.9 and clustered >= 0.95 and elapsed < 180 and len(acc) == 10
    detail = ", ".join(f"{k} {v:.3f}" for k, v in acc.items())
    verdict(5, ok, f"{detail}; FSBM clustered {clustered:.3f} ({elapsed:.0f}s)")


# --- 6 and 7 share one grid over five seeds ---------------------------------

@pytest.fixture(scope="module")
def seeded_grid():
    grid = BenchmarkGrid(fsbm=None)
    cells = []
    for seed in SEEDS:
        corpus = synthetic.generate_synthetic_corpus(seed, TABLE4, confusion=0.3)
        cells += [(seed, c) for c in run_benchmark(corpus, grid, base_seed=seed)]
    assert all(c.ok for _, c in cells)
    return cells


def test_criterion_6_balancing_direction(seeded_grid):
    def f1(balancing):
        return [c.metrics.f_measure for _, c in seeded_grid
                if c.stage is Stage.STAGE1 and c.balancing is balancing]

    def per_seed(balancing):
        return [float(np.median([c.metrics.f_measure for s, c in seeded_grid
                                 if s == seed and c.stage is Stage.STAGE1 and c.balancing is balancing]))
                for seed in SEEDS]

    imb, bal = float(np.median(f1(Balancing.IMBALANCED))), float(np.median(f1(Balancing.BALANCED)))
    nested = float(np.median(per_seed(Balancing.IMBALANCED))), float(np.median(per_seed(Balancing.BALANCED)))
    verdict(6, bal > imb, f"median weighted F1 over 9 classifiers x 5 seeds: imbalanced {imb:.3f}, "
                          f"oversampled {bal:.3f} (median of per-seed medians {nested[0]:.3f} vs {nested[1]:.3f})")


def test_criterion_7_binary_beats_four_class(seeded_grid):
    def acc(stage):
        return float(np.median([c.metrics.accuracy for _, c in seeded_grid if c.stage is stage]))

    s1, s2 = acc(Stage.STAGE1), acc(Stage.STAGE2)
    verdict(7, s2 > s1, f"median accuracy over 9 classifiers x 2 balancings x 5 seeds: stage 1 {s1:.3f}, stage 2 {s2:.3f}")


# --- 8 ----------------------------------------------------------------------

def test_criterion_8_tree_oracles():
    rng = np.random.default_rng(8)
    tree_ok = forest_ok = 0
    for _ in range(100):
        n, d, k = int(rng.integers(4, 17)), int(rng.integers(1, 5)), int(rng.integers(2, 4))
        X = rng.integers(0, 2, size=(n, d)).astype(float)
        y = rng.integers(0, k, size=n)
        y[:k] = np.arange(k)
        grid = np.array([[(i >> j) & 1 for j in range(d)] for i in range(2 ** d)], dtype=float)
        dt = classifiers.fit(ClassifierSpec("DecisionTree"), X, y, k)
        tree_ok += classifiers.predict(dt, grid).tolist() == BruteTree(X.tolist(), y.tolist(), k).predict(grid.tolist())
        rf = classifiers.fit(ClassifierSpec("RandomForest", {"n_trees": 1, "bootstrap": False, "max_features": d}),
                             X, y, k)
        forest_ok += np.array_equal(classifiers.predict(rf, grid), classifiers.predict(dt, grid))
    verdict(8, tree_ok == forest_ok == 100,
            f"tree == brute-force CART on {tree_ok}/100, single-tree forest == tree on {forest_ok}/100")


# --- 9 ----------------------------------------------------------------------

def test_criterion_9_llm_offline(tmp_path, capsys):
    golden_dir = os.path.join(FIXTURES, "llm_eval_golden")
    corpus = os.path.join(FIXTURES, "llm_eval_corpus.csv")
    code = main(["llm-eval", "--corpus", corpus, "--mock", "--seed", "4", "--out", str(tmp_path)])
    capsys.readouterr()
    names = sorted(os.listdir(golden_dir))
    identical = []
    for name in names:
        with open(os.path.join(golden_dir, name), "rb") as fh:
            identical.append((tmp_path / name).read_bytes() == fh.read())
    shots = [Demonstration("<example 1>", 0), Demonstration("<example 2>", 1)]
    templates_ok = []
    for style in ("simple", "complicated"):
        with open(os.path.join(FIXTURES, "prompts", f"{style}_stage2.txt"), "rb") as fh:
            templates_ok.append(build_prompt(make_template(style, 2), shots, "<text>").encode("utf-8") == fh.read())
    summary = json.loads((tmp_path / "llm_eval.json").read_text())
    failures = summary["results"]["simple"]["parse_failures"]
    cm = confusion_matrix([0, 1, 1], [ParseFailure("?"), ParseFailure("?"), 1], 2)
    scored_wrong = compute_metrics(cm).accuracy == pytest.approx(1 / 3) and failures > 0
    ok = code == 0 and all(identical) and all(templates_ok) and scored_wrong
    verdict(9, ok, f"golden run files identical {sum(identical)}/{len(names)}, prompt fixtures identical "
                   f"{sum(templates_ok)}/2, parse failures in golden run {failures} scored as wrong: {scored_wrong}")


# --- 10 ---------------------------------------------------------------------

def test_criterion_10_determinism(tmp_path, capsys):
    path = tmp_path / "reports.csv"
    save_corpus(synthetic.generate_synthetic_corpus(10, [15, 80, 50, 15], confusion=0.3), path)
    out = tmp_path / "run"
    snapshots = []
    for _ in range(2):
        assert main(["benchmark", "--corpus", str(path), "--seed", "10", "--out", str(out),
                     "--llm", "--llm-mock"]) == 0
        snapshots.append({p.name: p.read_bytes() for p in out.iterdir() if p.name != "timings.json"})
    capsys.readouterr()
    names = sorted(snapshots[0])
    same = [snapshots[0][n] == snapshots[1].get(n) for n in names]
    n_cells = json.loads(snapshots[0]["benchmark.json"])["n_cells"]
    verdict(10, all(same) and n_cells == 48,
            f"{sum(same)}/{len(names)} report files byte-identical across two {n_cells}-cell runs")
