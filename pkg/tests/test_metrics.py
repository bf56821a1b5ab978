from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dentriage.eval import ConfusionMatrix, compute_metrics, confusion_matrix, is_failure
from dentriage.llm_icl import ParseFailure

from oracles import weighted_metrics


def test_confusion_example():
    cm = confusion_matrix([0, 0, 0, 1, 1, 1], [0, 0, 1, 1, 1, 1], 2)
    assert cm.tolist() == [[2, 1], [0, 3]]
    assert cm.total == 6


def test_confusion_perfect_and_empty():
    assert confusion_matrix([0, 1, 2], [0, 1, 2], 3).tolist() == np.eye(3, dtype=int).tolist()
    assert confusion_matrix([], [], 4).tolist() == [[0] * 4] * 4


def test_confusion_errors():
    with pytest.raises(ValueError):
        confusion_matrix([0, 1], [0], 2)
    with pytest.raises(ValueError):
        confusion_matrix([0], [2], 2)
    with pytest.raises(ValueError):
        confusion_matrix([0], [True], 2)
    with pytest.raises(ValueError):
        ConfusionMatrix([[1, 2, 3]])
    with pytest.raises(ValueError):
        ConfusionMatrix([[1, -1], [0, 0]])


def test_parse_failures_count_as_wrong():
    fail = ParseFailure("no idea")
    assert is_failure(fail) and is_failure(None) and not is_failure(0)
    cm = confusion_matrix([0, 1, 1, 3], [fail, None, 1, fail], 4)
    assert np.trace(cm.counts) == 1
    assert cm.total == 4
    assert compute_metrics(cm).accuracy == 0.25


def test_metrics_hand_example():
    m = compute_metrics(ConfusionMatrix([[2, 1], [0, 3]]))
    assert m.accuracy == pytest.approx(5 / 6, abs=1e-12)
    assert m.precision == pytest.approx(0.875, abs=1e-12)
    assert m.recall == pytest.approx(5 / 6, abs=1e-12)
    assert m.f_measure == pytest.approx((0.8 + 6 / 7) / 2, abs=1e-12)
    assert m.rounded(3) == ("0.833", "0.875", "0.833", "0.829")


def test_metrics_perfect_diagonal():
    m = compute_metrics(ConfusionMatrix(np.diag([3, 1, 4])))
    assert (m.accuracy, m.precision, m.recall, m.f_measure) == (1.0, 1.0, 1.0, 1.0)


def test_metrics_empty_and_bad_averaging():
    with pytest.raises(ValueError):
        compute_metrics(ConfusionMatrix(np.zeros((2, 2))))
    with pytest.raises(ValueError):
        compute_metrics(ConfusionMatrix([[1]]), "macro")


def test_class_never_predicted_has_zero_precision():
    m = compute_metrics(ConfusionMatrix([[0, 2], [0, 2]]))
    assert m.precision == pytest.approx(0.25)
    assert m.f_measure == pytest.approx(0.5 * (2 * 0.5 / 1.5))


matrices = st.integers(1, 5).flatmap(
    lambda k: st.lists(st.lists(st.integers(0, 40), min_size=k, max_size=k), min_size=k, max_size=k)
).filter(lambda m: sum(map(sum, m)) > 0)


@given(matrices)
def test_metrics_match_oracle(counts):
    m = compute_metrics(ConfusionMatrix(counts))
    acc, p, r, f = weighted_metrics(counts)
    for got, want in ((m.accuracy, acc), (m.precision, p), (m.recall, r), (m.f_measure, f)):
        assert abs(got - want) <= 1e-12
    assert m.recall == m.accuracy
    assert all(0.0 <= v <= 1.0 for v in m.to_dict().values())


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=60))
def test_accuracy_is_trace_over_total(pairs):
    cm = confusion_matrix([t for t, _ in pairs], [p for _, p in pairs], 4)
    assert cm.total == len(pairs)
    assert compute_metrics(cm).accuracy == float(Fraction(sum(t == p for t, p in pairs), len(pairs)))
