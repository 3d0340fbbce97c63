import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegattn.metrics import (
    EvalReport,
    MetricsError,
    balanced_accuracy,
    confusion_matrix,
    drowsy_recall,
    per_class_recall,
    plain_accuracy,
)

Y10 = np.repeat([0, 1, 2], 10)


def test_perfect_confusion():
    assert np.array_equal(confusion_matrix(Y10, Y10), np.diag([10, 10, 10]))
    assert balanced_accuracy(np.diag([10, 10, 10])) == 1.0


def test_all_drowsy_predictions():
    c = confusion_matrix(Y10, np.full(30, 2))
    assert c[:, 2].tolist() == [10, 10, 10]
    assert c[:, :2].sum() == 0


def test_confusion_errors():
    with pytest.raises(MetricsError, match="empty"):
        confusion_matrix([], [])
    with pytest.raises(MetricsError, match="length"):
        confusion_matrix([0, 1], [0])
    with pytest.raises(MetricsError, match="integer codes"):
        confusion_matrix([0, 3], [0, 1])


def test_mean_of_recalls():
    c = np.array([[1, 1, 0], [0, 4, 0], [1, 0, 3]])
    assert per_class_recall(c).tolist() == [0.5, 1.0, 0.75]
    assert balanced_accuracy(c) == 0.75


def test_imbalanced_example():
    # 100/100/800 rows, drowsy recall 0.5 with misses spread to the other two classes
    c = np.array([[100, 0, 0], [0, 100, 0], [200, 200, 400]])
    assert balanced_accuracy(c) == pytest.approx(5 / 6, abs=1e-15)
    assert plain_accuracy(c) == 0.6


def test_drowsy_recall():
    assert drowsy_recall(np.eye(3, dtype=int)) == 1.0
    assert drowsy_recall(np.array([[1, 0, 0], [0, 1, 0], [5, 5, 10]])) == 0.5
    with pytest.raises(MetricsError, match="no drowsy"):
        drowsy_recall(np.array([[1, 0, 0], [0, 1, 0], [0, 0, 0]]))


def test_absent_class_is_nan_and_skipped():
    c = confusion_matrix([0, 0, 1, 1], [0, 1, 1, 1])
    r = per_class_recall(c)
    assert np.isnan(r[2])
    assert balanced_accuracy(c) == 0.75


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=200), st.integers(2, 5))
def test_duplicating_a_class_leaves_balanced_accuracy(pairs, k):
    y_true = np.array([p[0] for p in pairs])
    y_pred = np.array([p[1] for p in pairs])
    base = balanced_accuracy(confusion_matrix(y_true, y_pred))
    for cls in range(3):
        sel = y_true == cls
        yt = np.concatenate([y_true] + [y_true[sel]] * (k - 1))
        yp = np.concatenate([y_pred] + [y_pred[sel]] * (k - 1))
        assert balanced_accuracy(confusion_matrix(yt, yp)) == pytest.approx(base, abs=1e-12)


def test_report_text_round_trip():
    rep = EvalReport.from_predictions(Y10, np.roll(Y10, 3), classifier="svm", seed=2)
    text = rep.to_text()
    assert text.splitlines()[:2] == ["classifier=svm", "seed=2"]
    assert text.endswith("confusion=\n7,0,3\n3,7,0\n0,3,7\n")
    back = EvalReport.from_text(text)
    assert back.balanced_accuracy == rep.balanced_accuracy
    assert np.array_equal(back.confusion, rep.confusion)
    assert back.metadata == {"classifier": "svm", "seed": "2"}
    assert back.to_text() == text
