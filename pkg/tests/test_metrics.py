import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from seal.metrics import aggregate, confusion_table, f1_scores, macro_f1, mean_std, micro_f1

tables = st.integers(2, 8).flatmap(lambda k: hnp.arrays(np.int64, (k, k), elements=st.integers(0, 50))
                                   ).filter(lambda t: t.sum() > 0)


def test_micro_examples():
    assert micro_f1(np.eye(4) * 5) == 1.0
    assert micro_f1([[3, 1], [1, 3]]) == 0.75
    assert micro_f1([[0, 2], [3, 0]]) == 0.0


def test_macro_examples():
    assert macro_f1(np.diag([3, 1, 7])) == 1.0
    assert macro_f1([[2, 0], [2, 0]]) == pytest.approx(1 / 3)
    assert macro_f1([[1, 1], [1, 1]]) == pytest.approx(0.5)


def test_empty_and_bad_tables():
    for bad in (np.zeros((3, 3)), np.ones((2, 3)), [[1, -1], [0, 1]]):
        with pytest.raises(ValueError):
            micro_f1(bad)
        with pytest.raises(ValueError):
            macro_f1(bad)


def test_confusion_table_layout():
    t = confusion_table([0, 0, 1, 2], [0, 1, 1, 1], 3)
    assert t.tolist() == [[1, 1, 0], [0, 1, 0], [0, 1, 0]]
    assert f1_scores([0, 1, 2], [0, 1, 2], 3) == (1.0, 1.0)


@given(tables)
def test_micro_is_accuracy(table):
    y_true = np.repeat(np.repeat(np.arange(len(table)), len(table)), table.ravel())
    y_pred = np.repeat(np.tile(np.arange(len(table)), len(table)), table.ravel())
    assert np.array_equal(confusion_table(y_true, y_pred, len(table)), table)
    assert micro_f1(table) == pytest.approx(np.mean(y_true == y_pred), abs=1e-15)


@given(tables, st.randoms(use_true_random=False))
def test_permutation_invariance(table, rnd):
    perm = list(range(len(table)))
    rnd.shuffle(perm)
    permuted = table[np.ix_(perm, perm)]
    assert micro_f1(permuted) == pytest.approx(micro_f1(table), abs=1e-15)
    assert macro_f1(permuted) == pytest.approx(macro_f1(table), abs=1e-12)
    assert 0 <= macro_f1(table) <= 1


def test_aggregate_examples():
    assert mean_std([0.7, 0.9]) == (pytest.approx(0.8), pytest.approx(0.1414, abs=1e-4))
    assert mean_std([0.42]) == (0.42, 0.0)
    assert mean_std([0.5] * 4)[1] == 0.0
    rows = [dict(micro_f1=0.7, macro_f1=0.6, wall_seconds=1.0),
            dict(micro_f1=0.9, macro_f1=0.6, wall_seconds=3.0)]
    agg = aggregate(rows)
    assert agg["n"] == 2 and agg["macro_f1"]["std"] == 0.0
    assert agg["wall_seconds"]["mean"] == 2.0
    with pytest.raises(ValueError):
        aggregate([])
