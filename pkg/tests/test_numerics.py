import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from seal.numerics import (AdamState, CsrMatrix, RngStream, ShapeError, adam_step, dropout,
                           finite_difference_check, finite_difference_report, leaky_relu,
                           leaky_relu_mask, log_softmax_rows, logsumexp_rows, relu, relu_mask,
                           sigmoid, softmax_rows, softplus, sparse_dropout, spmm, spmm_t)

from conftest import rand_csr

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_spmm_identity_and_hand_product():
    b = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(spmm(CsrMatrix.from_dense(np.eye(3)), b), b)
    a = CsrMatrix.from_dense(np.full((2, 2), 0.5))
    assert np.allclose(spmm(a, np.array([[1.0], [3.0]])), [[2.0], [2.0]])


def test_spmm_dimension_mismatch():
    a = CsrMatrix.from_dense(np.eye(3))
    with pytest.raises(ShapeError):
        spmm(a, np.ones((4, 2)))
    with pytest.raises(ShapeError):
        spmm_t(a, np.ones((2, 2)))


def test_spmm_matches_dense_on_random_20x20(rng):
    for _ in range(20):
        a, dense = rand_csr(rng, 20, 20)
        b = rng.standard_normal((20, 7))
        assert np.max(np.abs(spmm(a, b) - dense @ b)) < 1e-12
        assert np.max(np.abs(spmm_t(a, b) - dense.T @ b)) < 1e-12


def test_spmm_empty_rows(rng):
    dense = np.zeros((5, 4))
    dense[1, 2] = 3.0
    dense[4, 0] = -1.0
    b = rng.standard_normal((4, 3))
    assert np.allclose(spmm(CsrMatrix.from_dense(dense), b), dense @ b)


def test_activation_examples():
    assert relu(np.array(-1.0)) == 0 and relu(np.array(2.0)) == 2
    assert leaky_relu(np.array(-1.0), 0.2) == pytest.approx(-0.2)
    assert relu_mask(np.array([0.0]))[0] == 0.0
    assert leaky_relu_mask(np.array([0.0]), 0.2)[0] == pytest.approx(0.2)
    assert np.array_equal(leaky_relu_mask(np.array([-3.0, 2.0])), [0.2, 1.0])


def test_softmax_examples():
    assert np.allclose(softmax_rows(np.array([[0.0, 0.0]])), [[0.5, 0.5]])
    out = softmax_rows(np.array([[1000.0, 0.0]]))
    assert np.all(np.isfinite(out)) and np.allclose(out, [[1.0, 0.0]])


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 8)), elements=finite),
       st.floats(-100, 100))
def test_softmax_rows_sum_and_shift(x, c):
    p = softmax_rows(x)
    assert np.all(p >= 0)
    assert np.max(np.abs(p.sum(axis=1) - 1)) < 1e-12
    assert np.max(np.abs(softmax_rows(x + c) - p)) < 1e-12


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 8)), elements=finite))
def test_log_softmax_and_lse_consistent(x):
    assert np.allclose(np.exp(log_softmax_rows(x)), softmax_rows(x), atol=1e-12)
    assert np.allclose(logsumexp_rows(x), np.log(np.exp(x).sum(axis=1)))


def test_softplus_sigmoid_stable():
    x = np.array([-1000.0, -5.0, 0.0, 5.0, 1000.0])
    assert np.all(np.isfinite(softplus(x))) and np.all(np.isfinite(sigmoid(x)))
    assert softplus(np.array(0.0)) == pytest.approx(np.log(2))
    assert sigmoid(np.array(1000.0)) == 1.0 and sigmoid(np.array(-1000.0)) == 0.0
    mid = np.array([-3.0, 0.5, 2.0])
    assert np.allclose(sigmoid(mid), 1 / (1 + np.exp(-mid)))


def test_dropout_disabled_and_zero_rate():
    x = np.arange(12.0).reshape(3, 4)
    out, mask = dropout(x, 0.5, RngStream(0, "d"), enabled=False)
    assert np.array_equal(out, x) and np.array_equal(mask, np.ones_like(x))
    out, _ = dropout(x, 0.0, RngStream(0, "d"))
    assert np.array_equal(out, x)


def test_dropout_rate_one_rejected():
    with pytest.raises(ValueError):
        dropout(np.ones(3), 1.0, RngStream(0))


def test_dropout_survival_fraction_and_scale():
    x = np.ones((100, 1000))
    out, mask = dropout(x, 0.5, RngStream(3, "stat"))
    kept = (mask > 0).mean()
    assert abs(kept - 0.5) < 0.01
    assert set(np.unique(out)) <= {0.0, 2.0}
    # inverted dropout preserves the mean
    assert abs(out.mean() - 1.0) < 0.02


def test_sparse_dropout_keeps_pattern():
    a = CsrMatrix.from_dense(np.array([[1.0, 0, 2.0], [0, 3.0, 0]]))
    out, mask = sparse_dropout(a, 0.5, RngStream(1))
    assert np.array_equal(out.indices, a.indices) and mask.shape == a.data.shape


def test_rng_stream_substreams_independent_and_reproducible():
    a = RngStream(5, "run").substream("dropout-G").generator.random(4)
    b = RngStream(5, "run").substream("dropout-G").generator.random(4)
    c = RngStream(5, "run").substream("dropout-D").generator.random(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    s = RngStream(9, "x")
    assert s.counter == 0
    s.generator.random(10)
    assert s.counter > 0
    assert RngStream.algorithm.startswith("philox")


def test_adam_first_step_example():
    state = AdamState.zeros_like([np.zeros(1)], learning_rate=0.01)
    (p,), new = adam_step([np.zeros(1)], [np.array([0.5])], state)
    assert p[0] == pytest.approx(-0.01 * 0.5 / (0.5 + 1e-8))
    assert new.step_count == 1 and state.step_count == 0


def test_adam_zero_grad_and_purity():
    params = [np.array([1.0, -2.0]), np.ones((2, 2))]
    state = AdamState.zeros_like(params)
    out, _ = adam_step(params, [np.zeros(2), np.zeros((2, 2))], state)
    assert all(np.array_equal(a, b) for a, b in zip(out, params))
    g = [np.array([0.3, -0.1]), np.full((2, 2), 0.2)]
    o1, s1 = adam_step(params, g, state)
    o2, s2 = adam_step(params, g, state)
    assert all(np.array_equal(a, b) for a, b in zip(o1, o2))
    assert all(np.all(v >= 0) for v in s1.second_moment)


def test_adam_shape_mismatch():
    state = AdamState.zeros_like([np.zeros(2)])
    with pytest.raises((ShapeError, ValueError)):
        adam_step([np.zeros(2)], [np.zeros(3)], state)


def test_finite_difference_examples(rng):
    p = [rng.standard_normal(5), rng.standard_normal((2, 3))]
    loss = lambda ws: 0.5 * sum(float((w * w).sum()) for w in ws)
    assert finite_difference_check(loss, p, [w.copy() for w in p]) < 1e-7
    doubled = finite_difference_check(loss, p, [2 * w for w in p])
    assert doubled == pytest.approx(1 / 3, abs=1e-6)


def test_finite_difference_skips_kinks():
    p = [np.array([1e-4, 1.0])]
    loss = lambda ws: float(np.abs(ws[0]).sum())
    rep = finite_difference_report(loss, p, [np.array([1.0, 1.0])],
                                   kinks=lambda ws: ws[0] > 0)
    assert rep.skipped == 1 and rep.checked == 1 and rep.max_error < 1e-9
