import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from seal.discriminator import (disc_forward, disc_loss_and_grads, disc_sup_loss,
                                disc_total_loss, disc_unsup_loss, disc_unsup_loss_from_lse,
                                feature_matching_term, fm_value, init_disc_params,
                                labeled_prob_from_logits, train_d_epoch)
from seal.gradcheck import check_disc, check_fm_reps, check_likelihood_reps, tiny_problem
from seal.numerics import RngStream, ShapeError, softmax_rows


@pytest.fixture(scope="module")
def disc():
    return init_disc_params(16, (128, 128), 3, RngStream(0, "d"))


def test_labeled_prob_examples():
    assert labeled_prob_from_logits(np.zeros((1, 3)))[0] == pytest.approx(0.75)
    assert labeled_prob_from_logits(np.array([[math.log(3)]]))[0] == pytest.approx(0.75)
    p = labeled_prob_from_logits(np.array([[700.0, 0.0, 0.0]]))[0]
    assert np.isfinite(p) and p == pytest.approx(1.0)


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 8)),
                  elements=st.floats(-30, 30, allow_nan=False)))
def test_labeled_prob_strictly_inside(logits):
    p = labeled_prob_from_logits(logits)
    assert np.all(p > 0) and np.all(p < 1)


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 30), st.integers(3, 9)),
                  elements=st.floats(-50, 50, allow_nan=False)))
def test_k_plus_one_equivalence(rows):
    shifted = rows[:, :-1] - rows[:, -1:]
    lhs = 1.0 - softmax_rows(rows)[:, -1]
    assert np.max(np.abs(lhs - labeled_prob_from_logits(shifted))) < 1e-12


def test_sup_loss_examples():
    assert disc_sup_loss(np.array([[50.0, 0.0], [0.0, 50.0]]), [0, 1]) < 1e-20
    assert disc_sup_loss(np.zeros((4, 5)), [0, 1, 2, 3]) == pytest.approx(math.log(5))
    assert disc_sup_loss(np.array([[1.0, 0.0]]), [0]) == pytest.approx(-math.log(math.e / (math.e + 1)))
    assert disc_sup_loss(np.array([[1.0, 0.0]]), [0]) == pytest.approx(0.3133, abs=1e-4)
    with pytest.raises(ValueError):
        disc_sup_loss(np.zeros((0, 2)), [])


def test_unsup_loss_examples():
    assert disc_unsup_loss([0.5, 0.5], [0.5]) == pytest.approx(2 * math.log(2))
    assert disc_unsup_loss([1 - 1e-12], [1e-12]) < 1e-9
    expected = -((math.log(0.9) + math.log(0.8)) / 2 + math.log(0.7))
    assert disc_unsup_loss([0.9, 0.8], [0.3]) == pytest.approx(expected)
    assert expected == pytest.approx(0.5209, abs=1e-4)
    with pytest.raises(ValueError):
        disc_unsup_loss([], [0.3])


def test_unsup_from_lse_matches_probability_form(rng):
    lse_l, lse_u = rng.standard_normal(7) * 3, rng.standard_normal(4) * 3
    sig = lambda z: 1 / (1 + np.exp(-z))
    assert disc_unsup_loss_from_lse(lse_l, lse_u) == pytest.approx(disc_unsup_loss(sig(lse_l), sig(lse_u)))


def test_total_loss_examples():
    assert disc_total_loss(1.0, 0.5, 0.6) == pytest.approx(1.1)
    assert disc_total_loss(3.0, 0.5, 0.0) == 0.5
    assert disc_total_loss(0.0, 0.7, 2.0) == 0.7
    with pytest.raises(ValueError):
        disc_total_loss(1.0, 1.0, -0.1)


def test_forward_shape_check_and_purity(disc, rng):
    reps = rng.random((5, 16))
    a, b = disc_forward(reps, disc), disc_forward(reps, disc)
    assert np.array_equal(a.logits, b.logits)
    assert a.hidden2.shape == (5, 128) and a.logits.shape == (5, 3)
    with pytest.raises(ShapeError):
        disc_forward(rng.random((5, 8)), disc)


def test_feature_matching_examples(disc, rng):
    reps = rng.random((6, 16))
    reps[3:] = reps[:3]
    value, grad = feature_matching_term(reps, [0, 1, 2], [3, 4, 5], disc)
    assert value == pytest.approx(0.0, abs=1e-20) and np.allclose(grad, 0)
    e1 = np.zeros((1, 128))
    e1[0, 0] = 1.0
    assert fm_value(e1, np.zeros((1, 128))) == 1.0
    with pytest.raises(ValueError):
        feature_matching_term(reps, [0], [], disc)


def test_gradients_match_finite_differences():
    prob = tiny_problem(0)
    for which in ("sup", "unsup", "total"):
        assert check_disc(prob, which).max_error < 1e-4
    assert check_fm_reps(prob).max_error < 1e-4
    assert check_likelihood_reps(prob).max_error < 1e-4


def test_train_step_deterministic_and_lr_zero(disc, rng):
    reps = rng.random((10, 16))
    labels = np.array([0, 1, 2] * 3 + [0])
    args = (reps, [0, 1, 2], labels, [0, 1, 2, 3, 4], [5, 6, 7, 8, 9])
    p1, _ = train_d_epoch(*args, disc, 0.6, RngStream(1, "dd"))
    p2, _ = train_d_epoch(*args, disc, 0.6, RngStream(1, "dd"))
    assert all(np.array_equal(a, b) for a, b in zip(p1.weights, p2.weights))
    frozen = replace(disc, adam=replace(disc.adam, learning_rate=0.0))
    p3, _ = train_d_epoch(*args, frozen, 0.6, RngStream(1, "dd"))
    assert all(np.array_equal(a, b) for a, b in zip(p3.weights, disc.weights))


def test_alpha_zero_is_pure_unsup(disc, rng):
    reps = rng.random((8, 16))
    labels = np.arange(8) % 3
    loss = disc_loss_and_grads(reps, [0, 1], labels, [0, 1, 2], [3, 4, 5, 6, 7], disc, 0.0)
    assert loss.total == loss.unsup
