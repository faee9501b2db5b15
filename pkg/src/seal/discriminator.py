"""Semisupervised discriminator over embedder representations.

The network emits K logits; the "unlabelled" logit is pinned at zero, so with
``S = sum_k exp(logit_k)`` the probability of being labelled is ``S / (S + 1)``,
i.e. ``sigmoid(logsumexp(logits))``. All log-probabilities are computed from
``logsumexp`` directly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .numerics import (LEAKY_SLOPE, AdamState, RngStream, ShapeError, adam_step, dropout,
                       log_softmax_rows, logsumexp_rows, sigmoid,
                       softmax_rows, softplus)
from . import kernels
from .embedder import glorot


@dataclass
class DiscParams:
    Wa: np.ndarray
    ba: np.ndarray
    Wb: np.ndarray
    bb: np.ndarray
    Wc: np.ndarray
    bc: np.ndarray
    adam: AdamState
    dropout_rate: float = 0.5
    leaky_slope: float = LEAKY_SLOPE
    leaky_output: bool = False

    @property
    def weights(self):
        return [self.Wa, self.ba, self.Wb, self.bb, self.Wc, self.bc]

    def with_weights(self, ws, adam=None) -> "DiscParams":
        wa, ba, wb, bb, wc, bc = ws
        return replace(self, Wa=wa, ba=ba, Wb=wb, bb=bb, Wc=wc, bc=bc,
                       adam=self.adam if adam is None else adam)

    @property
    def d_in(self):
        return self.Wa.shape[0]


def init_disc_params(d_in, widths, num_classes, rng: RngStream, learning_rate=0.01,
                     dropout_rate=0.5, leaky_slope=LEAKY_SLOPE, leaky_output=False) -> DiscParams:
    h1, h2 = widths
    ws = [glorot(d_in, h1, rng.substream("init-Da")), np.zeros(h1),
          glorot(h1, h2, rng.substream("init-Db")), np.zeros(h2),
          glorot(h2, num_classes, rng.substream("init-Dc")), np.zeros(num_classes)]
    return DiscParams(*ws, adam=AdamState.zeros_like(ws, learning_rate), dropout_rate=dropout_rate,
                      leaky_slope=leaky_slope, leaky_output=leaky_output)


@dataclass
class DiscActivations:
    reps: np.ndarray
    pre1: np.ndarray
    hidden1: np.ndarray
    drop1: np.ndarray
    mask1: np.ndarray
    pre2: np.ndarray
    hidden2: np.ndarray        # feature-matching tap
    drop2: np.ndarray
    mask2: np.ndarray
    pre_out: np.ndarray
    logits: np.ndarray
    lse: np.ndarray            # logsumexp of the K logits

    @property
    def labeled_prob(self):
        return sigmoid(self.lse)

    @property
    def log_labeled_prob(self):
        return -softplus(-self.lse)

    @property
    def log_unlabeled_prob(self):
        return -softplus(self.lse)


def labeled_prob_from_logits(logits) -> np.ndarray:
    """Probability of being labelled given K logits (implicit zero (K+1)-th logit)."""
    return sigmoid(logsumexp_rows(logits))


def disc_forward(reps, params: DiscParams, training=False, rng: Optional[RngStream] = None
                 ) -> DiscActivations:
    reps = np.asarray(reps, dtype=np.float64)
    if reps.ndim != 2 or reps.shape[1] != params.d_in:
        raise ShapeError(f"disc_forward: expected (n, {params.d_in}) representations, got {reps.shape}")
    s, rate = params.leaky_slope, params.dropout_rate
    pre1 = reps @ params.Wa + params.ba
    h1 = kernels.leaky_relu(pre1, s)
    d1, m1 = dropout(h1, rate, rng, training)
    pre2 = d1 @ params.Wb + params.bb
    h2 = kernels.leaky_relu(pre2, s)
    d2, m2 = dropout(h2, rate, rng, training)
    pre_out = d2 @ params.Wc + params.bc
    logits = kernels.leaky_relu(pre_out, s) if params.leaky_output else pre_out
    return DiscActivations(reps, pre1, h1, d1, m1, pre2, h2, d2, m2, pre_out, logits,
                           logsumexp_rows(logits))


def _backward(acts: DiscActivations, params: DiscParams, d_logits=None, d_hidden2=None):
    """Backprop an upstream gradient to all weights and to the input representations."""
    s = params.leaky_slope
    if d_logits is not None:
        d_out = kernels.leaky_relu_backward(d_logits, acts.pre_out, s) if params.leaky_output else d_logits
        g_wc = acts.drop2.T @ d_out
        g_bc = d_out.sum(axis=0)
        d_h2 = d_out @ params.Wc.T
        if acts.mask2 is not None:
            d_h2 *= acts.mask2
    else:
        g_wc = np.zeros_like(params.Wc)
        g_bc = np.zeros_like(params.bc)
        d_h2 = np.zeros_like(acts.hidden2)
    if d_hidden2 is not None:
        d_h2 = d_h2 + d_hidden2
    d_pre2 = kernels.leaky_relu_backward(d_h2, acts.pre2, s)
    g_wb = acts.drop1.T @ d_pre2
    g_bb = d_pre2.sum(axis=0)
    d_d1 = d_pre2 @ params.Wb.T
    if acts.mask1 is not None:
        d_d1 *= acts.mask1
    d_pre1 = kernels.leaky_relu_backward(d_d1, acts.pre1, s)
    g_wa = acts.reps.T @ d_pre1
    g_ba = d_pre1.sum(axis=0)
    return [g_wa, g_ba, g_wb, g_bb, g_wc, g_bc], d_pre1 @ params.Wa.T


# ---------------------------------------------------------------- losses

def disc_sup_loss(logits, labels) -> float:
    """Mean K-class cross-entropy over the original labelled nodes."""
    logits = np.atleast_2d(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("supervised loss needs at least one labelled node")
    return float(-log_softmax_rows(logits)[np.arange(labels.size), labels].mean())


def disc_unsup_loss(prob_lplus, prob_uminus) -> float:
    """Adversarial loss from labelled-probabilities of the L+ and U- pools."""
    prob_lplus, prob_uminus = np.asarray(prob_lplus, float), np.asarray(prob_uminus, float)
    if prob_lplus.size == 0 or prob_uminus.size == 0:
        raise ValueError("both pools must be non-empty")
    return float(-(np.log(prob_lplus).mean() + np.log1p(-prob_uminus).mean()))


def disc_unsup_loss_from_lse(lse_lplus, lse_uminus) -> float:
    """Same as :func:`disc_unsup_loss`, evaluated stably from logsumexp values."""
    if len(lse_lplus) == 0 or len(lse_uminus) == 0:
        raise ValueError("both pools must be non-empty")
    return float(softplus(-np.asarray(lse_lplus)).mean() + softplus(np.asarray(lse_uminus)).mean())


def disc_total_loss(sup, unsup, alpha) -> float:
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return float(alpha * sup + unsup)


# ---------------------------------------------------------------- loss + gradient

@dataclass
class DiscLoss:
    total: float
    sup: float
    unsup: float
    grads: list


def _pool_rows(p_labeled, p_unlabeled, labeled):
    nodes = np.union1d(p_labeled, p_unlabeled)
    rows = lambda ids: np.searchsorted(nodes, np.asarray(ids, dtype=np.int64))
    return nodes, rows(labeled), rows(p_labeled), rows(p_unlabeled)


def disc_loss_and_grads(reps, labeled, labels, p_labeled, p_unlabeled, params: DiscParams,
                        alpha, training=False, rng=None) -> DiscLoss:
    """J_D = alpha*J_sup + J_unsup and its gradient w.r.t. every discriminator weight.

    ``reps`` holds one row per graph node; ``labeled`` must be a subset of
    ``p_labeled``. One forward pass covers L+ ∪ U-.
    """
    labeled = np.asarray(labeled, dtype=np.int64)
    if labeled.size == 0:
        raise ValueError("original labelled set is empty")
    if len(p_labeled) == 0 or len(p_unlabeled) == 0:
        raise ValueError("both pools must be non-empty")
    nodes, r_l, r_lp, r_um = _pool_rows(p_labeled, p_unlabeled, labeled)
    acts = disc_forward(np.asarray(reps)[nodes], params, training, rng)
    y = np.asarray(labels)[labeled]

    sup = disc_sup_loss(acts.logits[r_l], y)
    unsup = disc_unsup_loss_from_lse(acts.lse[r_lp], acts.lse[r_um])

    soft = softmax_rows(acts.logits)
    dprob = sigmoid(acts.lse)
    # L+ and U- partition the rows and each index array is duplicate-free,
    # so plain fancy assignment is exact.
    # d(-log D)/dl = -(1 - D) softmax ; d(-log(1 - D))/dl = D softmax
    d_logits = np.empty_like(acts.logits)
    d_logits[r_lp] = -((1.0 - dprob[r_lp])[:, None] * soft[r_lp]) / r_lp.size
    d_logits[r_um] = (dprob[r_um][:, None] * soft[r_um]) / r_um.size
    g_sup = soft[r_l]
    g_sup[np.arange(r_l.size), y] -= 1.0
    d_logits[r_l] += alpha * g_sup / r_l.size
    grads, _ = _backward(acts, params, d_logits=d_logits)
    return DiscLoss(disc_total_loss(sup, unsup, alpha), sup, unsup, grads)


def train_d_epoch(reps, labeled, labels, p_labeled, p_unlabeled, params: DiscParams, alpha,
                  rng: RngStream) -> tuple[DiscParams, DiscLoss]:
    """One Adam step on J_D with the representations held constant."""
    loss = disc_loss_and_grads(reps, labeled, labels, p_labeled, p_unlabeled, params, alpha,
                               training=True, rng=rng)
    ws, adam = adam_step(params.weights, loss.grads, params.adam)
    return params.with_weights(ws, adam), loss


# ---------------------------------------------------------------- feedback to the embedder

def fm_value(h2_lplus, h2_uminus) -> float:
    """Squared distance between the pool means of the feature-matching layer."""
    if len(h2_lplus) == 0 or len(h2_uminus) == 0:
        raise ValueError("both pools must be non-empty")
    diff = np.asarray(h2_lplus).mean(axis=0) - np.asarray(h2_uminus).mean(axis=0)
    return float(diff @ diff)


def feature_matching_term(reps, p_labeled, p_unlabeled, params: DiscParams):
    """Feature-matching value and its gradient w.r.t. every row of ``reps``.

    The discriminator is frozen and run without dropout. Rows outside
    L+ ∪ U- receive zero gradient.
    """
    p_labeled = np.asarray(p_labeled, dtype=np.int64)
    p_unlabeled = np.asarray(p_unlabeled, dtype=np.int64)
    if p_labeled.size == 0 or p_unlabeled.size == 0:
        raise ValueError("both pools must be non-empty")
    reps = np.asarray(reps, dtype=np.float64)
    nodes, _, r_lp, r_um = _pool_rows(p_labeled, p_unlabeled, np.zeros(0, np.int64))
    acts = disc_forward(reps[nodes], params, training=False)
    h2 = acts.hidden2
    diff = h2[r_lp].mean(axis=0) - h2[r_um].mean(axis=0)
    d_h2 = np.empty_like(h2)
    d_h2[r_lp] = 2.0 * diff / r_lp.size
    d_h2[r_um] = -2.0 * diff / r_um.size
    _, d_nodes = _backward(acts, params, d_hidden2=d_h2)
    grad = np.zeros_like(reps)
    grad[nodes] = d_nodes
    return float(diff @ diff), grad


def likelihood_term(reps, node_ids, params: DiscParams):
    """``-mean log D(x)`` over ``node_ids`` and its gradient w.r.t. ``reps`` (frozen D, no dropout)."""
    node_ids = np.asarray(node_ids, dtype=np.int64)
    if node_ids.size == 0:
        raise ValueError("likelihood term needs at least one node")
    reps = np.asarray(reps, dtype=np.float64)
    acts = disc_forward(reps[node_ids], params, training=False)
    value = float(softplus(-acts.lse).mean())
    d_logits = -((1.0 - sigmoid(acts.lse))[:, None] * softmax_rows(acts.logits)) / node_ids.size
    _, d_nodes = _backward(acts, params, d_logits=d_logits)
    grad = np.zeros_like(reps)
    np.add.at(grad, node_ids, d_nodes)
    return value, grad
