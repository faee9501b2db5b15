"""Two-layer GCN embedder with hand-derived gradients.

Forward pass (dropout on the input features and on the hidden layer)::

    hidden = relu(A @ drop(X) @ W0)
    logits = A @ drop(hidden) @ W1
    probs  = softmax(logits)

``hidden`` (post-ReLU, pre-dropout) is the representation handed to the
discriminator.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .numerics import (AdamState, CsrMatrix, RngStream, ShapeError, adam_step, log_softmax_rows,
                       relu, relu_mask, softmax_rows, sparse_dropout, dropout, spmm, spmm_t)


def glorot(fan_in, fan_out, rng: RngStream) -> np.ndarray:
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.generator.uniform(-r, r, size=(fan_in, fan_out))


def row_normalize(features: CsrMatrix) -> CsrMatrix:
    """Scale every feature row to unit L1 norm."""
    x = features.to_scipy()
    s = np.asarray(x.sum(axis=1)).ravel()
    s[s == 0] = 1.0
    return CsrMatrix.from_scipy(sp.diags(1.0 / s) @ x)


@dataclass
class GcnParams:
    W0: np.ndarray
    W1: np.ndarray
    adam: AdamState
    l2_lambda: float = 5e-4
    dropout_rate: float = 0.5

    @property
    def weights(self):
        return [self.W0, self.W1]


def init_gcn_params(num_features, hidden, num_classes, rng: RngStream, learning_rate=0.005,
                    l2_lambda=5e-4, dropout_rate=0.5) -> GcnParams:
    if l2_lambda < 0:
        raise ValueError("l2_lambda must be >= 0")
    w0 = glorot(num_features, hidden, rng.substream("init-W0"))
    w1 = glorot(hidden, num_classes, rng.substream("init-W1"))
    return GcnParams(w0, w1, AdamState.zeros_like([w0, w1], learning_rate), l2_lambda, dropout_rate)


@dataclass
class GcnActivations:
    hidden: np.ndarray         # post-ReLU first layer (N, H)
    logits: np.ndarray
    probs: np.ndarray
    x_drop: CsrMatrix
    pre_hidden: np.ndarray
    hidden_drop: np.ndarray
    hidden_mask: np.ndarray


def gcn_forward(adj: CsrMatrix, features: CsrMatrix, params: GcnParams, training=False,
                rng: Optional[RngStream] = None) -> GcnActivations:
    if features.shape[1] != params.W0.shape[0] or adj.shape[0] != features.shape[0]:
        raise ShapeError(f"gcn_forward: features {features.shape}, adjacency {adj.shape}, "
                         f"W0 {params.W0.shape}")
    if params.W0.shape[1] != params.W1.shape[0]:
        raise ShapeError("gcn_forward: W0/W1 inner dimensions differ")
    rate = params.dropout_rate
    x_drop, _ = sparse_dropout(features, rate, rng, training)
    pre = spmm(adj, spmm(x_drop, params.W0))
    hidden = relu(pre)
    hidden_drop, hmask = dropout(hidden, rate, rng, training)
    logits = spmm(adj, hidden_drop @ params.W1)
    return GcnActivations(hidden, logits, softmax_rows(logits), x_drop, pre, hidden_drop, hmask)


def gcn_supervised_loss(acts: GcnActivations, labeled_ids, labels) -> float:
    """Summed cross-entropy over the labelled nodes (no L2 term)."""
    labeled_ids = np.asarray(labeled_ids, dtype=np.int64)
    if labeled_ids.size == 0:
        raise ValueError("labelled set is empty")
    logp = log_softmax_rows(acts.logits[labeled_ids])
    return float(-logp[np.arange(labeled_ids.size), np.asarray(labels)[labeled_ids]].sum())


def l2_penalty(params: GcnParams) -> float:
    return float(params.l2_lambda * np.sum(params.W0 * params.W0))


def generator_loss(fm_term: float, sup_term: float) -> float:
    """Generator objective: adversarial term plus the supervised GCN loss."""
    return float(fm_term + sup_term)


def gcn_backward(adj: CsrMatrix, acts: GcnActivations, labeled_ids, labels, params: GcnParams,
                 upstream_hidden_grad: Optional[np.ndarray] = None, sup_weight=1.0):
    """Gradients of ``sup_weight*J_GCN + l2*|W0|^2 (+ adversarial term)`` w.r.t. ``(W0, W1)``.

    ``upstream_hidden_grad`` is the adversarial term's gradient w.r.t. the
    post-ReLU hidden matrix; it is added where the hidden layer leaves the ReLU.
    ``sup_weight = 1/|L|`` turns the summed cross-entropy into a mean.
    """
    n, k = acts.probs.shape
    labeled_ids = np.asarray(labeled_ids, dtype=np.int64)
    if acts.hidden_mask.shape != acts.hidden.shape or acts.x_drop.shape[0] != n:
        raise ShapeError("gcn_backward: activations and masks disagree")
    d_logits = np.zeros((n, k))
    d_logits[labeled_ids] = acts.probs[labeled_ids]
    d_logits[labeled_ids, np.asarray(labels)[labeled_ids]] -= 1.0
    if sup_weight != 1.0:
        d_logits *= sup_weight
    # A is symmetric: A.T @ g == A @ g
    d_p1 = spmm(adj, d_logits)
    g_w1 = acts.hidden_drop.T @ d_p1
    d_hidden = (d_p1 @ params.W1.T) * acts.hidden_mask
    if upstream_hidden_grad is not None:
        if upstream_hidden_grad.shape != acts.hidden.shape:
            raise ShapeError("gcn_backward: upstream gradient shape mismatch")
        d_hidden = d_hidden + upstream_hidden_grad
    d_pre = d_hidden * relu_mask(acts.pre_hidden)
    g_w0 = spmm_t(acts.x_drop, spmm(adj, d_pre)) + 2.0 * params.l2_lambda * params.W0
    return g_w0, g_w1


HiddenGradFn = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclass
class GStepResult:
    params: GcnParams
    acts: GcnActivations          # post-update, dropout off
    sup_loss: float
    adv_loss: float

    @property
    def loss(self):
        return generator_loss(self.adv_loss, self.sup_loss)


def train_g_epoch(adj, features, labeled_ids, labels, params: GcnParams, rng: RngStream,
                  hidden_grad_fn: Optional[HiddenGradFn] = None, reduction="sum") -> GStepResult:
    """One full-graph Adam step on the generator objective.

    ``hidden_grad_fn(hidden) -> (value, grad)`` supplies the adversarial term
    computed through a frozen discriminator; ``None`` trains on J_GCN alone.
    ``reduction`` is "sum" (J_GCN as defined) or "mean" over labelled nodes.
    """
    if reduction not in ("sum", "mean"):
        raise ValueError(f"unknown reduction {reduction!r}")
    weight = 1.0 if reduction == "sum" else 1.0 / len(labeled_ids)
    acts = gcn_forward(adj, features, params, training=True, rng=rng)
    sup = weight * gcn_supervised_loss(acts, labeled_ids, labels)
    adv, upstream = 0.0, None
    if hidden_grad_fn is not None:
        adv, upstream = hidden_grad_fn(acts.hidden)
    g_w0, g_w1 = gcn_backward(adj, acts, labeled_ids, labels, params, upstream, weight)
    (w0, w1), adam = adam_step([params.W0, params.W1], [g_w0, g_w1], params.adam)
    new = replace(params, W0=w0, W1=w1, adam=adam)
    return GStepResult(new, gcn_forward(adj, features, new, training=False), sup, adv)
