"""Finite-difference checks of every hand-derived gradient on a tiny graph.

Run through ``seal check-gradients``. Dropout is off throughout so each loss
is a deterministic function of its parameters.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .discriminator import (disc_forward, disc_loss_and_grads, disc_sup_loss,
                            disc_unsup_loss_from_lse, feature_matching_term, fm_value,
                            init_disc_params, likelihood_term)
from .embedder import (gcn_backward, gcn_forward, gcn_supervised_loss, init_gcn_params,
                       l2_penalty, row_normalize)
from .graph import generate_synthetic, normalize_adjacency
from .numerics import FdReport, RngStream, finite_difference_report

TOLERANCE = 1e-4
STEP = 1e-3
MAX_COORDS = 96       # sampled per parameter array of the 128-wide discriminator


def tiny_problem(seed=0):
    """12 nodes, 5 features, 3 classes, with fixed pools and random weights."""
    bundle = generate_synthetic(12, 3, 5, 0.6, 0.15, 0.7, seed=seed, feature_noise=0.3)
    adj = normalize_adjacency(bundle)
    x = row_normalize(bundle.features)
    root = RngStream(seed, "gradcheck")
    gcn = init_gcn_params(5, 16, 3, root.substream("gcn"), l2_lambda=5e-3)
    disc = init_disc_params(16, (128, 128), 3, root.substream("disc"))
    # nonzero biases so their gradients are exercised away from the origin
    g = root.substream("bias").generator
    disc = disc.with_weights([w if w.ndim == 2 else 0.5 * g.standard_normal(w.shape)
                              for w in disc.weights])
    prob = dict(bundle=bundle, adj=adj, x=x, gcn=gcn, disc=disc,
                labeled=np.array([0, 4, 7]),
                p_labeled=np.array([0, 2, 4, 7, 9]),
                p_unlabeled=np.array([1, 3, 5, 6, 8, 10, 11]))
    prob["reps"] = gcn_forward(adj, x, gcn).hidden
    return prob


def _disc_pattern(reps, disc):
    acts = disc_forward(reps, disc)
    return np.concatenate([(acts.pre1 > 0).ravel(), (acts.pre2 > 0).ravel(),
                           (acts.pre_out > 0).ravel()])


def _gcn_acts(prob, ws):
    return gcn_forward(prob["adj"], prob["x"], replace(prob["gcn"], W0=ws[0], W1=ws[1]))


def check_gcn(prob, extra=None) -> FdReport:
    """J_GCN + L2, optionally plus an adversarial term ``extra(hidden) -> (value, grad)``."""
    gcn, labels, labeled = prob["gcn"], prob["bundle"].labels, prob["labeled"]
    acts = gcn_forward(prob["adj"], prob["x"], gcn)
    upstream = extra(acts.hidden)[1] if extra is not None else None
    grads = gcn_backward(prob["adj"], acts, labeled, labels, gcn, upstream)

    def loss(ws):
        a = _gcn_acts(prob, ws)
        value = gcn_supervised_loss(a, labeled, labels) + l2_penalty(replace(gcn, W0=ws[0]))
        return value + (extra(a.hidden)[0] if extra is not None else 0.0)

    def kinks(ws):
        a = _gcn_acts(prob, ws)
        pattern = (a.pre_hidden > 0).ravel()
        if extra is not None:
            pattern = np.concatenate([pattern, _disc_pattern(a.hidden, prob["disc"])])
        return pattern

    return finite_difference_report(loss, [gcn.W0, gcn.W1], grads, STEP, kinks=kinks)


def _fm_extra(prob):
    disc = prob["disc"]
    return lambda h: feature_matching_term(h, prob["p_labeled"], prob["p_unlabeled"], disc)


def _disc_losses(prob, ws):
    """(J_sup, J_unsup) at discriminator weights ``ws``."""
    disc = prob["disc"].with_weights(ws)
    reps, labels = prob["reps"], prob["bundle"].labels
    lab, lp, um = prob["labeled"], prob["p_labeled"], prob["p_unlabeled"]
    sup = disc_sup_loss(disc_forward(reps[lab], disc).logits, labels[lab])
    unsup = disc_unsup_loss_from_lse(disc_forward(reps[lp], disc).lse,
                                     disc_forward(reps[um], disc).lse)
    return sup, unsup


def _disc_grads(prob, alpha):
    return disc_loss_and_grads(prob["reps"], prob["labeled"], prob["bundle"].labels,
                               prob["p_labeled"], prob["p_unlabeled"], prob["disc"], alpha).grads


def check_disc(prob, which, alpha=0.6) -> FdReport:
    """``which`` is "sup", "unsup" or "total" (J_D = alpha*J_sup + J_unsup)."""
    # J_D is linear in alpha, so the two pieces come from two evaluations
    g0, g1 = _disc_grads(prob, 0.0), _disc_grads(prob, 1.0)
    if which == "sup":
        grads, fn = [b - a for a, b in zip(g0, g1)], lambda ws: _disc_losses(prob, ws)[0]
    elif which == "unsup":
        grads, fn = g0, lambda ws: _disc_losses(prob, ws)[1]
    else:
        grads = _disc_grads(prob, alpha)
        fn = lambda ws: alpha * _disc_losses(prob, ws)[0] + _disc_losses(prob, ws)[1]
    kinks = lambda ws: _disc_pattern(prob["reps"], prob["disc"].with_weights(ws))
    return finite_difference_report(fn, prob["disc"].weights, grads, STEP, MAX_COORDS,
                                     kinks=kinks)


def check_fm_reps(prob) -> FdReport:
    """Feature-matching value w.r.t. the representation matrix (frozen D)."""
    reps, disc = prob["reps"], prob["disc"]
    lp, um = prob["p_labeled"], prob["p_unlabeled"]
    _, grad = feature_matching_term(reps, lp, um, disc)

    def fn(ws):
        h2 = disc_forward(ws[0], disc).hidden2
        return fm_value(h2[lp], h2[um])
    return finite_difference_report(fn, [reps], [grad], STEP,
                                    kinks=lambda ws: _disc_pattern(ws[0], disc))


def check_likelihood_reps(prob) -> FdReport:
    reps, disc = prob["reps"], prob["disc"]
    nodes = np.arange(reps.shape[0])
    _, grad = likelihood_term(reps, nodes, disc)
    return finite_difference_report(lambda ws: likelihood_term(ws[0], nodes, disc)[0],
                                     [reps], [grad], STEP,
                                     kinks=lambda ws: _disc_pattern(ws[0], disc))


def run_gradient_checks(seed=0) -> dict:
    """One :class:`FdReport` per loss; every max error should be below :data:`TOLERANCE`."""
    prob = tiny_problem(seed)
    return {
        "J_GCN": check_gcn(prob),
        "J_G (feature matching)": check_gcn(prob, _fm_extra(prob)),
        "J_sup": check_disc(prob, "sup"),
        "J_unsup": check_disc(prob, "unsup"),
        "J_D": check_disc(prob, "total"),
        "feature matching / reps": check_fm_reps(prob),
        "log-likelihood / reps": check_likelihood_reps(prob),
    }
