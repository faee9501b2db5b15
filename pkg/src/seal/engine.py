"""The active-learning loop, its baselines/ablations, and final retrain + evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .discriminator import (DiscParams, disc_forward, feature_matching_term, init_disc_params,
                            likelihood_term, train_d_epoch)
from .embedder import (GcnParams, gcn_forward, gcn_supervised_loss, init_gcn_params,
                       row_normalize, train_g_epoch)
from .graph import GraphBundle, SplitSpec, normalize_adjacency
from .metrics import f1_scores
from .numerics import RngStream
from .pools import NoCandidatesError, PoolState, apply_tuning

log = logging.getLogger(__name__)

SEAL_STRATEGIES = ("seal", "seal-ad", "seal-fm", "seal-sal", "seal-pt")
BASELINES = ("random", "entropy")
STRATEGIES = SEAL_STRATEGIES + BASELINES

# how the discriminator feeds back into the embedder
FEEDBACK = {"seal": "feature-matching", "seal-sal": "feature-matching",
            "seal-pt": "feature-matching", "seal-fm": "likelihood", "seal-ad": "none"}


class BudgetError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    strategy: str = "seal"
    delta: float = 0.6
    alpha: float = 0.6
    pretrain_epochs: int = 300
    n_g: int = 5
    n_d: int = 5
    budget: Optional[int] = None          # None: 20*K - |L_init|
    lr_select: float = 0.005
    lr_predict: float = 0.01
    lr_disc: float = 0.01
    hidden_width: int = 16
    disc_widths: tuple = (128, 128)
    dropout: float = 0.5
    l2_lambda: float = 5e-4
    final_train_epochs: int = 200
    patience: int = 20
    leaky_slope: float = 0.2
    disc_leaky_output: bool = False
    normalize_features: bool = True
    generator_feedback: str = "feature-matching"
    check_invariants: bool = True
    select_reduction: str = "sum"         # cross-entropy reduction while selecting
    final_reduction: str = "sum"          # ... and in the final retrain

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be >= 0")
        for name in ("pretrain_epochs", "n_g", "n_d", "final_train_epochs", "patience"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("lr_select", "lr_predict", "lr_disc"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("select_reduction", "final_reduction"):
            if getattr(self, name) not in ("sum", "mean"):
                raise ValueError(f"{name} must be 'sum' or 'mean'")
        if self.generator_feedback not in ("feature-matching", "likelihood", "none"):
            raise ValueError(f"unknown generator feedback {self.generator_feedback!r}")

    def resolve_budget(self, num_classes, num_init) -> int:
        return self.budget if self.budget is not None else 20 * num_classes - num_init


def apply_ablation(config: TrainingConfig) -> TrainingConfig:
    """Return the config with the strategy's ablation switches applied."""
    s = config.strategy
    if s not in STRATEGIES:
        raise ValueError(f"unknown strategy {s!r}")
    if s in BASELINES:
        return replace(config, generator_feedback="none")
    config = replace(config, generator_feedback=FEEDBACK[s])
    if s == "seal-sal":
        config = replace(config, alpha=0.0)
    elif s == "seal-pt":
        config = replace(config, delta=1.0)
    return config


# ---------------------------------------------------------------- scoring

def div_score(labeled_prob):
    """Divergence of an unlabelled node from the labelled pool: ``1 - D(x)``."""
    return 1.0 - np.asarray(labeled_prob, dtype=np.float64)


def prediction_entropy(probs):
    p = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=1)


def select_node(candidates, scores) -> int:
    """Arg-max of ``scores``; ties go to the smallest node id."""
    candidates = np.asarray(candidates, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if candidates.size == 0:
        raise NoCandidatesError("no candidate nodes to select from")
    if candidates.shape != scores.shape:
        raise ValueError("candidates and scores differ in length")
    best = scores.max()
    return int(candidates[scores == best].min())


# ---------------------------------------------------------------- the loop

@dataclass
class QueryRecord:
    iteration: int
    node: int
    score: float
    num_labeled: int


@dataclass
class ActiveResult:
    pools: PoolState
    records: list
    gcn: GcnParams
    disc: Optional[DiscParams]
    snapshots: list = field(default_factory=list)     # (num_labeled, labeled ids)
    iterations: int = 0
    history: list = field(default_factory=list)       # per-iteration J_G

    @property
    def labeled(self):
        return self.pools.labeled


def prepare_inputs(bundle: GraphBundle, config: TrainingConfig):
    adj = normalize_adjacency(bundle)
    x = row_normalize(bundle.features) if config.normalize_features else bundle.features
    return adj, x


def snapshot_points(budget, interval) -> list:
    """Query counts at which the labelled set is recorded (always includes 0 and the budget)."""
    if interval is None or interval <= 0:
        interval = max(budget, 1)
    pts = list(range(0, budget + 1, interval))
    if pts[-1] != budget:
        pts.append(budget)
    return pts


def _feedback_fn(config, disc, pools):
    mode = config.generator_feedback
    if len(pools.p_labeled) == 0 or len(pools.p_unlabeled) == 0:
        # a query can drain U- until the next tuning; no adversarial signal then
        return None
    if mode == "feature-matching":
        return lambda h: feature_matching_term(h, pools.p_labeled, pools.p_unlabeled, disc)
    if mode == "likelihood":
        everyone = np.union1d(pools.labeled, pools.unlabeled)
        return lambda h: likelihood_term(h, everyone, disc)
    return None


def run_active_loop(bundle: GraphBundle, splits: SplitSpec, config: TrainingConfig, seed: int = 0,
                    curve_interval: Optional[int] = None,
                    observer: Optional[Callable[[int, PoolState], None]] = None,
                    inputs=None) -> ActiveResult:
    """Alternate embedder/discriminator training and query one node per outer iteration.

    Outer iterations ``t = 1, 2, ...``: ``n_g`` embedder epochs, pool tuning,
    ``n_d`` discriminator epochs, then (once ``t > pretrain_epochs`` and budget
    remains) one query. The loop ends ``patience`` iterations after the last
    query. Baselines share the skeleton but skip tuning and the discriminator.
    """
    config = apply_ablation(config)
    strategy = config.strategy
    is_seal = strategy in SEAL_STRATEGIES
    adj, x = inputs if inputs is not None else prepare_inputs(bundle, config)
    labels = bundle.labels
    pool_ids = splits.pool_ids(bundle.num_nodes)
    pools = PoolState.initial(pool_ids, splits.init_labeled_ids)
    budget = config.resolve_budget(bundle.num_classes, len(pools.labeled))
    if budget > len(pools.unlabeled):
        raise BudgetError(f"budget {budget} exceeds the {len(pools.unlabeled)} unlabelled nodes")

    root = RngStream(seed, "run")
    gcn = init_gcn_params(bundle.num_features, config.hidden_width, bundle.num_classes,
                          root.substream("gcn"), config.lr_select, config.l2_lambda, config.dropout)
    disc = None
    if is_seal:
        disc = init_disc_params(config.hidden_width, config.disc_widths, bundle.num_classes,
                                root.substream("disc"), config.lr_disc, config.dropout,
                                config.leaky_slope, config.disc_leaky_output)
    drop_g = root.substream("dropout-G")
    drop_d = root.substream("dropout-D")
    pick = root.substream("select").generator

    points = snapshot_points(budget, curve_interval)
    snapshots = [(len(pools.labeled), pools.labeled.copy())] if points[0] == 0 else []
    records, history = [], []
    queries, t, after = 0, 0, 0
    while True:
        t += 1
        pretraining = t <= config.pretrain_epochs
        feedback = None if (pretraining or disc is None) else _feedback_fn(config, disc, pools)
        acts = None
        for _ in range(config.n_g):
            step = train_g_epoch(adj, x, pools.labeled, labels, gcn, drop_g, feedback,
                                 config.select_reduction)
            gcn, acts = step.params, step.acts
            history.append(step.loss)
        if acts is None:
            acts = gcn_forward(adj, x, gcn, training=False)

        if is_seal:
            apply_tuning(pools, acts.probs, config.delta)
            if config.check_invariants:
                pools.check(pool_ids)
            starved = len(pools.p_unlabeled) == 0
            if starved and queries < budget:
                raise NoCandidatesError(
                    f"iteration {t}: every unlabelled node exceeds delta={config.delta}")
            for _ in range(0 if starved else config.n_d):
                disc, _ = train_d_epoch(acts.hidden, pools.labeled, labels, pools.p_labeled,
                                        pools.p_unlabeled, disc, config.alpha, drop_d)
        if observer is not None:
            observer(t, pools)

        if not pretraining and queries < budget:
            node, score = _choose(strategy, pools, acts, disc, pick, t)
            pools.reveal(node, t, score)
            queries += 1
            records.append(QueryRecord(t, node, score, len(pools.labeled)))
            if queries in points:
                snapshots.append((len(pools.labeled), pools.labeled.copy()))
            if config.check_invariants:
                pools.check(pool_ids)
        elif not pretraining:
            after += 1
        if not pretraining and queries >= budget and after >= config.patience:
            break

    log.debug("%s: %d iterations, %d queries", strategy, t, queries)
    return ActiveResult(pools, records, gcn, disc, snapshots, t, history)


def _choose(strategy, pools: PoolState, acts, disc, pick, t):
    if strategy == "random":
        cands = pools.unlabeled
        if cands.size == 0:
            raise NoCandidatesError("unlabelled pool is empty")
        return int(cands[pick.integers(cands.size)]), float("nan")
    if strategy == "entropy":
        cands = pools.unlabeled
        scores = prediction_entropy(acts.probs[cands])
    else:
        cands = pools.p_unlabeled
        if cands.size == 0:
            raise NoCandidatesError(f"iteration {t}: p-unlabelled pool is empty")
        scores = div_score(disc_forward(acts.hidden[cands], disc, training=False).labeled_prob)
    node = select_node(cands, scores)
    return node, float(scores[np.searchsorted(cands, node)])


def run_baseline(bundle, splits, config: TrainingConfig, seed=0, **kw) -> ActiveResult:
    if config.strategy not in BASELINES:
        raise ValueError(f"{config.strategy!r} is not a baseline strategy")
    return run_active_loop(bundle, splits, config, seed, **kw)


# ---------------------------------------------------------------- final evaluation

@dataclass
class EvalResult:
    micro_f1: float
    macro_f1: float
    epochs: int
    predictions: np.ndarray


def final_train_eval(bundle: GraphBundle, splits: SplitSpec, labeled_ids, config: TrainingConfig,
                     seed: int = 0, inputs=None) -> EvalResult:
    """Train a fresh GCN on ``labeled_ids`` and score it on the test nodes.

    Early stopping watches validation cross-entropy; the weights with the best
    validation loss are evaluated.
    """
    adj, x = inputs if inputs is not None else prepare_inputs(bundle, config)
    labels = bundle.labels
    labeled_ids = np.sort(np.asarray(labeled_ids, dtype=np.int64))
    root = RngStream(seed, "final")
    gcn = init_gcn_params(bundle.num_features, config.hidden_width, bundle.num_classes,
                          root.substream("gcn"), config.lr_predict, config.l2_lambda, config.dropout)
    drop = root.substream("dropout")
    val = splits.val_ids
    best, best_loss, since, epochs = gcn, np.inf, 0, 0
    for epoch in range(config.final_train_epochs):
        step = train_g_epoch(adj, x, labeled_ids, labels, gcn, drop,
                             reduction=config.final_reduction)
        gcn, acts = step.params, step.acts
        epochs = epoch + 1
        if val.size == 0:
            best = gcn
            continue
        vloss = gcn_supervised_loss(acts, val, labels) / val.size
        if vloss < best_loss:
            best, best_loss, since = gcn, vloss, 0
        else:
            since += 1
            if since >= config.patience:
                break
    probs = gcn_forward(adj, x, best, training=False).probs
    pred = probs[splits.test_ids].argmax(axis=1)
    micro, macro = f1_scores(labels[splits.test_ids], pred, bundle.num_classes)
    return EvalResult(micro, macro, epochs, pred)
