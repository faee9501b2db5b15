"""Labelled/unlabelled pools and confidence-based pool tuning."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NoCandidatesError(RuntimeError):
    """The p-unlabelled pool is empty while labelling budget remains."""


class PoolInvariantError(AssertionError):
    pass


@dataclass
class PoolState:
    labeled: np.ndarray
    unlabeled: np.ndarray
    p_labeled: np.ndarray
    p_unlabeled: np.ndarray
    query_log: list = field(default_factory=list)    # (iteration, node, score)

    @classmethod
    def initial(cls, pool_ids, init_labeled_ids) -> "PoolState":
        labeled = np.sort(np.asarray(init_labeled_ids, dtype=np.int64))
        unlabeled = np.setdiff1d(np.asarray(pool_ids, dtype=np.int64), labeled)
        return cls(labeled, unlabeled, labeled.copy(), unlabeled.copy())

    def reveal(self, node: int, iteration: int, score: float) -> None:
        """Move a queried node from U to L."""
        if node not in set(self.unlabeled.tolist()):
            raise PoolInvariantError(f"node {node} is not in the unlabelled pool")
        self.labeled = np.sort(np.append(self.labeled, node))
        self.unlabeled = self.unlabeled[self.unlabeled != node]
        self.p_labeled = np.sort(np.append(self.p_labeled[self.p_labeled != node], node))
        self.p_unlabeled = self.p_unlabeled[self.p_unlabeled != node]
        self.query_log.append((int(iteration), int(node), float(score)))

    def check(self, pool_ids=None) -> None:
        L, U = set(self.labeled.tolist()), set(self.unlabeled.tolist())
        Lp, Up = set(self.p_labeled.tolist()), set(self.p_unlabeled.tolist())
        if L & U:
            raise PoolInvariantError("L and U overlap")
        if pool_ids is not None and L | U != set(np.asarray(pool_ids).tolist()):
            raise PoolInvariantError("L ∪ U differs from the eligible pool")
        if not L <= Lp:
            raise PoolInvariantError("L is not contained in L+")
        if Lp & Up:
            raise PoolInvariantError("L+ and U- overlap")
        if Lp | Up != L | U:
            raise PoolInvariantError("L+ ∪ U- differs from L ∪ U")
        queried = [q[1] for q in self.query_log]
        if len(set(queried)) != len(queried):
            raise PoolInvariantError("a node was queried twice")


def tune_pools(probs, labeled, unlabeled, delta):
    """Promote unlabelled nodes whose top class probability is strictly above ``delta``.

    Returns ``(p_labeled, p_unlabeled)`` as sorted id arrays. Promoted nodes
    carry no label.
    """
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    labeled = np.asarray(labeled, dtype=np.int64)
    unlabeled = np.asarray(unlabeled, dtype=np.int64)
    confident = np.asarray(probs)[unlabeled].max(axis=1) > delta
    p_labeled = np.sort(np.concatenate([labeled, unlabeled[confident]]))
    return p_labeled, np.sort(unlabeled[~confident])


def apply_tuning(pools: PoolState, probs, delta) -> PoolState:
    pools.p_labeled, pools.p_unlabeled = tune_pools(probs, pools.labeled, pools.unlabeled, delta)
    return pools
