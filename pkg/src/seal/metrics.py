"""Micro/Macro-F1 from confusion tables and aggregation over repeated runs."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


def confusion_table(y_true, y_pred, num_classes) -> np.ndarray:
    """K x K counts; rows are true classes, columns predicted classes."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    return np.bincount(y_true * num_classes + y_pred,
                       minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def _check(table):
    table = np.asarray(table)
    if table.ndim != 2 or table.shape[0] != table.shape[1]:
        raise ValueError("confusion table must be square")
    if np.any(table < 0):
        raise ValueError("confusion table has negative counts")
    if table.sum() <= 0:
        raise ValueError("confusion table is empty")
    return table.astype(np.float64)


def micro_f1(table) -> float:
    # single-label multiclass: pooled precision = pooled recall = accuracy
    t = _check(table)
    return float(np.trace(t) / t.sum())


def macro_f1(table) -> float:
    """Unweighted mean of per-class F1; a class with P + R = 0 scores 0."""
    t = _check(table)
    tp = np.diag(t)
    pred, true = t.sum(axis=0), t.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(pred > 0, tp / pred, 0.0)
        r = np.where(true > 0, tp / true, 0.0)
        f1 = np.where(p + r > 0, 2 * p * r / (p + r), 0.0)
    return float(f1.mean())


def f1_scores(y_true, y_pred, num_classes) -> tuple[float, float]:
    table = confusion_table(y_true, y_pred, num_classes)
    return micro_f1(table), macro_f1(table)


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Sample mean and (n-1) standard deviation; std of a single value is 0."""
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot aggregate an empty sequence")
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1))


def aggregate(rows: Iterable, metrics=("micro_f1", "macro_f1", "wall_seconds")) -> dict:
    """Mean and sample std of each metric over result rows (objects or dicts)."""
    rows = list(rows)
    if not rows:
        raise ValueError("cannot aggregate zero runs")
    get = (lambda r, k: r[k]) if isinstance(rows[0], dict) else getattr
    out = {"n": len(rows)}
    for m in metrics:
        mean, std = mean_std([get(r, m) for r in rows])
        out[m] = {"mean": mean, "std": std}
    return out
