"""Dense/sparse numeric substrate shared by both networks.

Dense matrices are plain ``float64`` numpy arrays. Sparse matrices are
:class:`CsrMatrix` values whose products go through :mod:`seal.kernels`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import kernels

LEAKY_SLOPE = 0.2


class ShapeError(ValueError):
    pass


# ---------------------------------------------------------------- sparse

@dataclass(frozen=True, eq=False)
class CsrMatrix:
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    shape: tuple[int, int]

    @classmethod
    def from_scipy(cls, m) -> "CsrMatrix":
        m = sp.csr_matrix(m, dtype=np.float64)
        m.sort_indices()
        return cls(m.indptr.astype(np.int64), m.indices.astype(np.int64),
                   m.data.astype(np.float64), (int(m.shape[0]), int(m.shape[1])))

    @classmethod
    def from_dense(cls, a) -> "CsrMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(a, dtype=np.float64)))

    @property
    def nnz(self) -> int:
        return int(self.data.size)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def with_data(self, data: np.ndarray) -> "CsrMatrix":
        return CsrMatrix(self.indptr, self.indices, np.asarray(data, dtype=np.float64), self.shape)

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))

    def __eq__(self, other):
        if not isinstance(other, CsrMatrix):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.data, other.data))


def spmm(a: CsrMatrix, b: np.ndarray) -> np.ndarray:
    """Sparse-dense product ``a @ b``."""
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"spmm: cannot multiply {a.shape} by {b.shape}")
    return kernels.csr_matmul(a.indptr, a.indices, a.data, b)


def spmm_t(a: CsrMatrix, b: np.ndarray) -> np.ndarray:
    """Transposed sparse-dense product ``a.T @ b``."""
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"spmm_t: cannot multiply {a.shape[::-1]} by {b.shape}")
    return kernels.csr_t_matmul(a.indptr, a.indices, a.data, b, a.shape[1])


# ---------------------------------------------------------------- activations

def relu(x):
    return np.maximum(x, 0.0)


def relu_mask(x):
    # subgradient at 0 is 0
    return (x > 0).astype(np.float64)


def leaky_relu(x, slope=LEAKY_SLOPE):
    return np.where(x > 0, x, slope * x)


def leaky_relu_mask(x, slope=LEAKY_SLOPE):
    # subgradient at 0 is the slope
    return np.where(x > 0, 1.0, slope)


def softmax_rows(logits):
    return kernels.softmax_rows(np.atleast_2d(logits))


def logsumexp_rows(logits):
    return kernels.logsumexp_rows(np.atleast_2d(logits))


def log_softmax_rows(logits):
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    return logits - logsumexp_rows(logits)[:, None]


def softplus(x):
    """``log(1 + exp(x))`` without overflow."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def assert_finite(x, what="matrix"):
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {what}")
    return x


# ---------------------------------------------------------------- randomness

class RngStream:
    """Counter-based random stream (Philox) keyed by a seed and a label.

    Substreams are derived by label, so adding a new consumer never shifts the
    draws seen by existing ones.
    """

    algorithm = "philox4x64-10"

    def __init__(self, seed: int, label: str = ""):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.label = label
        digest = hashlib.sha256(label.encode("utf-8")).digest()
        words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=tuple(words))
        self.generator = np.random.Generator(np.random.Philox(seq))

    def substream(self, label: str) -> "RngStream":
        return RngStream(self.seed, f"{self.label}/{label}" if self.label else label)

    @property
    def counter(self) -> int:
        state = self.generator.bit_generator.state["state"]["counter"]
        return int(sum(int(c) << (64 * i) for i, c in enumerate(state)))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, label={self.label!r}, counter={self.counter})"


def dropout(x, rate, rng: RngStream | None, enabled=True):
    """Inverted dropout. Returns ``(output, mask)``; the mask carries the 1/(1-rate) scale."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    x = np.asarray(x, dtype=np.float64)
    if not enabled or rate == 0.0:
        return x, np.ones_like(x)
    # 32-bit integer draws are cheaper than doubles from Philox; an entry
    # survives with probability 1 - threshold / 2**32, within 2**-32 of 1 - rate
    threshold = min(int(round(rate * 2.0 ** 32)), 2 ** 32 - 1)
    draws = rng.generator.integers(0, 2 ** 32, size=x.shape, dtype=np.uint32)
    return kernels.apply_keep_mask(x, draws, threshold, 1.0 / (1.0 - rate))


def sparse_dropout(x: CsrMatrix, rate, rng: RngStream | None, enabled=True):
    """Inverted dropout over the stored entries of a CSR matrix."""
    out, mask = dropout(x.data, rate, rng, enabled)
    return x.with_data(out), mask


# ---------------------------------------------------------------- Adam

@dataclass
class AdamState:
    first_moment: list
    second_moment: list
    step_count: int = 0
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray], learning_rate=0.01, **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params],
                   0, learning_rate, **kw)


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update. Pure: returns new params and a new state."""
    if not (len(params) == len(grads) == len(state.first_moment)):
        raise ShapeError("adam_step: parameter/gradient/state counts differ")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"adam_step: shape mismatch {p.shape} vs {g.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_p.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
        new_m.append(m)
        new_v.append(v)
    return new_p, replace(state, first_moment=new_m, second_moment=new_v, step_count=t)


# ---------------------------------------------------------------- gradient checking

@dataclass
class FdReport:
    max_error: float
    checked: int
    skipped: int          # coordinates whose perturbation crossed a kink


def finite_difference_report(loss_fn: Callable[[list], float], params, analytic_grads,
                             step=1e-3, max_coords: int | None = None, seed=0,
                             kinks: Callable[[list], np.ndarray] | None = None) -> FdReport:
    """Central differences against ``analytic_grads``, coordinate by coordinate.

    ``loss_fn`` receives a list of arrays shaped like ``params``. With
    ``max_coords`` set, that many coordinates are sampled per parameter.
    ``kinks(params)`` may return the activation pattern (e.g. ReLU signs); a
    coordinate whose +/- perturbation changes the pattern is skipped, since
    the loss is not differentiable across the step there.
    The error is ``|fd - an| / max(1e-8, |fd| + |an|)``.
    """
    params = [np.array(p, dtype=np.float64) for p in params]
    rng = np.random.default_rng(seed)
    base = kinks(params) if kinks is not None else None
    worst, checked, skipped = 0.0, 0, 0
    for p, g in zip(params, analytic_grads):
        flat = p.reshape(-1)
        gflat = np.asarray(g, dtype=np.float64).reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        for c in coords:
            orig = flat[c]
            flat[c] = orig + step
            up = loss_fn(params)
            crossed = kinks is not None and not np.array_equal(kinks(params), base)
            flat[c] = orig - step
            down = loss_fn(params)
            crossed = crossed or (kinks is not None and not np.array_equal(kinks(params), base))
            flat[c] = orig
            if crossed:
                skipped += 1
                continue
            fd = (up - down) / (2.0 * step)
            err = abs(fd - gflat[c]) / max(1e-8, abs(fd) + abs(gflat[c]))
            worst = max(worst, err)
            checked += 1
    return FdReport(worst, checked, skipped)


def finite_difference_check(loss_fn: Callable[[list], float], params, analytic_grads,
                            step=1e-3, max_coords: int | None = None, seed=0,
                            kinks=None) -> float:
    """Max relative error between central differences and ``analytic_grads``."""
    return finite_difference_report(loss_fn, params, analytic_grads, step, max_coords, seed,
                                     kinks).max_error
