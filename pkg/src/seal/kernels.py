"""Hot numeric kernels.

Each kernel has a numba-compiled loop and a vectorised numpy twin. The public
functions dispatch on :data:`seal._accel.USE_NUMBA`; both twins are importable
directly so tests and the benchmark can compare them.

Sparse operands are passed as raw CSR triples ``(indptr, indices, data)``.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = [
    "csr_matmul",
    "csr_t_matmul",
    "softmax_rows",
    "logsumexp_rows",
    "csr_matmul_numba",
    "csr_matmul_numpy",
    "csr_t_matmul_numba",
    "csr_t_matmul_numpy",
    "softmax_rows_numba",
    "softmax_rows_numpy",
    "logsumexp_rows_numba",
    "logsumexp_rows_numpy",
    "leaky_relu",
    "leaky_relu_backward",
    "leaky_relu_numba",
    "leaky_relu_numpy",
    "leaky_relu_backward_numba",
    "leaky_relu_backward_numpy",
    "apply_keep_mask",
    "apply_keep_mask_numba",
    "apply_keep_mask_numpy",
]


# ---------------------------------------------------------------- numba twins

@njit(cache=True, nogil=True)
def csr_matmul_numba(indptr, indices, data, b):
    nrows = indptr.shape[0] - 1
    k = b.shape[1]
    out = np.zeros((nrows, k))
    for i in range(nrows):
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            v = data[jj]
            for c in range(k):
                out[i, c] += v * b[j, c]
    return out


@njit(cache=True, nogil=True)
def csr_t_matmul_numba(indptr, indices, data, b, ncols):
    nrows = indptr.shape[0] - 1
    k = b.shape[1]
    out = np.zeros((ncols, k))
    for i in range(nrows):
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            v = data[jj]
            for c in range(k):
                out[j, c] += v * b[i, c]
    return out


@njit(cache=True, nogil=True)
def softmax_rows_numba(x):
    n, k = x.shape
    out = np.empty((n, k))
    for i in range(n):
        m = x[i, 0]
        for c in range(1, k):
            if x[i, c] > m:
                m = x[i, c]
        s = 0.0
        for c in range(k):
            e = np.exp(x[i, c] - m)
            out[i, c] = e
            s += e
        for c in range(k):
            out[i, c] /= s
    return out


@njit(cache=True, nogil=True)
def logsumexp_rows_numba(x):
    n, k = x.shape
    out = np.empty(n)
    for i in range(n):
        m = x[i, 0]
        for c in range(1, k):
            if x[i, c] > m:
                m = x[i, c]
        s = 0.0
        for c in range(k):
            s += np.exp(x[i, c] - m)
        out[i] = m + np.log(s)
    return out


@njit(cache=True, nogil=True)
def leaky_relu_numba(x, slope):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            v = x[i, j]
            out[i, j] = v if v > 0 else slope * v
    return out


@njit(cache=True, nogil=True)
def leaky_relu_backward_numba(grad, pre, slope):
    out = np.empty_like(grad)
    for i in range(grad.shape[0]):
        for j in range(grad.shape[1]):
            out[i, j] = grad[i, j] if pre[i, j] > 0 else slope * grad[i, j]
    return out


@njit(cache=True, nogil=True)
def apply_keep_mask_numba(x, draws, threshold, scale):
    flat_x = x.ravel()
    flat_d = draws.ravel()
    out = np.empty(flat_x.size)
    mask = np.empty(flat_x.size)
    for i in range(flat_x.size):
        m = scale if flat_d[i] >= threshold else 0.0
        mask[i] = m
        out[i] = flat_x[i] * m
    return out.reshape(x.shape), mask.reshape(x.shape)


# ---------------------------------------------------------------- numpy twins

def csr_matmul_numpy(indptr, indices, data, b):
    nrows = indptr.shape[0] - 1
    out = np.zeros((nrows, b.shape[1]))
    if data.size == 0:
        return out
    prod = data[:, None] * b[indices]
    starts = indptr[:-1]
    nonempty = np.flatnonzero(indptr[1:] > starts)
    # reduceat over non-empty row starts only; empty rows would otherwise
    # pick up a stray element
    out[nonempty] = np.add.reduceat(prod, starts[nonempty], axis=0)
    return out


def csr_t_matmul_numpy(indptr, indices, data, b, ncols):
    nrows = indptr.shape[0] - 1
    rows = np.repeat(np.arange(nrows), np.diff(indptr))
    prod = data[:, None] * b[rows]
    out = np.empty((ncols, b.shape[1]))
    for c in range(b.shape[1]):
        out[:, c] = np.bincount(indices, weights=prod[:, c], minlength=ncols)
    return out


def softmax_rows_numpy(x):
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def logsumexp_rows_numpy(x):
    m = x.max(axis=1)
    return m + np.log(np.exp(x - m[:, None]).sum(axis=1))


def leaky_relu_numpy(x, slope):
    return np.where(x > 0, x, slope * x)


def leaky_relu_backward_numpy(grad, pre, slope):
    return np.where(pre > 0, grad, slope * grad)


def apply_keep_mask_numpy(x, draws, threshold, scale):
    mask = (draws >= threshold) * scale
    return x * mask, mask


# ---------------------------------------------------------------- dispatch

def _as_csr_args(indptr, indices, data):
    return (np.ascontiguousarray(indptr, dtype=np.int64),
            np.ascontiguousarray(indices, dtype=np.int64),
            np.ascontiguousarray(data, dtype=np.float64))


def csr_matmul(indptr, indices, data, b):
    """Return ``A @ b`` for CSR ``A`` and dense ``b``."""
    b = np.ascontiguousarray(b, dtype=np.float64)
    args = _as_csr_args(indptr, indices, data)
    if USE_NUMBA:
        return csr_matmul_numba(*args, b)
    return csr_matmul_numpy(*args, b)


def csr_t_matmul(indptr, indices, data, b, ncols):
    """Return ``A.T @ b`` for CSR ``A`` with ``ncols`` columns."""
    b = np.ascontiguousarray(b, dtype=np.float64)
    args = _as_csr_args(indptr, indices, data)
    if USE_NUMBA:
        return csr_t_matmul_numba(*args, b, int(ncols))
    return csr_t_matmul_numpy(*args, b, int(ncols))


def softmax_rows(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if USE_NUMBA:
        return softmax_rows_numba(x)
    return softmax_rows_numpy(x)


def logsumexp_rows(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if USE_NUMBA:
        return logsumexp_rows_numba(x)
    return logsumexp_rows_numpy(x)


def leaky_relu(x, slope):
    """Elementwise ``x if x > 0 else slope * x`` on a 2-D array."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if USE_NUMBA:
        return leaky_relu_numba(x, float(slope))
    return leaky_relu_numpy(x, slope)


def leaky_relu_backward(grad, pre, slope):
    """``grad`` times the leaky-ReLU derivative at ``pre`` (slope at 0)."""
    grad = np.ascontiguousarray(grad, dtype=np.float64)
    pre = np.ascontiguousarray(pre, dtype=np.float64)
    if USE_NUMBA:
        return leaky_relu_backward_numba(grad, pre, float(slope))
    return leaky_relu_backward_numpy(grad, pre, slope)


def apply_keep_mask(x, draws, threshold, scale):
    """Dropout core: keep entries whose integer draw is ``>= threshold`` and scale them.

    Returns ``(x * mask, mask)``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    draws = np.ascontiguousarray(draws)
    if USE_NUMBA:
        return apply_keep_mask_numba(x, draws, np.uint32(threshold), float(scale))
    return apply_keep_mask_numpy(x, draws, np.uint32(threshold), scale)
