"""Deterministic reductions and thread-count-independent chunked evaluation."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 4096


def tree_sum(values, axis=None):
    """Pairwise sum in a fixed tree order, independent of memory layout and threading."""
    x = np.asarray(values)
    if axis is None:
        x = x.reshape(-1)
        axis = 0
    x = np.moveaxis(x, axis, 0)
    if x.shape[0] == 0:
        return np.zeros(x.shape[1:], dtype=x.dtype)[()]
    size = 1 << (x.shape[0] - 1).bit_length()
    if size != x.shape[0]:
        pad = np.zeros((size - x.shape[0],) + x.shape[1:], dtype=x.dtype)
        x = np.concatenate([x, pad])
    while x.shape[0] > 1:
        x = x[0::2] + x[1::2]
    return x[0][()]


def tree_mean(values, axis=None):
    x = np.asarray(values)
    count = x.size if axis is None else x.shape[axis]
    return tree_sum(x, axis) / count


def chunked(func, points, threads=1, chunk=CHUNK):
    """Apply ``func`` to fixed-size row blocks of ``points`` and concatenate in order.

    Block boundaries depend only on ``chunk``, never on ``threads``, and ``func`` must
    act row-wise, so the output bytes do not depend on the thread count.
    """
    points = np.asarray(points)
    blocks = [points[i:i + chunk] for i in range(0, len(points), chunk)] or [points]
    if threads <= 1 or len(blocks) == 1:
        results = [func(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(func, blocks))
    if isinstance(results[0], tuple):
        return tuple(np.concatenate(parts) for parts in zip(*results))
    return np.concatenate(results)


def apply_linear(M, x):
    """Row-wise ``x @ M.T`` using only elementwise operations (no BLAS blocking)."""
    M = np.asarray(M, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (M.shape[0],))
    for j in range(M.shape[1]):
        out += x[..., j, None] * M[:, j]
    return out


def matmul_points(A, B):
    """Batched matrix product over leading point axes without BLAS."""
    return np.einsum("...ij,...jk->...ik", A, B, optimize=False)


def matvec_points(A, v):
    return np.einsum("...ij,...j->...i", A, v, optimize=False)


def linear_fit(x, y):
    """Ordinary least squares y ~ intercept + slope*x with tree-ordered sums.

    Returns (slope, intercept, r_squared); r_squared is 1 for an exact fit and
    nan when y is constant.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        raise ValueError("a line fit needs at least two points")
    mx, my = tree_mean(x), tree_mean(y)
    dx, dy = x - mx, y - my
    sxx = tree_sum(dx * dx)
    if sxx == 0:
        raise ValueError("abscissae are all equal")
    slope = tree_sum(dx * dy) / sxx
    intercept = my - slope * mx
    resid = y - (intercept + slope * x)
    syy = tree_sum(dy * dy)
    r2 = 1.0 - tree_sum(resid * resid) / syy if syy > 0 else float("nan")
    return float(slope), float(intercept), float(r2)
