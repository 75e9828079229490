"""Pure-Python reference kernels.

This module and the compiled ``_kernels`` extension expose the same
functions and consume random numbers in exactly the same order, so the
two backends build bit-identical trees from the same stream seed.  The
draw order is part of the seed plan:

* uniform trees: nodes in heap (breadth-first) order, two uniforms per
  internal node (dimension, then position inside the cell);
* quantile trees: ``a_n`` uniforms for the partial Fisher-Yates
  subsample, then cells in depth-first order (left subtree first), each
  consuming dimension draws until one with a non-zero coordinate range
  is found (at most ``d``), then one uniform for ``q_n`` when the
  quantile level is random.

Node arrays share one layout: ``feature`` (-1 on leaves), ``threshold``,
``left``/``right`` child ids (-1 on leaves), ``excluded`` (data index of
the split point removed by a quantile split, else -1), and per-leaf
``start``/``count`` into ``members``.  ``members`` lists retained data
indices grouped by ascending leaf id.  A query goes left when its
coordinate is strictly below the threshold.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"


class _Uniforms:
    """Sequential doubles from a Philox stream (same values as ``next_double``)."""

    __slots__ = ("_gen", "_buf", "_pos")

    def __init__(self, seed: int):
        self._gen = np.random.Generator(np.random.Philox(key=int(seed)))
        self._buf = self._gen.random(64).tolist()
        self._pos = 0

    def __call__(self) -> float:
        if self._pos == len(self._buf):
            self._buf = self._gen.random(256).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


def _dim(u: float, d: int) -> int:
    j = int(u * d)
    return j if j < d else d - 1


def quantile_rank(q_n: float, n_points: int) -> int:
    """1-based rank of the empirical ``q_n``-quantile, ``(l-1)/N <= q_n < l/N``."""
    ell = int(math.floor(q_n * n_points)) + 1
    while ell > 1 and (ell - 1) / n_points > q_n:
        ell -= 1
    while ell < n_points and ell / n_points <= q_n:
        ell += 1
    return ell


def quantile_level(n_points: int, q: float, fixed: float, u: float) -> float:
    """Admissible ``q_n`` in ``[1-q, q] ∩ (1/N, 1-1/N)``; ``fixed`` is NaN for random."""
    lo = max(1.0 - q, 1.0 / n_points)
    hi = min(q, 1.0 - 1.0 / n_points)
    if lo > hi:
        return 0.5
    if math.isnan(fixed):
        return lo + u * (hi - lo)
    return min(max(fixed, lo), hi)


def build_uniform(d: int, k: int, seed: int):
    n_internal = (1 << k) - 1
    n_nodes = (1 << (k + 1)) - 1
    feature = np.full(n_nodes, -1, dtype=np.int64)
    threshold = np.zeros(n_nodes)
    left = np.full(n_nodes, -1, dtype=np.int64)
    right = np.full(n_nodes, -1, dtype=np.int64)
    lo = np.zeros((n_nodes, d))
    hi = np.ones((n_nodes, d))
    draw = _Uniforms(seed)
    for i in range(n_internal):
        j = _dim(draw(), d)
        a = lo[i, j]
        b = hi[i, j]
        t = a + draw() * (b - a)
        feature[i] = j
        threshold[i] = t
        left[i] = 2 * i + 1
        right[i] = 2 * i + 2
        lo[2 * i + 1] = lo[i]
        hi[2 * i + 1] = hi[i]
        hi[2 * i + 1, j] = t
        lo[2 * i + 2] = lo[i]
        hi[2 * i + 2] = hi[i]
        lo[2 * i + 2, j] = t
    return feature, threshold, left, right


def _pick_dim(X, pts, d, draw):
    for _ in range(d):
        j = _dim(draw(), d)
        col = X[pts, j]
        if col.max() > col.min():
            return j
    return -1


def build_quantile(X, a_n: int, q: float, fixed_qn: float, seed: int):
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, d = X.shape
    draw = _Uniforms(seed)
    perm = list(range(n))
    for i in range(a_n):
        j = i + int(draw() * (n - i))
        if j >= n:
            j = n - 1
        perm[i], perm[j] = perm[j], perm[i]

    feature = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    excluded = [-1]
    leaf_pts = {}
    stack = [(0, perm[:a_n])]
    while stack:
        v, pts = stack.pop()
        N = len(pts)
        if N >= 2:
            j = _pick_dim(X, pts, d, draw)
        else:
            j = -1
        if j < 0:
            leaf_pts[v] = pts
            continue
        col = X[pts, j]
        if N >= 3:
            u = draw() if math.isnan(fixed_qn) else 0.0
            q_n = quantile_level(N, q, fixed_qn, u)
            ell = min(max(quantile_rank(q_n, N), 2), N - 1)
            order = sorted(range(N), key=lambda r: (col[r], pts[r]))
            e = pts[order[ell - 1]]
            t = float(X[e, j])
        else:
            e = -1
            t = 0.5 * (col[0] + col[1])
        lpts = [p for p, c in zip(pts, col) if c < t]
        rpts = [p for p, c in zip(pts, col) if c >= t and p != e]
        lid = len(feature)
        for _ in range(2):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            excluded.append(-1)
        feature[v] = j
        threshold[v] = t
        left[v] = lid
        right[v] = lid + 1
        excluded[v] = e
        stack.append((lid + 1, rpts))
        stack.append((lid, lpts))

    n_nodes = len(feature)
    start = np.zeros(n_nodes, dtype=np.int64)
    count = np.zeros(n_nodes, dtype=np.int64)
    members = []
    for v in range(n_nodes):
        if v in leaf_pts:
            start[v] = len(members)
            count[v] = len(leaf_pts[v])
            members.extend(leaf_pts[v])
    return (
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(excluded, dtype=np.int64),
        start,
        count,
        np.asarray(members, dtype=np.int64),
    )


def apply(feature, threshold, left, right, Q):
    Q = np.asarray(Q, dtype=np.float64)
    node = np.zeros(Q.shape[0], dtype=np.int64)
    rows = np.arange(Q.shape[0])
    active = feature[node] >= 0
    while active.any():
        idx = rows[active]
        nd = node[idx]
        go_left = Q[idx, feature[nd]] < threshold[nd]
        node[idx] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return node


def attach(feature, threshold, left, right, X):
    leaf = apply(feature, threshold, left, right, X)
    n_nodes = feature.shape[0]
    count = np.bincount(leaf, minlength=n_nodes).astype(np.int64)
    offsets = np.concatenate(([0], np.cumsum(count)[:-1])).astype(np.int64)
    start = np.where(count > 0, offsets, 0)
    members = np.argsort(leaf, kind="stable").astype(np.int64)
    return start, count, members


def leaf_values(start, count, members, Y):
    values = np.zeros(start.shape[0])
    for v in np.flatnonzero(count):
        seg = Y[members[start[v]:start[v] + count[v]]]
        values[v] = np.cumsum(seg)[-1] / count[v]
    return values


def uniform_predictions(X, Y, k: int, seeds, Q):
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    out = np.empty((len(seeds), np.asarray(Q).shape[0]))
    for t, seed in enumerate(seeds):
        feature, threshold, left, right = build_uniform(X.shape[1], k, int(seed))
        start, count, members = attach(feature, threshold, left, right, X)
        values = leaf_values(start, count, members, Y)
        out[t] = values[apply(feature, threshold, left, right, Q)]
    return out


def quantile_predictions(X, Y, a_n: int, q: float, fixed_qn: float, seeds, Q):
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    out = np.empty((len(seeds), np.asarray(Q).shape[0]))
    for t, seed in enumerate(seeds):
        feature, threshold, left, right, _, start, count, members = build_quantile(
            X, a_n, q, fixed_qn, int(seed)
        )
        values = leaf_values(start, count, members, Y)
        out[t] = values[apply(feature, threshold, left, right, Q)]
    return out


def neumaier_rows(block, s, c):
    """Add the rows of ``block`` into the running Neumaier sums ``(s, c)`` in order."""
    for row in np.asarray(block, dtype=np.float64):
        t = s + row
        big = np.abs(s) >= np.abs(row)
        c += np.where(big, (s - t) + row, (row - t) + s)
        s[:] = t
