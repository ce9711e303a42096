"""Inner loops of the class-center loss, with a numba and a numpy route.

The numba route is used when numba imports and ``FEDLF_DISABLE_JIT`` is unset
(or "0"). Both routes are always importable as ``*_numpy`` / ``*_numba`` so
tests and ``benchmarks/bench_kernels.py`` can compare them directly.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

DIST_EPS = 1e-12


def _jit_disabled() -> bool:
    return os.environ.get("FEDLF_DISABLE_JIT", "0").strip().lower() not in ("", "0", "false", "no")


USE_JIT = HAVE_NUMBA and not _jit_disabled()


def center_loss_numpy(h, labels, centers, present, q):
    """Margin contrastive loss of features against class centers.

    Per sample with class y the logits are ``-(dist(h, p_y) + q)`` for the
    positive and ``-dist(h, p_c)`` for every other present class c; the loss
    is the summed softmax cross-entropy selecting the positive.

    Returns ``(loss, grad_h, grad_centers, dloss_dq)``.
    """
    diff = h[:, None, :] - centers[None, :, :]            # (B, C, d)
    sq = np.einsum("bcd,bcd->bc", diff, diff)
    dist = np.sqrt(sq)
    b = np.arange(h.shape[0])
    logits = -dist
    logits[b, labels] -= q
    neg_mask = np.broadcast_to(present, logits.shape).copy()
    neg_mask[b, labels] = True
    logits = np.where(neg_mask, logits, -np.inf)
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    s = e / e.sum(axis=1, keepdims=True)
    loss = float(-(np.log(s[b, labels])).sum())
    # dL/dlogit = s - onehot; dist enters logits with sign -1
    g_dist = -s
    g_dist[b, labels] += 1.0
    dq = float(g_dist[b, labels].sum())
    coef = g_dist / np.sqrt(sq + DIST_EPS * DIST_EPS)   # zero where masked since s == 0
    wdiff = coef[:, :, None] * diff
    grad_h = wdiff.sum(axis=1)
    grad_c = -wdiff.sum(axis=0)
    return loss, grad_h, grad_c, dq


def max_pairwise_distance_numpy(centers, present):
    p = centers[present]
    if p.shape[0] < 2:
        return 0.0
    diff = p[:, None, :] - p[None, :, :]
    return float(np.sqrt(np.einsum("ijd,ijd->ij", diff, diff).max()))


if HAVE_NUMBA:

    @njit(cache=True)
    def center_loss_numba(h, labels, centers, present, q):
        n, d = h.shape
        c_count = centers.shape[0]
        grad_h = np.zeros_like(h)
        grad_c = np.zeros_like(centers)
        dist = np.empty(c_count)
        logits = np.empty(c_count)
        loss = 0.0
        dq = 0.0
        for i in range(n):
            y = labels[i]
            m = -np.inf
            for c in range(c_count):
                if not present[c] and c != y:
                    continue
                acc = 0.0
                for k in range(d):
                    t = h[i, k] - centers[c, k]
                    acc += t * t
                dist[c] = np.sqrt(acc)
                logits[c] = -dist[c] - q if c == y else -dist[c]
                if logits[c] > m:
                    m = logits[c]
            total = 0.0
            for c in range(c_count):
                if present[c] or c == y:
                    total += np.exp(logits[c] - m)
            loss += -(logits[y] - m - np.log(total))
            for c in range(c_count):
                if not present[c] and c != y:
                    continue
                s = np.exp(logits[c] - m) / total
                g = 1.0 - s if c == y else -s
                if c == y:
                    dq += g
                coef = g / np.sqrt(dist[c] * dist[c] + DIST_EPS * DIST_EPS)
                for k in range(d):
                    t = coef * (h[i, k] - centers[c, k])
                    grad_h[i, k] += t
                    grad_c[c, k] -= t
        return loss, grad_h, grad_c, dq

    @njit(cache=True)
    def max_pairwise_distance_numba(centers, present):
        c_count, d = centers.shape
        best = 0.0
        seen = 0
        for a in range(c_count):
            if not present[a]:
                continue
            seen += 1
            for b in range(a + 1, c_count):
                if not present[b]:
                    continue
                acc = 0.0
                for k in range(d):
                    t = centers[a, k] - centers[b, k]
                    acc += t * t
                if acc > best:
                    best = acc
        if seen < 2:
            return 0.0
        return np.sqrt(best)

else:  # pragma: no cover
    center_loss_numba = center_loss_numpy
    max_pairwise_distance_numba = max_pairwise_distance_numpy


def center_loss(h, labels, centers, present, q):
    h = np.ascontiguousarray(h, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    present = np.ascontiguousarray(present, dtype=np.bool_)
    fn = center_loss_numba if USE_JIT else center_loss_numpy
    loss, gh, gc, dq = fn(h, labels, centers, present, float(q))
    return float(loss), gh, gc, float(dq)


def max_pairwise_distance(centers, present):
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    present = np.ascontiguousarray(present, dtype=np.bool_)
    fn = max_pairwise_distance_numba if USE_JIT else max_pairwise_distance_numpy
    return float(fn(centers, present))
