"""Independent reference implementations used only by the tests."""

from collections import deque

import numpy as np

SQ = np.sqrt(0.5)


def embed_np(triples):
    """Vertex coordinates straight from the rotation vectors, via numpy cos/sin."""
    t = np.asarray(triples, dtype=float)
    pos, neu, neg = t[:, 0], t[:, 1], t[:, 2]
    p_pos = np.stack([np.zeros_like(pos), pos], axis=1)
    p_neg = neg[:, None] * np.array([np.cos(-np.pi / 4), np.sin(-np.pi / 4)])
    p_neu = neu[:, None] * np.array([np.cos(5 * np.pi / 4), np.sin(5 * np.pi / 4)])
    return p_pos, p_neg, p_neu


def cross_area(p_pos, p_neg, p_neu):
    d1 = p_neg - p_pos
    d2 = p_neu - p_pos
    return 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def brute_dbscan(points, eps, min_pts):
    """Textbook DBSCAN on a full distance matrix.

    Clusters are grown breadth-first from unvisited core points in input
    order; border points go to the cluster of their lowest-index core
    neighbor. Returns (labels, is_core) with noise = -1.
    """
    P = np.asarray(points, dtype=float)
    n = len(P)
    if n == 0:
        return np.empty(0, int), np.empty(0, bool)
    dist = np.sqrt(((P[:, None, :] - P[None, :, :]) ** 2).sum(axis=2))
    nbrs = [np.flatnonzero(dist[i] <= eps) for i in range(n)]
    core = np.array([len(nb) >= min_pts for nb in nbrs])
    labels = np.full(n, -1)
    cid = 0
    for i in range(n):
        if not core[i] or labels[i] != -1:
            continue
        labels[i] = cid
        queue = deque([i])
        while queue:
            j = queue.popleft()
            for k in nbrs[j]:
                if core[k] and labels[k] == -1:
                    labels[k] = cid
                    queue.append(k)
        cid += 1
    for i in range(n):
        if not core[i]:
            cores = [k for k in nbrs[i] if core[k]]
            if cores:
                labels[i] = labels[min(cores)]
    return labels, core


def same_partition(a, b):
    """True if label arrays induce the same partition (noise -1 must match exactly)."""
    a, b = np.asarray(a), np.asarray(b)
    if not np.array_equal(a == -1, b == -1):
        return False
    fwd, back = {}, {}
    for x, y in zip(a, b):
        if x == -1:
            continue
        if fwd.setdefault(x, y) != y or back.setdefault(y, x) != x:
            return False
    return True
