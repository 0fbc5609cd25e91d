"""Reference computations kept independent of the package code paths they check."""
import itertools

import numpy as np


def floyd_warshall(dist):
    """All-pairs shortest paths with ties broken by (length, hops, vertex list).

    Lengths are re-summed left to right along each candidate path so they can
    be compared bit-for-bit with a forward relaxation.
    """
    n = len(dist)

    def path_len(path):
        total = 0.0
        for a, b in zip(path, path[1:]):
            total = total + float(dist[a][b])
        return total

    best = {}
    for i in range(n):
        for j in range(n):
            path = (i,) if i == j else (i, j)
            best[i, j] = (path_len(path), len(path) - 1, path)
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if k in (i, j):
                    continue
                left, right = best[i, k][2], best[k, j][2]
                if set(left) & set(right[1:]):
                    continue
                path = left + right[1:]
                cand = (path_len(path), len(path) - 1, path)
                if cand < best[i, j]:
                    best[i, j] = cand
    lengths = np.array([[best[i, j][0] for j in range(n)] for i in range(n)])
    paths = {(i, j): list(best[i, j][2]) for i in range(n) for j in range(n)}
    return lengths, paths


def brute_force_shortest(dist, s, t):
    """Enumerate every simple path (tiny n only)."""
    n = len(dist)
    others = [v for v in range(n) if v not in (s, t)]
    best = None
    for r in range(len(others) + 1):
        for mid in itertools.permutations(others, r):
            path = (s,) + mid + (t,) if s != t else (s,)
            total = 0.0
            for a, b in zip(path, path[1:]):
                total += dist[a][b]
            cand = (total, len(path) - 1, path)
            if best is None or cand < best:
                best = cand
    return best


def walk_return_probability(adj, node, steps):
    """Sum of probabilities of all ``steps``-long random walks from ``node`` back to it."""
    n = len(adj)
    nbrs = [[v for v in range(n) if adj[u][v]] for u in range(n)]
    total = 0.0

    def rec(u, depth, prob):
        nonlocal total
        if depth == steps:
            if u == node:
                total += prob
            return
        if not nbrs[u]:
            return
        for v in nbrs[u]:
            rec(v, depth + 1, prob / len(nbrs[u]))

    rec(node, 0, 1.0)
    return total


def central_differences(f, x, h=1e-4):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def max_relative_error(analytic, numeric, floor=1e-6):
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def nearest_centroid_accuracy(X, y):
    classes = np.unique(y)
    centroids = np.stack([X[y == c].mean(axis=0) for c in classes])
    d = ((X[:, None, :] - centroids[None]) ** 2).sum(-1)
    return float(np.mean(classes[d.argmin(axis=1)] == y))


def activation_patterns(forward_with_cache, values):
    _, (saved, _) = forward_with_cache(values)
    return [Z > 0 for _, Z in saved]


def stencil_is_smooth(forward_with_cache, values, h=1e-4):
    """True when no ReLU switches state anywhere in the +-h central-difference stencil."""
    base = activation_patterns(forward_with_cache, values)
    for i in range(values.size):
        for sign in (1.0, -1.0):
            v = values.copy()
            v[i] += sign * h
            if any(not np.array_equal(a, b) for a, b in zip(base, activation_patterns(forward_with_cache, v))):
                return False
    return True
