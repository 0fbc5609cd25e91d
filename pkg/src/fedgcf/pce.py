"""Parallel characteristic extraction on the server.

Structural side: k-means over clients' structural models, one weighted average
per cluster. Node side: cosine similarity between node models mapped to
distances, all-pairs shortest paths on the complete client graph, and a
weighted average over the clients lying on the P longest shortest paths.
"""
from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError
from .federated import aggregate
from .gnn import ModelParams

log = logging.getLogger(__name__)


def similarity(a: ModelParams, b: ModelParams) -> float:
    """Cosine similarity of two flat parameter vectors; 0 if either is all zeros."""
    a.check_compatible(b)
    na, nb = np.linalg.norm(a.values), np.linalg.norm(b.values)
    if na == 0.0 or nb == 0.0:
        return 0.0
    if np.array_equal(a.values, b.values):
        return 1.0  # exact, so identical models sit at distance zero
    return float(np.clip(np.dot(a.values, b.values) / (na * nb), -1.0, 1.0))


def default_dmax(alpha: float) -> float:
    return math.exp(10.0 * alpha)


def sim_to_dist(sigma: float, alpha: float = 2.0, d_max=None) -> float:
    """exp(alpha * (1 - sigma) / (1 + sigma)) - 1, capped at ``d_max`` (default e^(10 alpha))."""
    if alpha <= 0:
        raise ContractError("alpha must be positive")
    cap = default_dmax(alpha) if d_max is None else d_max
    if sigma <= -1.0:
        return cap
    expo = alpha * (1.0 - sigma) / (1.0 + sigma)
    if expo >= math.log(cap + 1.0):
        return cap
    return math.expm1(expo)


@dataclass
class ClusterAssignment:
    labels: list
    k: int

    def members(self, cluster: int) -> list:
        return [i for i, c in enumerate(self.labels) if c == cluster]

    def as_sets(self) -> set:
        return {frozenset(self.members(c)) for c in range(self.k)}


def _unit_rows(X):
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)


def _cos_dist(X, C):
    return 1.0 - _unit_rows(X) @ _unit_rows(C).T


def _kmeans_once(X, k, rng, max_iter, tol):
    n = X.shape[0]
    centers = [X[int(rng.integers(n))]]
    for _ in range(1, k):
        d = _cos_dist(X, np.array(centers)).min(axis=1).clip(min=0.0)
        w = d ** 2
        if w.sum() <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=w / w.sum()))
        centers.append(X[idx])
    C = _unit_rows(np.array(centers))
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        D = _cos_dist(X, C)
        labels = D.argmin(axis=1)
        labels = _repair_empty(labels, D, k)
        newC = np.array([X[labels == c].mean(axis=0) for c in range(k)])
        newC = _unit_rows(newC)
        moved = np.abs(newC - C).max()
        C = newC
        if moved < tol:
            break
    D = _cos_dist(X, C)
    inertia = float(D[np.arange(n), labels].sum())
    return labels, inertia


def _repair_empty(labels, D, k):
    labels = labels.copy()
    for c in range(k):
        if np.any(labels == c):
            continue
        counts = np.bincount(labels, minlength=k)
        own = D[np.arange(len(labels)), labels]
        own = np.where(counts[labels] > 1, own, -np.inf)
        victim = int(np.argmax(own))
        labels[victim] = c
    return labels


def _canonical(labels):
    """Renumber clusters by first appearance so equal partitions compare equal."""
    mapping = {}
    out = []
    for c in labels:
        mapping.setdefault(int(c), len(mapping))
        out.append(mapping[int(c)])
    return out


def cluster_structural(models: Sequence[ModelParams], k: int, seed: int = 0,
                       max_iter: int = 100, tol: float = 1e-8, n_init: int = 10) -> ClusterAssignment:
    """k-means with cosine distance over flattened models, k-means++ seeding.

    The best of ``n_init`` restarts (lowest summed distance) is kept.
    """
    n = len(models)
    if not 1 <= k <= n:
        raise ContractError(f"need 1 <= K <= N, got K={k}, N={n}")
    if k == 1:
        return ClusterAssignment([0] * n, 1)
    X = np.stack([m.values for m in models])
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        labels, inertia = _kmeans_once(X, k, rng, max_iter, tol)
        if best is None or inertia < best[1] - 1e-12:
            best = (labels, inertia)
    return ClusterAssignment(_canonical(best[0]), k)


def shared_structural_models(models: Sequence[ModelParams], counts: Sequence[int],
                             assignment: ClusterAssignment) -> dict:
    """Per-cluster sample-weighted average of the structural models."""
    out = {}
    for c in range(assignment.k):
        members = assignment.members(c)
        if not members:
            raise ContractError(f"cluster {c} is empty")
        out[c] = aggregate([(models[i], counts[i]) for i in members])
    return out


@dataclass
class ClientTopology:
    dist: np.ndarray
    lengths: np.ndarray
    paths: dict  # (i, j) -> list of vertices from i to j

    @property
    def n(self) -> int:
        return self.dist.shape[0]


def distance_matrix(models: Sequence[ModelParams], alpha: float = 2.0, d_max=None) -> np.ndarray:
    n = len(models)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = sim_to_dist(similarity(models[i], models[j]), alpha, d_max)
    return D


def dijkstra(dist: np.ndarray, source: int) -> tuple:
    """Shortest paths from ``source`` on the complete graph with weights ``dist``.

    Ties are broken by fewer hops, then by the lexicographically smallest
    vertex list. Returns ``(lengths, paths)``.
    """
    n = dist.shape[0]
    best = {source: (0.0, 0, (source,))}
    heap = [(0.0, 0, (source,))]
    done = set()
    while heap:
        length, hops, path = heapq.heappop(heap)
        u = path[-1]
        if u in done or best[u] != (length, hops, path):
            continue
        done.add(u)
        for v in range(n):
            if v == u or v in done:
                continue
            cand = (length + float(dist[u, v]), hops + 1, path + (v,))
            if v not in best or cand < best[v]:
                best[v] = cand
                heapq.heappush(heap, cand)
    lengths = np.array([best[v][0] for v in range(n)])
    paths = {v: list(best[v][2]) for v in range(n)}
    return lengths, paths


def shortest_paths(dist: np.ndarray) -> ClientTopology:
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1] or not np.array_equal(dist, dist.T):
        raise ContractError("distance matrix must be square and symmetric")
    n = dist.shape[0]
    lengths = np.zeros((n, n))
    paths = {}
    for s in range(n):
        ls, ps = dijkstra(dist, s)
        lengths[s] = ls
        for t in range(n):
            paths[(s, t)] = ps[t]
    return ClientTopology(dist, lengths, paths)


def build_topology(node_models: Sequence[ModelParams], alpha: float = 2.0, d_max=None) -> ClientTopology:
    if len(node_models) < 2:
        raise ContractError("topology needs at least 2 clients")
    return shortest_paths(distance_matrix(node_models, alpha, d_max))


def select_common_clients(topology: ClientTopology, p: int = 3) -> list:
    """Clients on the ``p`` longest pairwise shortest paths (sorted client ids)."""
    if p < 1:
        raise ContractError("P must be >= 1")
    n = topology.n
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if p > len(pairs):
        log.warning("P=%d exceeds the %d client pairs; using all pairs", p, len(pairs))
        p = len(pairs)
    pairs.sort(key=lambda ij: (-topology.lengths[ij], ij))
    chosen = set()
    for ij in pairs[:p]:
        chosen.update(topology.paths[ij])
    return sorted(chosen)


def common_node_model(models: Sequence[ModelParams], counts: Sequence[int], selected: Sequence[int]) -> ModelParams:
    if not selected:
        raise ContractError("no clients selected for the common node model")
    return aggregate([(models[i], counts[i]) for i in selected])
