"""Per-node structural vectors: random-walk return probabilities and clamped degree one-hot."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .graphs import Dataset, Graph, with_struct


@dataclass(frozen=True)
class StructConfig:
    rw_dim: int = 16
    deg_dim: int = 16

    def __post_init__(self):
        if self.rw_dim < 1 or self.deg_dim < 1:
            raise ConfigError("rw_dim and deg_dim must be >= 1")

    @property
    def dim(self) -> int:
        return self.rw_dim + self.deg_dim


def transition_matrix(graph: Graph) -> np.ndarray:
    """Row-normalised random-walk matrix D^-1 A; rows of isolated nodes stay zero."""
    A = graph.adjacency()
    deg = A.sum(axis=1)
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    return inv[:, None] * A


def random_walk_encoding(graph: Graph, rw_dim: int = 16) -> np.ndarray:
    """Return an (n, rw_dim) array whose column k holds diag(P^(k+1))."""
    P = transition_matrix(graph)
    out = np.zeros((graph.num_nodes, rw_dim))
    Pk = P
    for k in range(rw_dim):
        out[:, k] = np.diag(Pk)
        if k + 1 < rw_dim:
            Pk = Pk @ P
    return np.clip(out, 0.0, 1.0)


def degree_encoding(graph: Graph, deg_dim: int = 16) -> np.ndarray:
    deg = np.minimum(graph.degrees(), deg_dim - 1)
    out = np.zeros((graph.num_nodes, deg_dim))
    out[np.arange(graph.num_nodes), deg] = 1.0
    return out


def encode_graph(graph: Graph, config: StructConfig = StructConfig()) -> np.ndarray:
    return np.concatenate(
        [random_walk_encoding(graph, config.rw_dim), degree_encoding(graph, config.deg_dim)], axis=1)


def annotate(dataset: Dataset, config: StructConfig = StructConfig()) -> Dataset:
    """Fill ``node_struct`` of every graph. Recomputed from topology, so repeated calls agree."""
    graphs = [with_struct(g, encode_graph(g, config)) for g in dataset.graphs]
    return Dataset(graphs=graphs, num_classes=dataset.num_classes, feature_dim=dataset.feature_dim)
