"""Graph samples, datasets, TUDataset I/O, synthetic generation and client partitioning."""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, FormatError, IntegrityError

log = logging.getLogger(__name__)

STRUCT_DIM = 32


@dataclass(frozen=True)
class Graph:
    num_nodes: int
    edges: np.ndarray  # (E, 2) int64, u < v, sorted, unique
    node_features: np.ndarray  # (num_nodes, F)
    label: int
    node_struct: Optional[np.ndarray] = None  # (num_nodes, 32) once annotated

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= self.num_nodes:
                raise IntegrityError("edge endpoint outside graph")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise IntegrityError("self-loop in graph")
        edges = np.sort(edges, axis=1)
        edges = np.unique(edges, axis=0) if edges.size else edges
        object.__setattr__(self, "edges", edges)
        feats = np.asarray(self.node_features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != self.num_nodes:
            raise IntegrityError(f"node_features must have shape ({self.num_nodes}, F), got {feats.shape}")
        object.__setattr__(self, "node_features", feats)
        if self.node_struct is None:
            object.__setattr__(self, "node_struct", np.zeros((self.num_nodes, STRUCT_DIM)))
        else:
            struct = np.asarray(self.node_struct, dtype=np.float64)
            if struct.ndim != 2 or struct.shape[0] != self.num_nodes:
                raise IntegrityError("node_struct must have one row per node")
            object.__setattr__(self, "node_struct", struct)

    @property
    def feature_dim(self) -> int:
        return self.node_features.shape[1]

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.num_nodes, self.num_nodes))
        if len(self.edges):
            A[self.edges[:, 0], self.edges[:, 1]] = 1.0
            A[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return A

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        if len(self.edges):
            np.add.at(deg, self.edges.ravel(), 1)
        return deg

    def permuted(self, perm: Sequence[int]) -> "Graph":
        """Relabel node ``u`` as ``perm[u]``."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return Graph(
            num_nodes=self.num_nodes,
            edges=perm[self.edges] if len(self.edges) else self.edges,
            node_features=self.node_features[inv],
            label=self.label,
            node_struct=self.node_struct[inv],
        )

    def equals(self, other: "Graph") -> bool:
        return (
            self.num_nodes == other.num_nodes
            and self.label == other.label
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.node_features, other.node_features)
            and np.array_equal(self.node_struct, other.node_struct)
        )


@dataclass(frozen=True)
class Dataset:
    graphs: tuple
    num_classes: int
    feature_dim: int

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        if self.num_classes < 2:
            raise ConfigError("dataset needs at least 2 classes")
        seen = set()
        for g in self.graphs:
            if not 0 <= g.label < self.num_classes:
                raise IntegrityError(f"label {g.label} outside [0, {self.num_classes})")
            if g.feature_dim != self.feature_dim:
                raise IntegrityError("inconsistent node feature dimension")
            seen.add(g.label)
        if len(seen) != self.num_classes:
            raise IntegrityError("every class needs at least one graph")

    def __len__(self):
        return len(self.graphs)

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    def equals(self, other: "Dataset") -> bool:
        return (
            self.num_classes == other.num_classes
            and self.feature_dim == other.feature_dim
            and len(self) == len(other)
            and all(a.equals(b) for a, b in zip(self.graphs, other.graphs))
        )


# ---------------------------------------------------------------------------
# TUDataset text format


def _read_rows(path, dtype=float):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([dtype(tok) for tok in line.replace(",", " ").split()])
    return rows


def _find(directory, name, suffix, required=True):
    path = os.path.join(directory, f"{name}_{suffix}.txt")
    if not os.path.exists(path):
        if required:
            raise FormatError(f"missing required file {os.path.basename(path)}")
        return None
    return path


def _guess_name(directory):
    for fname in sorted(os.listdir(directory)):
        if fname.endswith("_graph_indicator.txt"):
            return fname[: -len("_graph_indicator.txt")]
    raise FormatError(f"missing required file *_graph_indicator.txt in {directory}")


def load_tudataset(path, name: Optional[str] = None) -> Dataset:
    """Load a graph-classification dataset in the TUDataset text layout.

    Node attributes are used as features when present; otherwise node labels
    are one-hot encoded. Graph labels are remapped to ``0..C-1`` in sorted order.
    """
    name = name or _guess_name(path)
    ind_path = _find(path, name, "graph_indicator")
    edge_path = _find(path, name, "A")
    glabel_path = _find(path, name, "graph_labels")
    nlabel_path = _find(path, name, "node_labels", required=False)
    nattr_path = _find(path, name, "node_attributes", required=False)

    indicator = np.array([r[0] for r in _read_rows(ind_path, int)], dtype=np.int64)
    graph_labels = [r[0] for r in _read_rows(glabel_path, int)]
    num_graphs = len(graph_labels)
    if indicator.size and (indicator.min() < 1 or indicator.max() > num_graphs):
        raise IntegrityError(f"{os.path.basename(ind_path)} refers to a graph that has no label")

    num_total = len(indicator)
    if nattr_path is not None:
        feats = np.array(_read_rows(nattr_path, float), dtype=np.float64)
        if feats.shape[0] != num_total:
            raise IntegrityError(f"{os.path.basename(nattr_path)} has {feats.shape[0]} rows, expected {num_total}")
    elif nlabel_path is not None:
        nlab = np.array([r[0] for r in _read_rows(nlabel_path, int)], dtype=np.int64)
        if nlab.shape[0] != num_total:
            raise IntegrityError(f"{os.path.basename(nlabel_path)} has {nlab.shape[0]} rows, expected {num_total}")
        values = np.unique(nlab)
        feats = np.zeros((num_total, len(values)))
        feats[np.arange(num_total), np.searchsorted(values, nlab)] = 1.0
    else:
        feats = np.ones((num_total, 1))

    # global node id (0-based) -> (graph, local id)
    graph_of = indicator - 1
    order = np.argsort(graph_of, kind="stable")
    if not np.array_equal(order, np.arange(num_total)):
        raise IntegrityError("graph_indicator must list nodes grouped by graph")
    starts = np.searchsorted(graph_of, np.arange(num_graphs))
    counts = np.bincount(graph_of, minlength=num_graphs)

    edges_by_graph = [[] for _ in range(num_graphs)]
    for u, v in _read_rows(edge_path, int):
        u -= 1
        v -= 1
        if not (0 <= u < num_total and 0 <= v < num_total):
            raise IntegrityError(f"edge ({u + 1}, {v + 1}) refers to an undeclared node")
        gu, gv = graph_of[u], graph_of[v]
        if gu != gv:
            raise IntegrityError(f"edge ({u + 1}, {v + 1}) crosses graphs {gu + 1} and {gv + 1}")
        if u != v:
            edges_by_graph[gu].append((u - starts[gu], v - starts[gu]))

    label_values = sorted(set(graph_labels))
    remap = {lab: i for i, lab in enumerate(label_values)}
    graphs = []
    for gi in range(num_graphs):
        s, n = starts[gi], counts[gi]
        graphs.append(Graph(
            num_nodes=int(n),
            edges=np.array(edges_by_graph[gi], dtype=np.int64).reshape(-1, 2),
            node_features=feats[s:s + n],
            label=remap[graph_labels[gi]],
        ))
    return Dataset(graphs=graphs, num_classes=len(label_values), feature_dim=feats.shape[1])


def write_tudataset(dataset: Dataset, path, name: str = "DS") -> None:
    """Write ``dataset`` in TUDataset layout; node features go to ``node_attributes``."""
    os.makedirs(path, exist_ok=True)
    offset = 0
    with open(os.path.join(path, f"{name}_A.txt"), "w") as fa, \
            open(os.path.join(path, f"{name}_graph_indicator.txt"), "w") as fi, \
            open(os.path.join(path, f"{name}_graph_labels.txt"), "w") as fl, \
            open(os.path.join(path, f"{name}_node_attributes.txt"), "w") as fx:
        for gi, g in enumerate(dataset.graphs):
            for u, v in g.edges:
                fa.write(f"{u + offset + 1}, {v + offset + 1}\n")
                fa.write(f"{v + offset + 1}, {u + offset + 1}\n")
            for row in g.node_features:
                fi.write(f"{gi + 1}\n")
                fx.write(", ".join(repr(float(x)) for x in row) + "\n")
            fl.write(f"{g.label}\n")
            offset += g.num_nodes


# ---------------------------------------------------------------------------
# Synthetic data

MOTIFS = ("ring", "chain", "star", "random")


@dataclass(frozen=True)
class ClassSpec:
    motif: str = "random"
    feature_direction: Optional[int] = None  # index of the planted unit direction


@dataclass(frozen=True)
class SyntheticSpec:
    classes: tuple = (ClassSpec("ring"), ClassSpec("chain"))
    graphs_per_class: int = 20
    min_nodes: int = 8
    max_nodes: int = 14
    feature_dim: int = 8
    feature_signal: float = 1.0
    feature_noise: float = 1.0
    extra_edge_prob: float = 0.0  # random chords added on top of the backbone

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if len(self.classes) < 2:
            raise ConfigError("synthetic spec needs at least 2 classes")
        for c in self.classes:
            if c.motif not in MOTIFS:
                raise ConfigError(f"unknown motif {c.motif!r}; expected one of {MOTIFS}")
            if c.feature_direction is not None and not 0 <= c.feature_direction < self.feature_dim:
                raise ConfigError("feature_direction outside feature_dim")
        if self.min_nodes < 3 or self.max_nodes < self.min_nodes:
            raise ConfigError("need 3 <= min_nodes <= max_nodes")
        if self.graphs_per_class < 1:
            raise ConfigError("graphs_per_class must be positive")


def _backbone(motif, n, rng):
    if motif == "ring":
        return [(i, (i + 1) % n) for i in range(n)]
    if motif == "chain":
        return [(i, i + 1) for i in range(n - 1)]
    if motif == "star":
        return [(0, i) for i in range(1, n)]
    # random tree
    return [(int(rng.integers(0, i)), i) for i in range(1, n)]


def generate_synthetic(spec: SyntheticSpec, seed: int) -> Dataset:
    rng = np.random.default_rng(seed)
    graphs = []
    for label, cls in enumerate(spec.classes):
        for _ in range(spec.graphs_per_class):
            n = int(rng.integers(spec.min_nodes, spec.max_nodes + 1))
            edges = set(tuple(sorted(e)) for e in _backbone(cls.motif, n, rng))
            if spec.extra_edge_prob > 0:
                for u in range(n):
                    for v in range(u + 1, n):
                        if rng.random() < spec.extra_edge_prob:
                            edges.add((u, v))
            feats = spec.feature_noise * rng.standard_normal((n, spec.feature_dim))
            if cls.feature_direction is not None:
                feats[:, cls.feature_direction] += spec.feature_signal
            graphs.append(Graph(
                num_nodes=n,
                edges=np.array(sorted(edges), dtype=np.int64).reshape(-1, 2),
                node_features=feats,
                label=label,
            ))
    return Dataset(graphs=graphs, num_classes=len(spec.classes), feature_dim=spec.feature_dim)


# ---------------------------------------------------------------------------
# Partitioning


@dataclass(frozen=True)
class NonIID:
    frac: float = 0.5

    def __post_init__(self):
        if not 0 < self.frac <= 1:
            raise ConfigError("non-IID fraction must lie in (0, 1]")


IID = "iid"


@dataclass
class ClientPartition:
    assignments: list  # per client: list of dataset indices
    splits: list  # per client: (train, val, test) index lists
    dominant: list = field(default_factory=list)  # per client: dominant class or None
    warnings: list = field(default_factory=list)

    @property
    def num_clients(self) -> int:
        return len(self.assignments)


def split_indices(indices: Sequence[int], rng) -> tuple:
    """Shuffle and split 8:1:1; val and test take the floor, train the rest."""
    idx = [int(i) for i in rng.permutation(np.asarray(indices, dtype=np.int64))]
    k = len(idx)
    n_val = n_test = k // 10
    n_train = k - n_val - n_test
    return idx[:n_train], idx[n_train:n_train + n_val], idx[n_train + n_val:]


def partition(dataset: Dataset, num_clients: int, mode=IID, seed: int = 0,
              samples_per_client: Optional[int] = None) -> ClientPartition:
    """Assign disjoint subsets of ``dataset`` to clients and split each 8:1:1.

    ``mode`` is ``IID`` (the string ``"iid"``) or a :class:`NonIID` instance.
    Each client receives ``samples_per_client`` graphs, by default
    ``len(dataset) // num_clients``.
    """
    if num_clients < 2:
        raise ConfigError("partition needs at least 2 clients")
    k = samples_per_client or len(dataset) // num_clients
    if k * num_clients > len(dataset):
        raise ConfigError(f"{num_clients} clients x {k} graphs exceeds dataset size {len(dataset)}")
    if k < 10:
        raise ConfigError(f"each client needs at least 10 graphs, got {k}")
    rng = np.random.default_rng(seed)
    labels = dataset.labels
    C = dataset.num_classes

    if mode == IID or mode is None:
        perm = rng.permutation(len(dataset))
        assignments = [sorted(int(i) for i in perm[c * k:(c + 1) * k]) for c in range(num_clients)]
        dominant = [None] * num_clients
        warnings = []
    elif isinstance(mode, NonIID):
        pools = [list(rng.permutation(np.flatnonzero(labels == c))) for c in range(C)]
        assignments, dominant, warnings = [], [], []
        need = math.ceil(mode.frac * k - 1e-9)
        for client in range(num_clients):
            cls = int(rng.integers(C))
            if len(pools[cls]) < need:
                sizes = np.array([len(p) for p in pools])
                fallback = int(np.argmax(sizes))
                msg = (f"client {client}: class {cls} has {len(pools[cls])} graphs left, "
                       f"need {need}; falling back to class {fallback}")
                if sizes[fallback] < need:
                    msg += f" which only has {sizes[fallback]}"
                log.warning(msg)
                warnings.append((client, msg))
                cls = fallback
            take = min(need, len(pools[cls]))
            chosen = [int(i) for i in pools[cls][:take]]
            pools[cls] = pools[cls][take:]
            rest = np.array(sorted(i for p in pools for i in p), dtype=np.int64)
            extra = rng.choice(rest, size=k - take, replace=False) if k > take else []
            extra = set(int(i) for i in extra)
            for c in range(C):
                pools[c] = [i for i in pools[c] if int(i) not in extra]
            assignments.append(sorted(chosen + list(extra)))
            dominant.append(cls)
    else:
        raise ConfigError(f"unknown partition mode {mode!r}")

    splits = [split_indices(a, rng) for a in assignments]
    return ClientPartition(assignments=assignments, splits=splits, dominant=dominant, warnings=warnings)


def with_struct(graph: Graph, struct: np.ndarray) -> Graph:
    return replace(graph, node_struct=struct)
