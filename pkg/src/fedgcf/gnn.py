"""A small numpy GNN stack: GCN / GIN message passing, mean readout, linear head,
cross-entropy with hand-written backprop, and Adam.

Parameters live in a flat float64 vector (:class:`ModelParams`) so that
aggregation, similarity and communication accounting all work on one array.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, NumericError
from .graphs import Graph

GCN = "gcn"
GIN = "gin"
GIN_EPS = 0.0


@dataclass(frozen=True)
class ModelSpec:
    arch: str
    input_dim: int
    num_classes: int
    hidden_dim: int = 64
    num_layers: int = 3
    source: Optional[str] = None  # "features" or "struct"; defaults by arch

    def __post_init__(self):
        if self.arch not in (GCN, GIN):
            raise ContractError(f"unknown architecture {self.arch!r}")
        if self.num_layers < 1 or min(self.input_dim, self.hidden_dim, self.num_classes) < 1:
            raise ContractError("num_layers and all dims must be >= 1")
        if self.source is None:
            object.__setattr__(self, "source", "features" if self.arch == GCN else "struct")
        if self.source not in ("features", "struct"):
            raise ContractError(f"unknown input source {self.source!r}")

    def manifest(self) -> tuple:
        shapes = []
        d_in = self.input_dim
        for l in range(self.num_layers):
            shapes.append((f"layer{l}.weight", (d_in, self.hidden_dim)))
            shapes.append((f"layer{l}.bias", (self.hidden_dim,)))
            d_in = self.hidden_dim
        shapes.append(("head.weight", (d_in, self.num_classes)))
        shapes.append(("head.bias", (self.num_classes,)))
        return tuple(shapes)


def node_spec(feature_dim, num_classes, hidden_dim=64, num_layers=3) -> ModelSpec:
    return ModelSpec(GCN, feature_dim, num_classes, hidden_dim, num_layers, "features")


def struct_spec(struct_dim, num_classes, hidden_dim=64, num_layers=3) -> ModelSpec:
    return ModelSpec(GIN, struct_dim, num_classes, hidden_dim, num_layers, "struct")


@dataclass
class ModelParams:
    values: np.ndarray
    manifest: tuple

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        self.manifest = tuple((str(n), tuple(int(d) for d in s)) for n, s in self.manifest)
        expected = sum(int(np.prod(s)) for _, s in self.manifest)
        if expected != self.values.size:
            raise ContractError(f"manifest describes {expected} values, got {self.values.size}")

    @property
    def size(self) -> int:
        return self.values.size

    def arrays(self) -> dict:
        """Named reshaped views into ``values`` (writes go through)."""
        out, pos = {}, 0
        for name, shape in self.manifest:
            n = int(np.prod(shape))
            out[name] = self.values[pos:pos + n].reshape(shape)
            pos += n
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(self.values.copy(), self.manifest)

    def zeros_like(self) -> "ModelParams":
        return ModelParams(np.zeros_like(self.values), self.manifest)

    def check_compatible(self, other: "ModelParams", what="models"):
        if self.manifest != other.manifest:
            raise ContractError(f"{what} have different manifests")

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self.manifest == other.manifest and np.array_equal(self.values, other.values)

    # serialisation: raw little-endian float64 plus a JSON manifest sidecar
    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.values.astype("<f8").tobytes())
        with open(str(path) + ".json", "w") as fh:
            json.dump({"dtype": "<f8", "manifest": [[n, list(s)] for n, s in self.manifest]}, fh, indent=2)

    @classmethod
    def load(cls, path) -> "ModelParams":
        with open(str(path) + ".json") as fh:
            meta = json.load(fh)
        with open(path, "rb") as fh:
            values = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
        return cls(values, tuple((n, tuple(s)) for n, s in meta["manifest"]))


def init_params(spec: ModelSpec, rng) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    chunks = []
    for name, shape in spec.manifest():
        if name.endswith("weight"):
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            chunks.append(rng.uniform(-limit, limit, size=shape).ravel())
        else:
            chunks.append(np.zeros(shape))
    return ModelParams(np.concatenate(chunks), spec.manifest())


@dataclass
class DualBranchModel:
    node_branch: Optional[ModelParams]
    struct_branch: Optional[ModelParams]
    ratio: float  # weight of the structural branch

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ContractError(f"fusion ratio {self.ratio} outside [0, 1]")
        if self.node_branch is None and self.ratio < 1.0:
            raise ContractError("node branch missing but ratio < 1")
        if self.struct_branch is None and self.ratio > 0.0:
            raise ContractError("struct branch missing but ratio > 0")

    def copy(self) -> "DualBranchModel":
        return DualBranchModel(
            self.node_branch.copy() if self.node_branch is not None else None,
            self.struct_branch.copy() if self.struct_branch is not None else None,
            self.ratio,
        )


# ---------------------------------------------------------------------------
# Batched graphs


def _block_diag(mats):
    return sp.block_diag(mats, format="csr") if mats else sp.csr_matrix((0, 0))


class GraphBatch:
    """Disjoint union of graphs with cached propagation and pooling matrices."""

    def __init__(self, graphs: Sequence[Graph]):
        if not graphs:
            raise ContractError("empty batch")
        self.graphs = list(graphs)
        self.labels = np.array([g.label for g in graphs], dtype=np.int64)
        sizes = np.array([g.num_nodes for g in graphs])
        self.sizes = sizes
        self._inputs = {}
        self._prop = {}
        rows = np.repeat(np.arange(len(graphs)), sizes)
        cols = np.arange(sizes.sum())
        self.pool = sp.csr_matrix((1.0 / sizes[rows], (rows, cols)), shape=(len(graphs), sizes.sum()))

    def __len__(self):
        return len(self.graphs)

    def inputs(self, source: str) -> np.ndarray:
        if source not in self._inputs:
            attr = "node_features" if source == "features" else "node_struct"
            self._inputs[source] = np.concatenate([getattr(g, attr) for g in self.graphs], axis=0)
        return self._inputs[source]

    def propagation(self, arch: str):
        if arch not in self._prop:
            mats = []
            for g in self.graphs:
                A = g.adjacency()
                if arch == GCN:
                    At = A + np.eye(g.num_nodes)
                    d = 1.0 / np.sqrt(At.sum(axis=1))
                    mats.append(d[:, None] * At * d[None, :])
                else:
                    mats.append(A + (1.0 + GIN_EPS) * np.eye(g.num_nodes))
            self._prop[arch] = _block_diag(mats)
        return self._prop[arch]


def _as_batch(graphs) -> GraphBatch:
    return graphs if isinstance(graphs, GraphBatch) else GraphBatch(list(graphs))


def forward_batch(params: ModelParams, spec: ModelSpec, batch: GraphBatch, cache=False):
    if params.manifest != spec.manifest():
        raise ContractError("parameter manifest does not match the model spec")
    P = params.arrays()
    H = batch.inputs(spec.source)
    if H.shape[1] != spec.input_dim:
        raise ContractError(
            f"layer0: expected input dim {spec.input_dim} ({spec.source}), got {H.shape[1]}")
    A = batch.propagation(spec.arch)
    saved = []
    for l in range(spec.num_layers):
        M = A @ H
        Z = M @ P[f"layer{l}.weight"] + P[f"layer{l}.bias"]
        saved.append((M, Z))
        H = np.maximum(Z, 0.0)
    g = batch.pool @ H
    logits = g @ P["head.weight"] + P["head.bias"]
    if cache:
        return logits, (saved, g)
    return logits


def backward_batch(params: ModelParams, spec: ModelSpec, batch: GraphBatch, cached, dlogits) -> ModelParams:
    P = params.arrays()
    grad = params.zeros_like()
    G = grad.arrays()
    saved, g = cached
    G["head.weight"][...] = g.T @ dlogits
    G["head.bias"][...] = dlogits.sum(axis=0)
    dH = batch.pool.T @ (dlogits @ P["head.weight"].T)
    A = batch.propagation(spec.arch)
    for l in reversed(range(spec.num_layers)):
        M, Z = saved[l]
        dZ = dH * (Z > 0)
        G[f"layer{l}.weight"][...] = M.T @ dZ
        G[f"layer{l}.bias"][...] = dZ.sum(axis=0)
        if l:
            dH = A.T @ (dZ @ P[f"layer{l}.weight"].T)
    return grad


def forward(params: ModelParams, spec: ModelSpec, graph: Graph) -> np.ndarray:
    return forward_batch(params, spec, GraphBatch([graph]))[0]


def _cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    per_graph = -logp[np.arange(len(labels)), labels]
    bad = np.flatnonzero(~np.isfinite(per_graph))
    if bad.size:
        raise NumericError(f"non-finite loss for graph {bad[0]} of the batch", graph_index=int(bad[0]))
    probs = np.exp(logp)
    probs[np.arange(len(labels)), labels] -= 1.0
    return per_graph.mean(), probs / len(labels)


def loss_and_grad(params: ModelParams, spec: ModelSpec, graphs) -> tuple:
    """Mean cross-entropy over ``graphs`` and its gradient as ModelParams."""
    batch = _as_batch(graphs)
    logits, cached = forward_batch(params, spec, batch, cache=True)
    loss, dlogits = _cross_entropy(logits, batch.labels)
    return loss, backward_batch(params, spec, batch, cached, dlogits)


def fused_logits_batch(model: DualBranchModel, specs, batch: GraphBatch) -> np.ndarray:
    nspec, sspec = specs
    lam = model.ratio
    if lam == 1.0:
        return forward_batch(model.struct_branch, sspec, batch)
    if lam == 0.0:
        return forward_batch(model.node_branch, nspec, batch)
    return lam * forward_batch(model.struct_branch, sspec, batch) + \
        (1.0 - lam) * forward_batch(model.node_branch, nspec, batch)


def fused_predict(model: DualBranchModel, specs, graph: Graph) -> np.ndarray:
    """Convex combination of branch logits; ``specs`` is ``(node_spec, struct_spec)``."""
    return fused_logits_batch(model, specs, GraphBatch([graph]))[0]


def fused_loss_and_grad(model: DualBranchModel, specs, graphs, joint: bool = True) -> tuple:
    """Loss and per-branch gradients ``(loss, node_grad, struct_grad)``.

    With ``joint`` the two branches share the cross-entropy of the fused logits;
    otherwise each branch minimises its own cross-entropy and the returned loss
    is the fused one (for monitoring). A branch that carries zero weight gets
    ``None`` as gradient.
    """
    batch = _as_batch(graphs)
    nspec, sspec = specs
    lam = model.ratio
    use_s = model.struct_branch is not None and (lam > 0.0 or not joint)
    use_n = model.node_branch is not None and (lam < 1.0 or not joint)
    logits = 0.0
    if use_s:
        ls, cs = forward_batch(model.struct_branch, sspec, batch, cache=True)
        logits = logits + lam * ls
    if use_n:
        ln, cn = forward_batch(model.node_branch, nspec, batch, cache=True)
        logits = logits + (1.0 - lam) * ln
    loss, dlogits = _cross_entropy(logits, batch.labels)
    g_n = g_s = None
    if joint:
        if use_s:
            g_s = backward_batch(model.struct_branch, sspec, batch, cs, lam * dlogits)
        if use_n:
            g_n = backward_batch(model.node_branch, nspec, batch, cn, (1.0 - lam) * dlogits)
    else:
        if use_s:
            g_s = backward_batch(model.struct_branch, sspec, batch, cs, _cross_entropy(ls, batch.labels)[1])
        if use_n:
            g_n = backward_batch(model.node_branch, nspec, batch, cn, _cross_entropy(ln, batch.labels)[1])
    return loss, g_n, g_s


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        return cls(np.zeros_like(params.values), np.zeros_like(params.values))

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.step, self.beta1, self.beta2, self.eps)


def adam_step(params: ModelParams, grad: ModelParams, state: Optional[AdamState], lr: float) -> tuple:
    params.check_compatible(grad, "params and gradient")
    state = AdamState.zeros(params) if state is None else state
    if state.m.shape != params.values.shape:
        raise ContractError("optimizer state does not match parameter vector")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad.values
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad.values ** 2
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_values = params.values - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return (ModelParams(new_values, params.manifest),
            AdamState(m, v, t, state.beta1, state.beta2, state.eps))
