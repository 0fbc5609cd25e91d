"""Client state, local training, weighted aggregation, evaluation and the two
baselines (FedAvg and purely local training)."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .config import RunConfig
from .errors import ContractError
from .gnn import (AdamState, DualBranchModel, GraphBatch, ModelParams, adam_step,
                  fused_logits_batch, fused_loss_and_grad, init_params, node_spec, struct_spec)
from .graphs import ClientPartition, Dataset, generate_synthetic, load_tudataset, partition
from .struct_encode import StructConfig, annotate

log = logging.getLogger(__name__)

WIRE_BYTES_PER_PARAM = 4


def aggregate(models: Sequence[tuple]) -> ModelParams:
    """Sample-weighted average of ``(ModelParams, n_i)`` pairs."""
    models = list(models)
    if not models:
        raise ContractError("aggregate needs at least one model")
    first = models[0][0]
    for m, _ in models[1:]:
        first.check_compatible(m, "aggregated models")
    weights = np.array([float(n) for _, n in models])
    total = weights.sum()
    if total <= 0:
        raise ContractError("aggregate needs a positive total sample count")
    if len(models) == 1:
        return first.copy()
    stacked = np.stack([m.values for m, _ in models])
    # offsets from the elementwise minimum, summed in sorted order: the result
    # is independent of client order and exact when all models coincide
    ref = stacked.min(axis=0)
    contrib = np.sort(weights[:, None] * (stacked - ref), axis=0)
    return ModelParams(ref + contrib.sum(axis=0) / total, first.manifest)


@dataclass
class ClientState:
    id: int
    train: list
    val: list
    test: list
    node_model: Optional[ModelParams] = None
    struct_model: Optional[ModelParams] = None
    opt_states: dict = field(default_factory=lambda: {"node": None, "struct": None})
    _batches: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_i(self) -> int:
        return len(self.train)

    def batch(self, split: str) -> Optional[GraphBatch]:
        graphs = getattr(self, split)
        if not graphs:
            return None
        if split not in self._batches:
            self._batches[split] = GraphBatch(graphs)
        return self._batches[split]


@dataclass
class CommLedger:
    uploaded: list = field(default_factory=list)
    downloaded: list = field(default_factory=list)

    def open_round(self):
        self.uploaded.append(0)
        self.downloaded.append(0)

    def download(self, num_params: int):
        self.downloaded[-1] += WIRE_BYTES_PER_PARAM * num_params

    def upload(self, num_params: int):
        self.uploaded[-1] += WIRE_BYTES_PER_PARAM * num_params

    def round_bytes(self, r: int) -> int:
        return self.uploaded[r] + self.downloaded[r]

    @property
    def total(self) -> int:
        return sum(self.uploaded) + sum(self.downloaded)

    def cumulative(self) -> list:
        return list(np.cumsum([u + d for u, d in zip(self.uploaded, self.downloaded)], dtype=np.int64))


def transfer_size(model: DualBranchModel) -> int:
    """Parameters moved when ``model`` crosses the wire; zero-weight branches are not sent."""
    n = 0
    if model.node_branch is not None and model.ratio < 1.0:
        n += model.node_branch.size
    if model.struct_branch is not None and model.ratio > 0.0:
        n += model.struct_branch.size
    return n


def local_train(client: ClientState, received: DualBranchModel, specs, epochs: int = 1,
                batch_size: int = 128, lr: float = 0.001, rng=None, joint: bool = True) -> ClientState:
    """Start from ``received`` and run ``epochs`` of minibatch Adam on the fused loss."""
    if client.node_model is not None and received.node_branch is not None:
        client.node_model.check_compatible(received.node_branch, "received node branch")
    if client.struct_model is not None and received.struct_branch is not None:
        client.struct_model.check_compatible(received.struct_branch, "received structural branch")
    model = received.copy()
    opt = dict(client.opt_states)
    if not client.train:
        log.warning("client %d has no training data; skipped", client.id)
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        n = client.n_i
        for _ in range(epochs):
            if batch_size >= n:
                batches = [client.batch("train")]
            else:
                order = rng.permutation(n)
                batches = [GraphBatch([client.train[i] for i in order[s:s + batch_size]])
                           for s in range(0, n, batch_size)]
            for batch in batches:
                _, g_n, g_s = fused_loss_and_grad(model, specs, batch, joint=joint)
                if g_n is not None:
                    model.node_branch, opt["node"] = adam_step(model.node_branch, g_n, opt["node"], lr)
                if g_s is not None:
                    model.struct_branch, opt["struct"] = adam_step(model.struct_branch, g_s, opt["struct"], lr)
    return replace(client,
                   node_model=model.node_branch if model.node_branch is not None else client.node_model,
                   struct_model=model.struct_branch if model.struct_branch is not None else client.struct_model,
                   opt_states=opt, _batches=client._batches)


def predictions(model: DualBranchModel, specs, graphs) -> np.ndarray:
    batch = graphs if isinstance(graphs, GraphBatch) else GraphBatch(list(graphs))
    return fused_logits_batch(model, specs, batch).argmax(axis=1)


def evaluate(model: DualBranchModel, specs, graphs) -> float:
    """Fraction of graphs whose fused argmax (lowest index on ties) equals the label."""
    batch = graphs if isinstance(graphs, GraphBatch) else GraphBatch(list(graphs))
    return float(np.mean(predictions(model, specs, batch) == batch.labels))


def pooled_accuracy(models: Sequence[DualBranchModel], clients: Sequence[ClientState], specs) -> tuple:
    """Accuracy over the union of all test splits, and the mean of per-client accuracies."""
    correct = total = 0
    per_client = []
    for model, client in zip(models, clients):
        batch = client.batch("test")
        if batch is None:
            continue
        hits = int(np.sum(predictions(model, specs, batch) == batch.labels))
        correct += hits
        total += len(batch)
        per_client.append(hits / len(batch))
    if total == 0:
        return 0.0, 0.0
    return correct / total, float(np.mean(per_client))


def assignment_hash(labels) -> str:
    return hashlib.sha1(",".join(str(int(c)) for c in labels).encode()).hexdigest()[:10]


# ---------------------------------------------------------------------------
# Reports


@dataclass
class RoundRecord:
    round: int
    test_acc: float
    client_mean_acc: float
    comm_bytes_cum: int
    ratio: float
    cluster_hash: str
    common_clients: tuple = ()


@dataclass
class RunReport:
    method: str
    seed: int
    config: dict
    rounds: list = field(default_factory=list)
    bandit_rows: list = field(default_factory=list)
    arm_ratios: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def accuracies(self) -> list:
        return [r.test_acc for r in self.rounds]

    @property
    def total_comm_bytes(self) -> int:
        return self.rounds[-1].comm_bytes_cum if self.rounds else 0

    @property
    def final_acc(self) -> float:
        return self.rounds[-1].test_acc

    def mean_acc_last(self, k: int = 50) -> float:
        trained = self.rounds[1:] or self.rounds
        return float(np.mean([r.test_acc for r in trained[-k:]]))


# ---------------------------------------------------------------------------
# Setup shared by all methods


@dataclass
class Federation:
    dataset: Dataset
    partition: ClientPartition
    clients: list
    specs: tuple  # (node spec, struct spec)


def load_dataset(config: RunConfig) -> Dataset:
    if config.dataset_path:
        dataset = load_tudataset(config.dataset_path, config.dataset_name)
    else:
        seed = config.seed if config.data_seed is None else config.data_seed
        dataset = generate_synthetic(config.synthetic_spec(), seed)
    return annotate(dataset, StructConfig(config.rw_dim, config.deg_dim))


def make_clients(dataset: Dataset, part: ClientPartition, specs, init_rng) -> list:
    nspec, sspec = specs
    node0 = init_params(nspec, init_rng)
    struct0 = init_params(sspec, init_rng)
    clients = []
    for i, (tr, va, te) in enumerate(part.splits):
        clients.append(ClientState(
            id=i,
            train=[dataset.graphs[j] for j in tr],
            val=[dataset.graphs[j] for j in va],
            test=[dataset.graphs[j] for j in te],
            node_model=node0.copy(),
            struct_model=struct0.copy(),
        ))
    return clients


def setup(config: RunConfig) -> Federation:
    dataset = load_dataset(config)
    part = partition(dataset, config.num_clients, config.partition_mode(),
                     seed=config.seed, samples_per_client=config.samples_per_client)
    specs = (node_spec(dataset.feature_dim, dataset.num_classes, config.hidden_dim, config.num_layers),
             struct_spec(config.rw_dim + config.deg_dim, dataset.num_classes, config.hidden_dim,
                         config.num_layers))
    clients = make_clients(dataset, part, specs, np.random.default_rng([config.seed, 3]))
    return Federation(dataset, part, clients, specs)


def train_rng(seed: int, round_idx: int, client_id: int):
    return np.random.default_rng([seed, 4, round_idx, client_id])


def fedavg_loop(config: RunConfig, clients: list, specs) -> RunReport:
    global_model = clients[0].node_model.copy()
    ledger = CommLedger()
    report = RunReport(method="fedavg", seed=config.seed, config=config.to_dict())
    zero_hash = assignment_hash([0] * len(clients))

    def record(t):
        model = DualBranchModel(global_model, None, 0.0)
        acc, mean_acc = pooled_accuracy([model] * len(clients), clients, specs)
        report.rounds.append(RoundRecord(t, acc, mean_acc, ledger.total, 0.0, zero_hash))

    record(0)
    for t in range(1, config.rounds + 1):
        ledger.open_round()
        received = DualBranchModel(global_model, None, 0.0)
        updated = []
        for c in clients:
            ledger.download(transfer_size(received))
            c = local_train(c, received, specs, config.local_epochs, config.batch_size, config.lr,
                            train_rng(config.seed, t, c.id), config.joint_training)
            ledger.upload(c.node_model.size)
            updated.append(c)
        clients[:] = updated
        global_model = aggregate([(c.node_model, c.n_i) for c in clients if c.n_i > 0])
        record(t)
    return report


def local_loop(config: RunConfig, clients: list, specs) -> RunReport:
    report = RunReport(method="local", seed=config.seed, config=config.to_dict())
    ident_hash = assignment_hash(range(len(clients)))

    def record(t):
        models = [DualBranchModel(c.node_model, None, 0.0) for c in clients]
        acc, mean_acc = pooled_accuracy(models, clients, specs)
        report.rounds.append(RoundRecord(t, acc, mean_acc, 0, 0.0, ident_hash))

    record(0)
    for t in range(1, config.rounds + 1):
        clients[:] = [
            local_train(c, DualBranchModel(c.node_model, None, 0.0), specs, config.local_epochs,
                        config.batch_size, config.lr, train_rng(config.seed, t, c.id), config.joint_training)
            for c in clients
        ]
        record(t)
    return report


def run_fedavg(config: RunConfig) -> RunReport:
    fed = setup(config)
    report = fedavg_loop(config, fed.clients, fed.specs)
    report.warnings = [msg for _, msg in fed.partition.warnings]
    return report


def run_local(config: RunConfig) -> RunReport:
    fed = setup(config)
    report = local_loop(config, fed.clients, fed.specs)
    report.warnings = [msg for _, msg in fed.partition.warnings]
    return report
