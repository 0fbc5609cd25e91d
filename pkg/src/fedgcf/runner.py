"""The FedGCF round loop, its ablations, method dispatch and report files."""
from __future__ import annotations

import csv
import io
import json
import logging
import os

import numpy as np

from .config import RunConfig
from .federated import (CommLedger, RoundRecord, RunReport, assignment_hash, fedavg_loop,
                        local_loop, local_train, pooled_accuracy, setup, train_rng, transfer_size)
from .gcf import BanditState, current_scores, fuse, select_ratio, update_reward
from .gnn import DualBranchModel
from .pce import (ClusterAssignment, build_topology, cluster_structural, common_node_model,
                  select_common_clients, shared_structural_models)

log = logging.getLogger(__name__)

# which halves of the pipeline each variant keeps
_VARIANTS = {
    "fedgcf": dict(structural=True, node=True, bandit=True, fixed=None),
    "fedgcf-ef": dict(structural=True, node=True, bandit=False, fixed=0.5),
    "fedgcf-sc": dict(structural=True, node=False, bandit=False, fixed=1.0),
    "fedgcf-np": dict(structural=False, node=True, bandit=False, fixed=0.0),
}


def fedgcf_loop(config: RunConfig, clients: list, specs, method: str = "fedgcf") -> RunReport:
    variant = _VARIANTS[method]
    use_struct, use_node = variant["structural"], variant["node"]
    n = len(clients)
    k = min(config.k, n)
    if k < config.k:
        log.warning("K=%d exceeds %d clients; using K=%d", config.k, n, k)

    ratio = variant["fixed"] if variant["fixed"] is not None else config.initial_ratio
    node0 = clients[0].node_model.copy() if use_node else None
    struct0 = clients[0].struct_model.copy() if use_struct else None
    received = [DualBranchModel(node0, struct0, ratio) for _ in clients]
    labels = [0] * n

    report = RunReport(method=method, seed=config.seed, config=config.to_dict())
    ledger = CommLedger()

    acc0, mean0 = pooled_accuracy(received, clients, specs)
    report.rounds.append(RoundRecord(0, acc0, mean0, 0, ratio, assignment_hash(labels)))

    bandit = None
    if variant["bandit"]:
        bandit = BanditState.create(config.arm_ratios(), seed=config.seed, best_acc=acc0)
        report.arm_ratios = [a.ratio for a in bandit.arms]

    for t in range(1, config.rounds + 1):
        ledger.open_round()
        updated = []
        for c, model in zip(clients, received):
            ledger.download(transfer_size(model))
            c = local_train(c, model, specs, config.local_epochs, config.batch_size, config.lr,
                            train_rng(config.seed, t, c.id), config.joint_training)
            ledger.upload(transfer_size(model))
            updated.append(c)
        clients[:] = updated
        counts = [c.n_i for c in clients]

        if use_struct:
            assignment = cluster_structural([c.struct_model for c in clients], k,
                                            seed=int(np.random.default_rng([config.seed, 5, t]).integers(2**31)))
            shared = shared_structural_models([c.struct_model for c in clients], counts, assignment)
        else:
            assignment = ClusterAssignment([0] * n, 1)
            shared = {0: None}
        common_clients = ()
        common = None
        if use_node:
            node_models = [c.node_model for c in clients]
            if n >= 2:
                topology = build_topology(node_models, config.alpha)
                common_clients = tuple(select_common_clients(topology, config.p))
            else:
                common_clients = (0,)
            common = common_node_model(node_models, counts, common_clients)

        if bandit is not None:
            ratio, bandit = select_ratio(bandit)
        fused = fuse(shared, common, ratio)
        received = [fused[assignment.labels[i]] for i in range(n)]

        acc, mean_acc = pooled_accuracy(received, clients, specs)
        if bandit is not None:
            arm = bandit.last_selected
            update_reward(bandit, acc, config.beta)
            report.bandit_rows.append(dict(
                round=t, arm=arm, ratio=ratio, test_acc=acc,
                rewards=list(bandit.rewards), counts=[int(x) for x in bandit.counts],
                scores=None if current_scores(bandit) is None else list(current_scores(bandit)),
            ))
        labels = assignment.labels
        report.rounds.append(RoundRecord(t, acc, mean_acc, ledger.total, ratio,
                                         assignment_hash(labels), common_clients))
    return report


def run_fedgcf(config: RunConfig) -> RunReport:
    fed = setup(config)
    report = fedgcf_loop(config, fed.clients, fed.specs, config.method)
    report.warnings = [msg for _, msg in fed.partition.warnings]
    return report


def run(config: RunConfig) -> RunReport:
    """Dispatch on ``config.method``."""
    fed = setup(config)
    if config.method == "fedavg":
        report = fedavg_loop(config, fed.clients, fed.specs)
    elif config.method == "local":
        report = local_loop(config, fed.clients, fed.specs)
    else:
        report = fedgcf_loop(config, fed.clients, fed.specs, config.method)
    report.warnings = [msg for _, msg in fed.partition.warnings]
    return report


# ---------------------------------------------------------------------------
# Report files

MB = 1e6


def _fmt(x) -> str:
    return format(float(x), ".10g")


def metrics_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["round", "test_acc", "comm_mb_cum", "lambda", "cluster_hash"])
    for r in report.rounds:
        w.writerow([r.round, _fmt(r.test_acc), _fmt(r.comm_bytes_cum / MB), _fmt(r.ratio), r.cluster_hash])
    return buf.getvalue()


def bandit_csv(report: RunReport) -> str:
    m = len(report.arm_ratios)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["round", "arm", "lambda", "test_acc"]
               + [f"reward_{i}" for i in range(m)] + [f"count_{i}" for i in range(m)]
               + [f"score_{i}" for i in range(m)])
    for row in report.bandit_rows:
        scores = row["scores"] if row["scores"] is not None else [""] * m
        w.writerow([row["round"], row["arm"], _fmt(row["ratio"]), _fmt(row["test_acc"])]
                   + [_fmt(x) for x in row["rewards"]] + list(row["counts"])
                   + [s if s == "" else _fmt(s) for s in scores])
    return buf.getvalue()


def summary(report: RunReport) -> dict:
    return {
        "method": report.method,
        "seed": report.seed,
        "final_acc": report.final_acc,
        "mean_acc_last50": report.mean_acc_last(50),
        "final_client_mean_acc": report.rounds[-1].client_mean_acc,
        "total_comm_mb": report.total_comm_bytes / MB,
        "total_comm_bytes": int(report.total_comm_bytes),
        "rounds": len(report.rounds) - 1,
        "arms": report.arm_ratios,
        "warnings": report.warnings,
        "config": report.config,
    }


def emit_report(report: RunReport, out_dir) -> list:
    """Write metrics.csv, summary.json and bandit.csv into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    files = {
        "metrics.csv": metrics_csv(report),
        "bandit.csv": bandit_csv(report),
        "summary.json": json.dumps(summary(report), indent=2, sort_keys=True) + "\n",
    }
    paths = []
    for name, text in files.items():
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        paths.append(path)
    return paths
