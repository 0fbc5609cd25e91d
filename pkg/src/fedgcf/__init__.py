"""Federated graph learning simulator with structural/node characteristic extraction and
bandit-driven fusion, plus FedAvg and local-training baselines."""
from .config import RunConfig
from .federated import (ClientState, CommLedger, RunReport, aggregate, evaluate, local_train,
                        run_fedavg, run_local)
from .gcf import BanditState, default_arms, fuse, select_ratio, update_reward
from .gnn import (AdamState, DualBranchModel, ModelParams, ModelSpec, adam_step, forward,
                  fused_predict, init_params, loss_and_grad)
from .graphs import (IID, ClassSpec, ClientPartition, Dataset, Graph, NonIID, SyntheticSpec,
                     generate_synthetic, load_tudataset, partition, write_tudataset)
from .pce import (build_topology, cluster_structural, common_node_model, select_common_clients,
                  shared_structural_models, sim_to_dist, similarity)
from .runner import emit_report, run, run_fedgcf
from .struct_encode import StructConfig, annotate, degree_encoding, random_walk_encoding

__version__ = "0.1.0"
