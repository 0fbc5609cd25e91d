# %%
# What the server does with uploaded models: cluster the structural ones,
# route through the node ones.
import numpy as np

from fedgcf import ModelParams, build_topology, cluster_structural, select_common_clients, sim_to_dist

rng = np.random.default_rng(3)
manifest = (("w", (20,)),)

# three planted groups of structural models
centers = rng.standard_normal((3, 20))
truth = rng.integers(0, 3, 9)
struct = [ModelParams(centers[t] + 0.1 * rng.standard_normal(20), manifest) for t in truth]
assignment = cluster_structural(struct, k=3, seed=0)
print("planted  :", truth.tolist())
print("recovered:", assignment.labels)

# %%
for s in (1.0, 0.5, 0.0, -0.5, -0.9):
    print(f"sigma={s:+.1f} -> distance {sim_to_dist(s, 2.0):.4g}")

# %%
# node models spread along a line; the longest shortest paths run end to end
base, drift = rng.standard_normal(20), rng.standard_normal(20)
node = [ModelParams(base + 0.3 * i * drift, manifest) for i in range(6)]
topo = build_topology(node)
print("path 0 -> 5:", topo.paths[0, 5], f"length {topo.lengths[0, 5]:.4f}")
print("common clients (P=2):", select_common_clients(topo, 2))
