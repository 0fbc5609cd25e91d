# %%
# A short federated run of every method on the same data and seed.
# Takes about twenty seconds.
import time

from fedgcf import RunConfig, run

base = RunConfig(rounds=40, lr=0.01, graphs_per_class=100, partition="noniid:0.5")
print(f"{'method':<11} {'final acc':>9} {'comm MB':>9} {'time':>6}")
for method in ("local", "fedavg", "fedgcf-np", "fedgcf-sc", "fedgcf-ef", "fedgcf"):
    start = time.perf_counter()
    report = run(base.replace(method=method))
    print(f"{method:<11} {report.final_acc:9.3f} {report.total_comm_bytes / 1e6:9.2f} "
          f"{time.perf_counter() - start:5.1f}s")

# %%
ratios = [r.ratio for r in report.rounds[1:]]
print("fedgcf ratios, last 10 rounds:", ratios[-10:])
