# %%
# The fusion-ratio bandit against a fake environment in which one ratio is better.
import numpy as np

from fedgcf import BanditState, select_ratio, update_reward

state = BanditState.create(seed=0, best_acc=0.5)
good = 0.3
picks = []
for t in range(200):
    lam, state = select_ratio(state)
    picks.append(lam)
    update_reward(state, 0.8 if lam == good else 0.5 + 0.02 * np.sin(t))

print("first six picks (random start, then each arm once):", picks[:6])
print("share of rounds on the good ratio:", np.mean(np.array(picks) == good))
for arm in state.arms:
    print(f"  ratio {arm.ratio}: reward {arm.reward:+.3f} over {arm.count} pulls")
