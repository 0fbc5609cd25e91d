"""Bandit-driven choice of the structural/node fusion ratio.

Each arm is a candidate ratio. Rewards are decayed cumulative sums driven by
the change of test accuracy relative to the best accuracy seen so far;
arms are scored UCB1-style after a randomised warm-up that tries every arm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError
from .gnn import DualBranchModel, ModelParams

REWARD_DECAY = 0.9
REWARD_OFFSET = 0.99
MIN_BEST = 1e-6


def default_arms() -> list:
    """Ratios 9:1, 7:3, 5:5, 3:7, 1:9 expressed as the structural weight."""
    return [0.9, 0.7, 0.5, 0.3, 0.1]


def ratio_from_proportion(structural: float, node: float) -> float:
    return structural / (structural + node)


@dataclass
class RatioArm:
    ratio: float
    reward: float = 0.0
    count: int = 0


@dataclass
class BanditState:
    arms: list
    t: int = 0  # selections made so far
    best_acc: float = 0.0
    last_selected: Optional[int] = None
    warmup_order: list = field(default_factory=list)
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0), repr=False)

    @classmethod
    def create(cls, ratios: Sequence[float] = None, seed: int = 0, best_acc: float = 0.0) -> "BanditState":
        ratios = list(default_arms() if ratios is None else ratios)
        if not ratios:
            raise ContractError("bandit needs at least one arm")
        if len(set(ratios)) != len(ratios):
            raise ContractError("arm ratios must be distinct")
        if any(not 0.0 <= r <= 1.0 for r in ratios):
            raise ContractError("arm ratios must lie in [0, 1]")
        return cls(arms=[RatioArm(float(r)) for r in ratios], best_acc=best_acc,
                   rng=np.random.default_rng(seed))

    @property
    def num_arms(self) -> int:
        return len(self.arms)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([a.reward for a in self.arms])

    @property
    def counts(self) -> np.ndarray:
        return np.array([a.count for a in self.arms], dtype=np.int64)


def reward_increment(r_t: float, r_b: float, beta: float) -> float:
    if r_t >= r_b:
        return math.exp(beta * (r_t - r_b) / r_b) - REWARD_OFFSET
    return -(math.exp(beta * (r_b - r_t) / r_b) - REWARD_OFFSET)


def update_reward(state: BanditState, observed_acc: float, beta: float = 5.0) -> BanditState:
    """Fold the accuracy observed after the last selection into that arm's reward."""
    if state.last_selected is None:
        raise ContractError("no arm has been selected yet")
    r_b = state.best_acc
    if r_b <= 0.0:
        r_b = max(observed_acc, MIN_BEST)
    arm = state.arms[state.last_selected]
    arm.reward = arm.reward * REWARD_DECAY + reward_increment(observed_acc, r_b, beta)
    state.best_acc = max(r_b, observed_acc)
    return state


def scores(rewards, counts, t: int) -> np.ndarray:
    """Mean reward plus sqrt(2 ln t / count) for every arm."""
    rewards = np.asarray(rewards, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts <= 0):
        raise ContractError("every arm needs at least one selection before scoring")
    return rewards / counts + np.sqrt(2.0 * math.log(t) / counts)


def select_ratio(state: BanditState) -> tuple:
    """Pick the next arm and return ``(ratio, state)``.

    Round 1 draws a random arm; rounds 2..M+1 visit every arm once in a random
    order; afterwards the highest score wins (lowest index on ties).
    """
    m = state.num_arms
    t = state.t + 1
    if t == 1:
        idx = int(state.rng.integers(m))
        state.warmup_order = [int(i) for i in state.rng.permutation(m)]
    elif t <= m + 1:
        idx = state.warmup_order[t - 2]
    else:
        idx = int(np.argmax(scores(state.rewards, state.counts, t)))
    state.arms[idx].count += 1
    state.t = t
    state.last_selected = idx
    return state.arms[idx].ratio, state


def current_scores(state: BanditState) -> Optional[np.ndarray]:
    if np.any(state.counts == 0) or state.t < 1:
        return None
    return scores(state.rewards, state.counts, max(state.t, 1))


def fuse(shared: dict, common: Optional[ModelParams], ratio: float) -> dict:
    """One fusion model per cluster, all sharing the same node branch."""
    if not shared and common is None:
        raise ContractError("nothing to fuse")
    if not shared:
        raise ContractError("cluster map is empty")
    return {k: DualBranchModel(node_branch=common, struct_branch=s, ratio=ratio)
            for k, s in sorted(shared.items())}
