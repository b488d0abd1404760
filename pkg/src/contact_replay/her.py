"""Hindsight goal relabelling applied when a minibatch is drawn."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ContractViolation, ReplayBuffer, TransitionBatch
from .env import compute_reward

STRATEGIES = ("future", "final", "none")


@dataclass(frozen=True)
class RelabelConfig:
    strategy: str = "future"
    replay_k: int = 4

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ContractViolation(f"unknown relabel strategy {self.strategy!r}")
        if self.strategy != "none" and self.replay_k < 1:
            raise ContractViolation("replay_k must be >= 1")

    @property
    def relabel_probability(self) -> float:
        if self.strategy == "none":
            return 0.0
        return self.replay_k / (self.replay_k + 1)


def relabel_minibatch_indices(buffer: ReplayBuffer, indices, config: RelabelConfig,
                              rng: np.random.Generator, threshold: float,
                              return_mask: bool = False):
    """Gather transitions at ``indices`` and substitute hindsight goals.

    A relabelled transition takes as its goal the goal achieved after some
    step ``t' >= t`` of its own episode (``future``) or after the last step
    (``final``); its reward is recomputed against that goal. Buffer contents
    are copied, never modified.
    """
    indices = np.asarray(indices, dtype=np.int64).reshape(-1, 2)
    episodes, t = indices[:, 0], indices[:, 1]
    batch = buffer.gather(episodes, t)
    mask = np.zeros(len(t), dtype=bool)
    if config.strategy == "none":
        return (batch, mask) if return_mask else batch

    H = buffer.horizon
    mask = rng.random(len(t)) < config.relabel_probability
    if config.strategy == "future":
        future = t + (rng.random(len(t)) * (H - t)).astype(np.int64)
    else:
        future = np.full_like(t, H - 1)
    sel = np.flatnonzero(mask)
    # goal reached after step t' is the achieved goal of state t' + 1
    batch.desired_goals[sel] = buffer.achieved_goals_at(episodes[sel], future[sel] + 1)
    batch.rewards = compute_reward(batch.achieved_goals, batch.desired_goals, threshold)
    return (batch, mask) if return_mask else batch
