"""Goal-conditioned DDPG with importance-weighted critic updates."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import ContractViolation, TransitionBatch
from .nn import AdamState, Mlp, adam_step, soft_update

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.98
    tau: float = 0.05
    action_noise_std: float = 0.2
    random_action_prob: float = 0.3
    batch_size: int = 256
    updates_per_episode: int = 40
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    hidden: tuple = (256, 256, 256)
    clip_target: bool = True
    normalize: bool = True
    norm_clip: float = 5.0
    norm_eps: float = 0.01
    # penalty on mean squared action in the actor loss; 0 disables it
    action_l2: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not 0.0 <= self.gamma < 1.0:
            raise ContractViolation("agent.gamma must lie in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ContractViolation("agent.tau must lie in (0, 1]")
        if self.batch_size < 1 or self.updates_per_episode < 0:
            raise ContractViolation("agent.batch_size must be >= 1 and updates_per_episode >= 0")
        if not 0.0 <= self.random_action_prob <= 1.0 or self.action_noise_std < 0:
            raise ContractViolation("invalid exploration settings")


class Normalizer:
    """Running mean/std per dimension; normalised values are clipped."""

    def __init__(self, size: int, eps: float = 0.01, clip: float = 5.0):
        self.size = size
        self.eps = eps
        self.clip = clip
        self.total = np.zeros(size)
        self.total_sq = np.zeros(size)
        self.count = 0
        self.mean = np.zeros(size)
        self.std = np.ones(size)

    def update(self, x) -> None:
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.size)
        self.total += x.sum(axis=0)
        self.total_sq += (x * x).sum(axis=0)
        self.count += len(x)
        self.mean = self.total / self.count
        var = self.total_sq / self.count - self.mean ** 2
        self.std = np.sqrt(np.maximum(self.eps ** 2, var))

    def __call__(self, x) -> np.ndarray:
        return np.clip((x - self.mean) / self.std, -self.clip, self.clip)

    def to_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        return {f"{prefix}/total": self.total, f"{prefix}/total_sq": self.total_sq,
                f"{prefix}/count": np.array(self.count, dtype=np.int64),
                f"{prefix}/mean": self.mean, f"{prefix}/std": self.std}

    def load_arrays(self, data, prefix: str) -> None:
        self.total = data[f"{prefix}/total"].copy()
        self.total_sq = data[f"{prefix}/total_sq"].copy()
        self.count = int(data[f"{prefix}/count"])
        self.mean = data[f"{prefix}/mean"].copy()
        self.std = data[f"{prefix}/std"].copy()


class UpdateStats(NamedTuple):
    mean_abs_td: float
    critic_loss: float
    actor_loss: float
    abs_td: np.ndarray
    skipped: bool


class DDPGAgent:
    def __init__(self, obs_dim: int, goal_dim: int, action_dim: int, horizon: int,
                 config: AgentConfig = AgentConfig(), rng: np.random.Generator | None = None,
                 zero_init: bool = False):
        self.config = config
        self.obs_dim, self.goal_dim, self.action_dim = obs_dim, goal_dim, action_dim
        self.horizon = horizon
        rng = rng if rng is not None else np.random.default_rng(0)
        in_dim = obs_dim + goal_dim
        self.actor = Mlp([in_dim, *config.hidden, action_dim], "tanh", rng=rng, zero=zero_init)
        self.critic = Mlp([in_dim + action_dim, *config.hidden, 1], "identity", rng=rng,
                          zero=zero_init)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = AdamState(self.actor.params, lr=config.actor_lr)
        self.critic_opt = AdamState(self.critic.params, lr=config.critic_lr)
        self.obs_norm = Normalizer(obs_dim, config.norm_eps, config.norm_clip)
        self.goal_norm = Normalizer(goal_dim, config.norm_eps, config.norm_clip)
        self.skipped_updates = 0

    # -- inputs ---------------------------------------------------------------
    def preprocess(self, obs, goal) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64)
        goal = np.asarray(goal, dtype=np.float64)
        if self.config.normalize:
            obs, goal = self.obs_norm(obs), self.goal_norm(goal)
        return np.concatenate([obs, goal], axis=-1)

    def update_normalizer(self, observations, goals) -> None:
        self.obs_norm.update(observations)
        self.goal_norm.update(goals)

    # -- acting ---------------------------------------------------------------
    def act(self, obs, goal, explore: bool = False, rng: np.random.Generator | None = None):
        action = self.actor.forward(self.preprocess(obs, goal))
        if not explore:
            return action
        cfg = self.config
        if rng.random() < cfg.random_action_prob:
            return rng.uniform(-1.0, 1.0, size=self.action_dim)
        noisy = action + cfg.action_noise_std * rng.standard_normal(self.action_dim)
        return np.clip(noisy, -1.0, 1.0)

    # -- learning ---------------------------------------------------------------
    def _targets(self, batch: TransitionBatch) -> np.ndarray:
        x_next = self.preprocess(batch.next_states, batch.desired_goals)
        a_next = self.actor_target.forward(x_next)
        q_next = self.critic_target.forward(np.concatenate([x_next, a_next], axis=1))[:, 0]
        y = batch.rewards + self.config.gamma * q_next
        if self.config.clip_target:
            y = np.clip(y, -float(self.horizon), 0.0)
        return y

    def td_errors(self, batch: TransitionBatch) -> np.ndarray:
        y = self._targets(batch)
        x = self.preprocess(batch.states, batch.desired_goals)
        q = self.critic.forward(np.concatenate([x, batch.actions], axis=1))[:, 0]
        return y - q

    def update(self, batch: TransitionBatch, weights=None) -> UpdateStats:
        """One critic and one actor Adam step, then Polyak-average the targets.

        ``weights`` are importance-sampling weights applied to the squared TD
        errors of the critic loss; ``None`` selects plain unweighted DDPG.
        """
        n = len(batch)
        y = self._targets(batch)
        x = self.preprocess(batch.states, batch.desired_goals)
        q = self.critic.forward(np.concatenate([x, batch.actions], axis=1))[:, 0]
        delta = y - q
        if weights is None:
            critic_loss = float(np.mean(delta ** 2))
            dq = -2.0 * delta / n
        else:
            w = np.asarray(weights, dtype=np.float64)
            critic_loss = float(np.mean(w * delta ** 2))
            dq = -2.0 * w * delta / n
        critic_grads, _ = self.critic.backward(dq[:, None])

        pi = self.actor.forward(x)
        q_pi = self.critic.forward(np.concatenate([x, pi], axis=1))[:, 0]
        actor_loss = float(-np.mean(q_pi))
        _, dx = self.critic.backward(np.full((n, 1), -1.0 / n))
        d_action = dx[:, -self.action_dim:]
        if self.config.action_l2:
            actor_loss += self.config.action_l2 * float(np.mean(pi ** 2))
            d_action = d_action + self.config.action_l2 * 2.0 * pi / pi.size
        actor_grads, _ = self.actor.backward(d_action)

        abs_td = np.abs(delta)
        if not (np.isfinite(critic_loss) and np.isfinite(actor_loss)):
            self.skipped_updates += 1
            return UpdateStats(float("nan"), critic_loss, actor_loss, abs_td, True)
        adam_step(self.critic.params, critic_grads, self.critic_opt)
        adam_step(self.actor.params, actor_grads, self.actor_opt)
        soft_update(self.critic_target, self.critic, self.config.tau)
        soft_update(self.actor_target, self.actor, self.config.tau)
        return UpdateStats(float(abs_td.mean()), critic_loss, actor_loss, abs_td, False)

    # -- persistence ------------------------------------------------------------
    def to_arrays(self) -> dict[str, np.ndarray]:
        meta = {"format_version": CHECKPOINT_FORMAT_VERSION, "obs_dim": self.obs_dim,
                "goal_dim": self.goal_dim, "action_dim": self.action_dim, "horizon": self.horizon,
                "config": {k: (list(v) if isinstance(v, tuple) else v)
                           for k, v in vars(self.config).items()}}
        out = {"agent/meta": np.array(json.dumps(meta))}
        for name in ("actor", "critic", "actor_target", "critic_target"):
            out.update(getattr(self, name).to_arrays(name))
        out.update(self.actor_opt.to_arrays("actor_opt"))
        out.update(self.critic_opt.to_arrays("critic_opt"))
        out.update(self.obs_norm.to_arrays("obs_norm"))
        out.update(self.goal_norm.to_arrays("goal_norm"))
        return out

    @classmethod
    def from_arrays(cls, data) -> "DDPGAgent":
        meta = json.loads(str(data["agent/meta"]))
        if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {meta.get('format_version')}")
        agent = cls(meta["obs_dim"], meta["goal_dim"], meta["action_dim"], meta["horizon"],
                    AgentConfig(**meta["config"]), zero_init=True)
        for name in ("actor", "critic", "actor_target", "critic_target"):
            setattr(agent, name, Mlp.from_arrays(data, name))
        agent.actor_opt = AdamState.from_arrays(data, "actor_opt", agent.actor.params)
        agent.critic_opt = AdamState.from_arrays(data, "critic_opt", agent.critic.params)
        agent.obs_norm.load_arrays(data, "obs_norm")
        agent.goal_norm.load_arrays(data, "goal_norm")
        return agent
