"""Shared domain types and the episode-granular replay buffer."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BUFFER_FORMAT_VERSION = 1


class ContractViolation(ValueError):
    """Raised when a caller breaks an operation's preconditions."""


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    desired_goal: np.ndarray
    # achieved goal of next_state; the reward is evaluated against it
    achieved_goal: np.ndarray
    touch_left: float
    touch_right: float
    object_displacement: float


@dataclass
class Episode:
    """A fixed-horizon rollout stored as per-timestep arrays.

    ``observations`` and ``achieved_goals`` hold H + 1 rows (the state before
    every step plus the terminal state). Everything else has H rows.
    """

    observations: np.ndarray
    achieved_goals: np.ndarray
    desired_goal: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    touch_left: np.ndarray
    touch_right: np.ndarray
    object_displacement: np.ndarray
    cumulative_contact_energy: np.ndarray
    priority: float = 0.0
    episode_id: int = -1

    def __post_init__(self):
        for name in ("observations", "achieved_goals", "desired_goal", "actions", "rewards",
                     "touch_left", "touch_right", "object_displacement",
                     "cumulative_contact_energy"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def transitions(self) -> list[Transition]:
        return [self.transition(t) for t in range(self.horizon)]

    def transition(self, t: int) -> Transition:
        if not 0 <= t < self.horizon:
            raise IndexError(f"timestep {t} outside [0, {self.horizon})")
        return Transition(
            state=self.observations[t],
            action=self.actions[t],
            reward=float(self.rewards[t]),
            next_state=self.observations[t + 1],
            desired_goal=self.desired_goal,
            achieved_goal=self.achieved_goals[t + 1],
            touch_left=float(self.touch_left[t]),
            touch_right=float(self.touch_right[t]),
            object_displacement=float(self.object_displacement[t]),
        )

    def validate(self, horizon: int) -> None:
        H = horizon
        shapes_ok = (
            self.actions.ndim == 2 and len(self.actions) == H
            and len(self.observations) == H + 1
            and len(self.achieved_goals) == H + 1
            and self.rewards.shape == (H,)
            and self.touch_left.shape == (H,)
            and self.touch_right.shape == (H,)
            and self.object_displacement.shape == (H,)
            and self.cumulative_contact_energy.shape == (H,)
        )
        if not shapes_ok:
            raise ContractViolation(
                f"episode does not match horizon {H} "
                f"(actions {self.actions.shape}, observations {self.observations.shape})")
        if not np.all(np.isin(self.rewards, (-1.0, 0.0))):
            raise ContractViolation("rewards must be exactly -1 or 0")
        if np.any(self.touch_left < 0) or np.any(self.touch_right < 0):
            raise ContractViolation("touch readings must be non-negative")
        if not (np.isfinite(self.priority) and self.priority >= 0):
            raise ContractViolation(f"invalid priority {self.priority}")


@dataclass
class TransitionBatch:
    """Column-oriented minibatch; indexing yields a :class:`Transition`."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    desired_goals: np.ndarray
    achieved_goals: np.ndarray
    touch_left: np.ndarray
    touch_right: np.ndarray
    object_displacement: np.ndarray

    def __len__(self) -> int:
        return len(self.rewards)

    def __getitem__(self, j: int) -> Transition:
        return Transition(
            state=self.states[j],
            action=self.actions[j],
            reward=float(self.rewards[j]),
            next_state=self.next_states[j],
            desired_goal=self.desired_goals[j],
            achieved_goal=self.achieved_goals[j],
            touch_left=float(self.touch_left[j]),
            touch_right=float(self.touch_right[j]),
            object_displacement=float(self.object_displacement[j]),
        )

    def copy(self) -> "TransitionBatch":
        return TransitionBatch(**{k: v.copy() for k, v in vars(self).items()})


class ReplayBuffer:
    """FIFO store of whole episodes backed by preallocated ring arrays.

    Episodes are addressed by their logical index: 0 is the oldest stored
    episode, ``len(buffer) - 1`` the newest.
    """

    def __init__(self, capacity: int, horizon: int, obs_dim: int, goal_dim: int,
                 action_dim: int = 4):
        if capacity < 1 or horizon < 1:
            raise ContractViolation("capacity and horizon must be positive")
        self.capacity = capacity
        self.horizon = horizon
        self.obs_dim = obs_dim
        self.goal_dim = goal_dim
        self.action_dim = action_dim
        C, H = capacity, horizon
        self._obs = np.zeros((C, H + 1, obs_dim))
        self._ag = np.zeros((C, H + 1, goal_dim))
        self._g = np.zeros((C, goal_dim))
        self._actions = np.zeros((C, H, action_dim))
        self._rewards = np.zeros((C, H))
        self._touch_left = np.zeros((C, H))
        self._touch_right = np.zeros((C, H))
        self._disp = np.zeros((C, H))
        self._energy = np.zeros((C, H))
        self._priority = np.zeros(C)
        self._ids = np.full(C, -1, dtype=np.int64)
        self._head = 0  # slot of the oldest episode
        self._count = 0
        self.next_episode_id = 0
        # PER bookkeeping: unseen episodes enter at the largest priority so far
        self.max_priority = 1.0

    def __len__(self) -> int:
        return self._count

    def slots(self, indices=None) -> np.ndarray:
        if indices is None:
            indices = np.arange(self._count)
        return (self._head + np.asarray(indices)) % self.capacity

    def store_episode(self, ep: Episode) -> None:
        ep.validate(self.horizon)
        if ep.observations.shape[1] != self.obs_dim or ep.desired_goal.shape != (self.goal_dim,):
            raise ContractViolation("episode observation/goal width does not match the buffer")
        if self._count == self.capacity:
            slot = self._head
            self._head = (self._head + 1) % self.capacity
        else:
            slot = (self._head + self._count) % self.capacity
            self._count += 1
        if ep.episode_id < 0:
            ep.episode_id = self.next_episode_id
        self.next_episode_id = max(self.next_episode_id, ep.episode_id + 1)
        self._obs[slot] = ep.observations
        self._ag[slot] = ep.achieved_goals
        self._g[slot] = ep.desired_goal
        self._actions[slot] = ep.actions
        self._rewards[slot] = ep.rewards
        self._touch_left[slot] = ep.touch_left
        self._touch_right[slot] = ep.touch_right
        self._disp[slot] = ep.object_displacement
        self._energy[slot] = ep.cumulative_contact_energy
        self._priority[slot] = ep.priority
        self._ids[slot] = ep.episode_id

    def _check_index(self, episode_index: int) -> int:
        if not 0 <= episode_index < self._count:
            raise IndexError(f"episode index {episode_index} outside [0, {self._count})")
        return int(self.slots(episode_index))

    def episode(self, episode_index: int) -> Episode:
        s = self._check_index(episode_index)
        return Episode(
            observations=self._obs[s].copy(),
            achieved_goals=self._ag[s].copy(),
            desired_goal=self._g[s].copy(),
            actions=self._actions[s].copy(),
            rewards=self._rewards[s].copy(),
            touch_left=self._touch_left[s].copy(),
            touch_right=self._touch_right[s].copy(),
            object_displacement=self._disp[s].copy(),
            cumulative_contact_energy=self._energy[s].copy(),
            priority=float(self._priority[s]),
            episode_id=int(self._ids[s]),
        )

    @property
    def episodes(self) -> list[Episode]:
        return [self.episode(i) for i in range(self._count)]

    def get_transition(self, episode_index: int, t: int) -> Transition:
        s = self._check_index(episode_index)
        if not 0 <= t < self.horizon:
            raise IndexError(f"timestep {t} outside [0, {self.horizon})")
        return Transition(
            state=self._obs[s, t].copy(),
            action=self._actions[s, t].copy(),
            reward=float(self._rewards[s, t]),
            next_state=self._obs[s, t + 1].copy(),
            desired_goal=self._g[s].copy(),
            achieved_goal=self._ag[s, t + 1].copy(),
            touch_left=float(self._touch_left[s, t]),
            touch_right=float(self._touch_right[s, t]),
            object_displacement=float(self._disp[s, t]),
        )

    def gather(self, episode_indices, timesteps) -> TransitionBatch:
        """Vectorised :meth:`get_transition` returning copies."""
        e = np.asarray(episode_indices, dtype=np.int64)
        t = np.asarray(timesteps, dtype=np.int64)
        if e.size and (e.min() < 0 or e.max() >= self._count):
            raise IndexError("episode index out of range")
        if t.size and (t.min() < 0 or t.max() >= self.horizon):
            raise IndexError("timestep out of range")
        s = self.slots(e)
        return TransitionBatch(
            states=self._obs[s, t],
            actions=self._actions[s, t],
            rewards=self._rewards[s, t],
            next_states=self._obs[s, t + 1],
            desired_goals=self._g[s],
            achieved_goals=self._ag[s, t + 1],
            touch_left=self._touch_left[s, t],
            touch_right=self._touch_right[s, t],
            object_displacement=self._disp[s, t],
        )

    def achieved_goals_at(self, episode_indices, steps) -> np.ndarray:
        """Achieved goals at state index ``steps`` (0..H) of the given episodes."""
        return self._ag[self.slots(episode_indices), np.asarray(steps)]

    # per-episode views, ordered oldest first
    @property
    def episode_ids(self) -> np.ndarray:
        return self._ids[self.slots()].copy()

    @property
    def contact_energies(self) -> np.ndarray:
        return self._energy[self.slots()]

    @property
    def observations(self) -> np.ndarray:
        return self._obs[self.slots()]

    @property
    def priorities(self) -> np.ndarray:
        return self._priority[self.slots()].copy()

    def set_priorities(self, episode_indices, values) -> None:
        self._priority[self.slots(episode_indices)] = values

    def save(self, path) -> None:
        save_buffer(self, path)


def save_buffer(buffer: ReplayBuffer, path) -> None:
    """Write a buffer snapshot as an ``.npz`` archive, episodes in id order."""
    s = buffer.slots()
    header = {
        "format_version": BUFFER_FORMAT_VERSION,
        "H": buffer.horizon,
        "capacity": buffer.capacity,
        "count": len(buffer),
        "obs_dim": buffer.obs_dim,
        "goal_dim": buffer.goal_dim,
        "action_dim": buffer.action_dim,
        "next_episode_id": buffer.next_episode_id,
        "max_priority": float(buffer.max_priority).hex(),
    }
    with open(Path(path), "wb") as fh:
        np.savez(
            fh,
            header=np.array(json.dumps(header)),
            observations=buffer._obs[s],
            achieved_goals=buffer._ag[s],
            desired_goals=buffer._g[s],
            actions=buffer._actions[s],
            rewards=buffer._rewards[s],
            touch_left=buffer._touch_left[s],
            touch_right=buffer._touch_right[s],
            object_displacement=buffer._disp[s],
            cumulative_contact_energy=buffer._energy[s],
            priority=buffer._priority[s],
            episode_id=buffer._ids[s],
        )


def load_buffer(path) -> ReplayBuffer:
    with np.load(Path(path), allow_pickle=False) as data:
        try:
            header = json.loads(str(data["header"]))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{path}: not a replay buffer snapshot") from exc
        if header.get("format_version") != BUFFER_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported buffer format {header.get('format_version')}")
        buf = ReplayBuffer(header["capacity"], header["H"], header["obs_dim"],
                           header["goal_dim"], header["action_dim"])
        n = header["count"]
        buf._obs[:n] = data["observations"]
        buf._ag[:n] = data["achieved_goals"]
        buf._g[:n] = data["desired_goals"]
        buf._actions[:n] = data["actions"]
        buf._rewards[:n] = data["rewards"]
        buf._touch_left[:n] = data["touch_left"]
        buf._touch_right[:n] = data["touch_right"]
        buf._disp[:n] = data["object_displacement"]
        buf._energy[:n] = data["cumulative_contact_energy"]
        buf._priority[:n] = data["priority"]
        buf._ids[:n] = data["episode_id"]
    buf._count = n
    buf.next_episode_id = header["next_episode_id"]
    buf.max_priority = float.fromhex(header["max_priority"])
    return buf
