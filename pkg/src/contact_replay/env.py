"""Planar/3-D gripper micro-simulator with touch sensing.

The gripper is kinematic: actions displace it directly. Each finger pad is a
sphere; the object is an axis-aligned cube resting on a table at ``z = 0``.
Contacts use a penalty model (normal force = stiffness * penetration depth)
and are resolved by displacing the object out of the pad. Motion within a
step is sub-stepped so that fast pushes cannot tunnel through the object.

Observation vector layout (19 entries, identical for every task)::

    0:3    gripper position
    3      gripper gap
    4:7    object position
    7:10   object orientation (always zero, the cube never rotates)
    10:13  object linear velocity
    13:16  object angular velocity (always zero)
    16:19  object position relative to the gripper
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .core import ContractViolation

TASKS = ("push", "pick_and_place", "slide")
OBS_DIM = 19
GOAL_DIM = 3
ACTION_DIM = 4


class ConfigError(ValueError):
    pass


def _box(low, high):
    return (tuple(float(v) for v in low), tuple(float(v) for v in high))


# (workspace, gripper reach, object start region, goal region, gripper home)
_TASK_GEOMETRY = {
    "push": dict(
        workspace=_box((-0.3, -0.3, 0.0), (0.3, 0.3, 0.3)),
        gripper_region=_box((-0.3, -0.3, 0.02), (0.3, 0.3, 0.02)),
        object_region=_box((-0.15, -0.15, 0.02), (0.15, 0.15, 0.02)),
        goal_region=_box((-0.15, -0.15, 0.02), (0.15, 0.15, 0.02)),
        gripper_home=(0.0, 0.0, 0.02),
    ),
    "pick_and_place": dict(
        workspace=_box((-0.3, -0.3, 0.0), (0.3, 0.3, 0.3)),
        gripper_region=_box((-0.3, -0.3, 0.0), (0.3, 0.3, 0.3)),
        object_region=_box((-0.15, -0.15, 0.02), (0.15, 0.15, 0.02)),
        goal_region=_box((-0.15, -0.15, 0.02), (0.15, 0.15, 0.2)),
        gripper_home=(0.0, 0.0, 0.1),
    ),
    "slide": dict(
        workspace=_box((-0.3, -0.3, 0.0), (0.9, 0.3, 0.3)),
        gripper_region=_box((-0.3, -0.3, 0.02), (0.15, 0.3, 0.02)),
        object_region=_box((-0.1, -0.1, 0.02), (0.05, 0.1, 0.02)),
        goal_region=_box((0.35, -0.15, 0.02), (0.6, 0.15, 0.02)),
        gripper_home=(-0.2, 0.0, 0.02),
    ),
}


@dataclass(frozen=True)
class EnvConfig:
    task: str = "push"
    dt: float = 0.05
    horizon: int = 50
    success_threshold: float = 0.05
    contact_stiffness: float = 500.0
    object_side: float = 0.04
    friction_coeff: float = 0.1
    max_step: float = 0.03
    rng_seed: int = 0
    pad_radius: float = 0.012
    gap_max: float = 0.08
    gravity: float = 9.81
    # object speed per unit of gripper approach speed when a slide strike lands
    slide_gain: float = 2.0
    substep_length: float = 0.004
    # geometry; None selects the task default
    workspace: tuple | None = None
    gripper_region: tuple | None = None
    object_region: tuple | None = None
    goal_region: tuple | None = None
    gripper_home: tuple | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        for key, default in _TASK_GEOMETRY[self.task].items():
            value = getattr(self, key)
            if value is None:
                object.__setattr__(self, key, default)
            elif key != "gripper_home":
                object.__setattr__(self, key, _box(*value))
            else:
                object.__setattr__(self, key, tuple(float(v) for v in value))
        self.validate()

    @property
    def planar(self) -> bool:
        return self.task != "pick_and_place"

    @property
    def rest_height(self) -> float:
        return self.object_side / 2

    def validate(self) -> None:
        for name in ("dt", "success_threshold", "contact_stiffness", "object_side",
                     "friction_coeff", "max_step", "pad_radius", "gap_max", "gravity",
                     "substep_length"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"env.{name} must be positive")
        if self.horizon < 1:
            raise ConfigError("env.horizon must be positive")
        for name in ("workspace", "gripper_region", "object_region", "goal_region"):
            low, high = getattr(self, name)
            if any(h < l for l, h in zip(low, high)):
                raise ConfigError(f"env.{name} has high < low")
        glow, ghigh = self.goal_region
        if not (ghigh[0] > glow[0] and ghigh[1] > glow[1]):
            raise ConfigError("env.goal_region is degenerate (zero area)")
        diameter = math.dist(glow, ghigh)
        if self.success_threshold >= diameter:
            raise ConfigError(
                f"success threshold {self.success_threshold} >= goal region diameter "
                f"{diameter:.4g}; every reset would start solved")
        wlow, whigh = self.workspace
        if self.task in ("push", "pick_and_place"):
            if any(g < w for g, w in zip(glow, wlow)) or any(g > w for g, w in zip(ghigh, whigh)):
                raise ConfigError("env.goal_region must lie inside env.workspace")
        else:
            reach_x = self.gripper_region[1][0] + self.pad_radius
            if glow[0] - self.object_side / 2 <= reach_x:
                raise ConfigError("slide goal region must lie beyond the gripper's reach")


@dataclass
class EnvState:
    gripper_pos: np.ndarray
    gripper_gap: float
    object_pos: np.ndarray
    object_vel: np.ndarray
    goal: np.ndarray
    step_count: int = 0
    carrying: bool = False

    def copy(self) -> "EnvState":
        return replace(self, gripper_pos=self.gripper_pos.copy(), object_pos=self.object_pos.copy(),
                       object_vel=self.object_vel.copy(), goal=self.goal.copy())


@dataclass(frozen=True)
class Observation:
    vector: np.ndarray
    desired_goal: np.ndarray
    achieved_goal: np.ndarray


class StepResult(NamedTuple):
    observation: Observation
    reward: float
    touch: tuple[float, float]
    done: bool
    object_displacement: float


def compute_reward(achieved, goal, threshold: float):
    """Sparse reward: 0 inside the closed ``threshold`` ball around the goal, else -1.

    Works on single vectors or on batches along the last axis.
    """
    achieved = np.asarray(achieved, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    if achieved.shape[-1] != goal.shape[-1]:
        raise ContractViolation(f"goal widths differ: {achieved.shape} vs {goal.shape}")
    if not threshold > 0:
        raise ContractViolation("threshold must be positive")
    dist = np.linalg.norm(achieved - goal, axis=-1)
    reward = np.where(dist <= threshold, 0.0, -1.0)
    return float(reward) if reward.ndim == 0 else reward


def penalty_force(depth: float, stiffness: float) -> float:
    return stiffness * max(depth, 0.0)


def sphere_box_contact(center, radius, box_center, half_side):
    """Penetration depth and unit normal (pointing from box to sphere).

    Returns ``(0.0, None)`` when the shapes do not overlap.
    """
    d = np.asarray(center, dtype=np.float64) - box_center
    q = np.clip(d, -half_side, half_side)
    diff = d - q
    dist = math.sqrt(float(diff @ diff))
    if dist > 0.0:
        depth = radius - dist
        if depth <= 0.0:
            return 0.0, None
        return depth, diff / dist
    # sphere centre inside the box: leave through the nearest face
    slack = half_side - np.abs(d)
    axis = int(np.argmin(slack))
    normal = np.zeros(3)
    normal[axis] = 1.0 if d[axis] >= 0 else -1.0
    return radius + float(slack[axis]), normal


class ManipulationEnv:
    """Goal-conditioned environment for the push, pick_and_place and slide tasks."""

    def __init__(self, config: EnvConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(config.rng_seed)
        self.state: EnvState | None = None

    # -- geometry helpers -------------------------------------------------
    def pad_centers(self, gripper_pos, gap):
        offset = gap / 2 + self.config.pad_radius
        left = gripper_pos + np.array([0.0, offset, 0.0])
        right = gripper_pos - np.array([0.0, offset, 0.0])
        return left, right

    def pad_contacts(self, state: EnvState):
        """Per-pad (depth, normal) against the object for the current state."""
        half = self.config.object_side / 2
        return [sphere_box_contact(c, self.config.pad_radius, state.object_pos, half)
                for c in self.pad_centers(state.gripper_pos, state.gripper_gap)]

    def contact_forces(self, state: EnvState) -> tuple[float, float]:
        """Normal force on the left and right pads for a static configuration."""
        k = self.config.contact_stiffness
        (dl, _), (dr, _) = self.pad_contacts(state)
        return penalty_force(dl, k), penalty_force(dr, k)

    def observe(self, state: EnvState | None = None) -> Observation:
        s = self.state if state is None else state
        zeros = np.zeros(3)
        vector = np.concatenate([
            s.gripper_pos, [s.gripper_gap], s.object_pos, zeros, s.object_vel, zeros,
            s.object_pos - s.gripper_pos,
        ])
        return Observation(vector=vector, desired_goal=s.goal.copy(), achieved_goal=s.object_pos.copy())

    # -- episode control --------------------------------------------------
    def reset(self, seed: int | None = None) -> Observation:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        cfg = self.config
        rng = self.rng
        goal = rng.uniform(*map(np.asarray, cfg.goal_region))
        home = np.asarray(cfg.gripper_home)
        gap = 0.0 if cfg.planar else cfg.gap_max
        half = cfg.object_side / 2
        for _ in range(1000):
            obj = rng.uniform(*map(np.asarray, cfg.object_region))
            if np.linalg.norm(obj - goal) <= cfg.success_threshold:
                continue
            pads = self.pad_centers(home, gap)
            if any(sphere_box_contact(p, cfg.pad_radius, obj, half)[0] > 0 for p in pads):
                continue
            break
        else:
            raise ConfigError("could not sample an object position separated from the goal")
        self.state = EnvState(gripper_pos=home.copy(), gripper_gap=gap, object_pos=obj,
                              object_vel=np.zeros(3), goal=goal)
        return self.observe()

    def step(self, action) -> StepResult:
        if self.state is None:
            raise ContractViolation("step() called before reset()")
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (ACTION_DIM,):
            raise ContractViolation(f"action must have shape ({ACTION_DIM},), got {action.shape}")
        if not np.all(np.isfinite(action)):
            raise ContractViolation("non-finite action")
        action = np.clip(action, -1.0, 1.0)
        cfg = self.config
        s = self.state
        start = s.object_pos.copy()

        if cfg.task == "pick_and_place":
            s.gripper_gap = (action[3] + 1.0) / 2.0 * cfg.gap_max
            s.carrying = self._grasped(s)
        move = cfg.max_step * action[:3]
        if cfg.planar:
            move[2] = 0.0

        n_sub = max(1, math.ceil(float(np.linalg.norm(move)) / cfg.substep_length))
        force_l = force_r = 0.0
        for _ in range(n_sub):
            fl, fr = self._substep(s, move / n_sub, cfg.dt / n_sub)
            force_l += fl
            force_r += fr
        force_l /= n_sub
        force_r /= n_sub

        if cfg.task == "slide":
            self._integrate_slide(s)
        else:
            if not s.carrying:
                s.object_pos[2] = cfg.rest_height
            s.object_vel = (s.object_pos - start) / cfg.dt

        s.step_count += 1
        displacement = float(np.linalg.norm(s.object_pos - start))
        reward = compute_reward(s.object_pos, s.goal, cfg.success_threshold)
        done = s.step_count >= cfg.horizon
        return StepResult(self.observe(), reward, (force_l, force_r), done, displacement)

    # -- internals ----------------------------------------------------------
    def _grasped(self, s: EnvState) -> bool:
        if s.gripper_gap >= self.config.object_side:
            return False
        (dl, nl), (dr, nr) = self.pad_contacts(s)
        return dl > 0 and dr > 0 and nl[1] > 0 and nr[1] < 0

    def _clamp_object(self, pos):
        low, high = self.config.workspace
        out = np.clip(pos, low, high)
        out[2] = max(out[2], self.config.rest_height)
        if not self.config.planar and not self.state.carrying:
            out[2] = self.config.rest_height
        elif self.config.planar:
            out[2] = self.config.rest_height
        return out

    def _substep(self, s: EnvState, delta, sub_dt: float) -> tuple[float, float]:
        cfg = self.config
        low, high = cfg.gripper_region
        before = s.gripper_pos.copy()
        s.gripper_pos = np.clip(s.gripper_pos + delta, low, high)
        moved = s.gripper_pos - before
        k = cfg.contact_stiffness
        half = cfg.object_side / 2
        forces = [0.0, 0.0]

        if s.carrying:
            s.object_pos = self._clamp_object(s.object_pos + moved)
            # holding force from the squeeze depth, unchanged while carried
            for i, (depth, _) in enumerate(self.pad_contacts(s)):
                forces[i] += penalty_force(depth, k)
        else:
            for i in range(2):
                pad = self.pad_centers(s.gripper_pos, s.gripper_gap)[i]
                depth, normal = sphere_box_contact(pad, cfg.pad_radius, s.object_pos, half)
                if depth <= 0.0:
                    continue
                forces[i] += penalty_force(depth, k)
                push = -normal * depth
                if cfg.planar:
                    push[2] = 0.0
                target = s.object_pos + push
                resolved = self._clamp_object(target)
                blocked = target - resolved
                if cfg.task == "slide":
                    approach = float(moved @ -normal) / sub_dt
                    if approach > 0:
                        kick = -normal * cfg.slide_gain * approach
                        kick[2] = 0.0
                        if kick @ kick > s.object_vel @ s.object_vel:
                            s.object_vel = kick
                s.object_pos = resolved
                # whatever the object could not absorb pushes the gripper back
                if np.any(blocked != 0.0):
                    s.gripper_pos = np.clip(s.gripper_pos - blocked, low, high)

        # table contact (only reachable when the gripper can move vertically)
        for i, pad in enumerate(self.pad_centers(s.gripper_pos, s.gripper_gap)):
            depth = cfg.pad_radius - pad[2]
            if depth > 0:
                forces[i] += penalty_force(depth, k)
        if not cfg.planar and s.gripper_pos[2] < cfg.pad_radius:
            s.gripper_pos[2] = cfg.pad_radius
        return forces[0], forces[1]

    def _integrate_slide(self, s: EnvState) -> None:
        cfg = self.config
        speed = float(np.linalg.norm(s.object_vel))
        if speed > 0.0:
            s.object_vel = s.object_vel * max(0.0, 1.0 - cfg.friction_coeff * cfg.dt * cfg.gravity / speed)
        target = s.object_pos + s.object_vel * cfg.dt
        resolved = self._clamp_object(target)
        hit_wall = target != resolved
        s.object_vel = np.where(hit_wall, 0.0, s.object_vel)
        s.object_pos = resolved


def make_env(config: EnvConfig, seed: int | None = None) -> ManipulationEnv:
    rng = np.random.default_rng(config.rng_seed if seed is None else seed)
    return ManipulationEnv(config, rng)


class TrajectoryRecorder:
    """Collects per-step rows for the optional CSV trajectory dump."""

    COLUMNS = ("t", "gripper_x", "gripper_y", "gripper_z", "object_x", "object_y", "object_z",
               "goal_x", "goal_y", "goal_z", "touch_left", "touch_right", "reward")

    def __init__(self):
        self.rows: list[tuple] = []

    def record(self, t: int, state: EnvState, touch, reward: float) -> None:
        self.rows.append((t, *state.gripper_pos, *state.object_pos, *state.goal,
                          touch[0], touch[1], reward))

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            writer.writerows([[repr(float(v)) if i else v for i, v in enumerate(row)]
                              for row in self.rows])
