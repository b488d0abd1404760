"""The outer training loop, evaluation and checkpoint persistence."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..agent import DDPGAgent
from ..core import Episode, ReplayBuffer, save_buffer
from ..env import ACTION_DIM, GOAL_DIM, OBS_DIM, EnvConfig, ManipulationEnv, TrajectoryRecorder
from ..her import relabel_minibatch_indices
from ..prioritizers import (beta_schedule, contact_energy, episode_probabilities,
                            initial_priority, sample_batch, td_error_priority)
from .config import RunConfig, config_to_dict, format_value, load_config, write_config_file

log = logging.getLogger(__name__)

METRICS_COLUMNS = ("seed", "epoch", "success_rate", "mean_abs_td", "critic_loss", "actor_loss",
                   "buffer_episodes", "wall_clock_s")
STREAMS = ("env", "explore", "relabel", "sample", "init", "eval")


class TrainingAborted(RuntimeError):
    """A non-finite training signal stopped the run."""


class SeedStreams:
    """Independent named generators derived from one root seed.

    Each name maps to a fixed spawn key, so adding or skipping draws on one
    stream never shifts the others.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self.generators = {
            name: np.random.Generator(np.random.PCG64(
                np.random.SeedSequence(seed, spawn_key=(i,))))
            for i, name in enumerate(STREAMS)
        }

    def __getitem__(self, name: str) -> np.random.Generator:
        return self.generators[name]

    def state(self) -> dict:
        return {name: g.bit_generator.state for name, g in self.generators.items()}

    def set_state(self, state: dict) -> None:
        for name, s in state.items():
            self.generators[name].bit_generator.state = s


def rollout(env: ManipulationEnv, agent: DDPGAgent, explore: bool,
            rng: np.random.Generator | None = None,
            recorder: TrajectoryRecorder | None = None) -> Episode:
    H = env.config.horizon
    obs = env.reset()
    goal = obs.desired_goal
    observations = np.empty((H + 1, OBS_DIM))
    achieved = np.empty((H + 1, GOAL_DIM))
    actions = np.empty((H, ACTION_DIM))
    rewards = np.empty(H)
    touch = np.empty((H, 2))
    disp = np.empty(H)
    observations[0], achieved[0] = obs.vector, obs.achieved_goal
    for t in range(H):
        a = agent.act(obs.vector, goal, explore=explore, rng=rng)
        step = env.step(a)
        obs = step.observation
        actions[t] = a
        rewards[t] = step.reward
        touch[t] = step.touch
        disp[t] = step.object_displacement
        observations[t + 1], achieved[t + 1] = obs.vector, obs.achieved_goal
        if recorder is not None:
            recorder.record(t, env.state, step.touch, step.reward)
    ep = Episode(observations=observations, achieved_goals=achieved, desired_goal=goal,
                 actions=actions, rewards=rewards, touch_left=touch[:, 0],
                 touch_right=touch[:, 1], object_displacement=disp,
                 cumulative_contact_energy=np.zeros(H))
    ep.cumulative_contact_energy = contact_energy(ep)
    return ep


def success_rate(agent: DDPGAgent, env: ManipulationEnv, episodes: int) -> float:
    """Fraction of noise-free episodes whose final step earns reward 0."""
    if episodes < 1:
        raise ValueError("evaluation needs at least one episode")
    wins = 0
    for _ in range(episodes):
        ep = rollout(env, agent, explore=False)
        wins += ep.rewards[-1] == 0.0
    return wins / episodes


@dataclass
class Learner:
    """Everything one seed owns: env, buffer, agent and random streams."""

    config: RunConfig
    seed: int

    def __post_init__(self):
        cfg = self.config
        self.streams = SeedStreams(self.seed)
        self.env = ManipulationEnv(cfg.env, self.streams["env"])
        self.eval_env = ManipulationEnv(cfg.env, self.streams["eval"])
        self.buffer = ReplayBuffer(cfg.buffer_capacity, cfg.env.horizon, OBS_DIM, GOAL_DIM,
                                   ACTION_DIM)
        self.agent = DDPGAgent(OBS_DIM, GOAL_DIM, ACTION_DIM, cfg.env.horizon, cfg.agent,
                               rng=self.streams["init"])
        self.probs = None

    def collect(self, recorder: TrajectoryRecorder | None = None) -> Episode:
        ep = rollout(self.env, self.agent, explore=True, rng=self.streams["explore"],
                     recorder=recorder)
        ep.priority = initial_priority(ep, self.buffer, self.config.prioritizer)
        self.buffer.store_episode(ep)
        self.agent.update_normalizer(ep.observations,
                                     np.concatenate([ep.desired_goal[None], ep.achieved_goals]))
        self.probs = None
        return ep

    def refresh_probabilities(self) -> np.ndarray:
        self.probs = episode_probabilities(self.buffer, self.config.prioritizer)
        return self.probs

    def train_step(self, beta: float, use_is_weights: bool = True):
        cfg = self.config
        if self.probs is None:
            self.refresh_probabilities()
        sb = sample_batch(self.buffer, self.probs, cfg.agent.batch_size, beta,
                          self.streams["sample"])
        batch = relabel_minibatch_indices(self.buffer, sb.indices, cfg.her,
                                          self.streams["relabel"], cfg.env.success_threshold)
        stats = self.agent.update(batch, sb.is_weights if use_is_weights else None)
        if stats.skipped:
            raise TrainingAborted(
                f"seed {self.seed}: non-finite loss (critic {stats.critic_loss}, "
                f"actor {stats.actor_loss})")
        if cfg.prioritizer.variant == "per":
            td_error_priority(self.buffer, np.column_stack([sb.episodes, stats.abs_td]))
            self.probs = None
        return stats

    def evaluate(self) -> float:
        return success_rate(self.agent, self.eval_env, self.config.eval_episodes)

    def save_checkpoint(self, path) -> None:
        save_checkpoint(path, self.agent, self.config, self.streams)


def save_checkpoint(path, agent: DDPGAgent, config: RunConfig, streams: SeedStreams | None = None):
    arrays = agent.to_arrays()
    flat = {k: format_value(v) for k, v in config_to_dict(config).items()}
    arrays["run/config"] = np.array(json.dumps(flat, sort_keys=True))
    if streams is not None:
        arrays["run/rng_state"] = np.array(json.dumps(streams.state(), sort_keys=True))
    with open(Path(path), "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[DDPGAgent, RunConfig]:
    try:
        with np.load(Path(path), allow_pickle=False) as data:
            missing = {"agent/meta", "run/config"} - set(data.files)
            if missing:
                raise ValueError(f"missing entries {sorted(missing)}")
            agent = DDPGAgent.from_arrays(data)
            config = load_config(overrides=json.loads(str(data["run/config"])))
    except (OSError, ValueError, KeyError) as exc:
        raise ValueError(f"corrupt checkpoint {path}: {exc}") from exc
    return agent, config


def _fmt(value) -> str:
    return repr(float(value))


def train_seed(config: RunConfig, seed: int, metrics_paths=()) -> list[dict]:
    """Run the whole schedule for one seed, appending one metrics row per epoch."""
    out = Path(config.output_dir) / f"seed_{seed}"
    out.mkdir(parents=True, exist_ok=True)
    metrics_paths = [out / "metrics.csv", *metrics_paths]
    with open(out / "metrics.csv", "w", newline="") as fh:
        csv.writer(fh).writerow(METRICS_COLUMNS)

    learner = Learner(config, seed)
    start = time.perf_counter()
    rows = []
    cfg = config
    for epoch in range(cfg.epochs):
        beta = beta_schedule(epoch, cfg.epochs, cfg.beta0)
        td, closs, aloss = [], [], []
        for cycle in range(cfg.cycles_per_epoch):
            for i in range(cfg.episodes_per_cycle):
                recorder = TrajectoryRecorder() if cfg.dump_trajectories else None
                learner.collect(recorder)
                if recorder is not None:
                    recorder.write(out / f"trajectory_e{epoch}_c{cycle}_{i}.csv")
            for _ in range(cfg.agent.updates_per_episode):
                try:
                    stats = learner.train_step(beta, cfg.use_is_weights)
                except TrainingAborted:
                    learner.save_checkpoint(out / "checkpoint_aborted.npz")
                    raise
                td.append(stats.mean_abs_td)
                closs.append(stats.critic_loss)
                aloss.append(stats.actor_loss)
        row = {
            "seed": seed,
            "epoch": epoch,
            "success_rate": learner.evaluate(),
            "mean_abs_td": float(np.mean(td)) if td else 0.0,
            "critic_loss": float(np.mean(closs)) if closs else 0.0,
            "actor_loss": float(np.mean(aloss)) if aloss else 0.0,
            "buffer_episodes": len(learner.buffer),
            "wall_clock_s": time.perf_counter() - start if cfg.wall_clock else 0.0,
        }
        rows.append(row)
        line = [seed, epoch] + [_fmt(row[c]) for c in METRICS_COLUMNS[2:6]] + \
            [len(learner.buffer), _fmt(row["wall_clock_s"])]
        for path in metrics_paths:
            with open(path, "a", newline="") as fh:
                csv.writer(fh).writerow(line)
        log.info("seed %d epoch %d success %.3f |td| %.4f", seed, epoch, row["success_rate"],
                 row["mean_abs_td"])
    learner.save_checkpoint(out / "checkpoint.npz")
    if cfg.save_buffer:
        save_buffer(learner.buffer, out / "buffer.npz")
    return rows


def _worker(args):
    config, seed = args
    return train_seed(config, seed)


def train(config: RunConfig) -> Path:
    """Train every seed; returns the combined metrics CSV path."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_config_file(config, out / "config.ini")
    metrics = out / "metrics.csv"
    with open(metrics, "w", newline="") as fh:
        csv.writer(fh).writerow(METRICS_COLUMNS)
    if config.workers == 1:
        for seed in config.seeds:
            train_seed(config, seed, metrics_paths=[metrics])
        return metrics
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        list(pool.map(_worker, [(config, s) for s in config.seeds]))
    with open(metrics, "a", newline="") as fh:
        for seed in config.seeds:
            with open(out / f"seed_{seed}" / "metrics.csv", newline="") as src:
                fh.writelines(src.readlines()[1:])
    return metrics


def evaluate(checkpoint, episodes: int, seed: int = 0, config: EnvConfig | None = None) -> float:
    if episodes < 1:
        raise ValueError("evaluation needs at least one episode")
    agent, run_config = load_checkpoint(checkpoint)
    env = ManipulationEnv(config or run_config.env, SeedStreams(seed)["eval"])
    return success_rate(agent, env, episodes)
