"""Episode priorities, prefix-sum sampling and importance-sampling weights.

Four schemes share one pipeline: a non-negative score per stored episode is
normalised into a distribution over episodes, episodes are drawn from that
distribution and a timestep is drawn uniformly inside each chosen episode.

* ``uniform`` -- plain HER, every episode equally likely.
* ``cebp``    -- sum over timesteps of the sigmoid-smoothed cumulative contact
  energy (touch force times object displacement).
* ``ebp``     -- object trajectory energy (potential + kinetic changes).
* ``per``     -- mean absolute TD error from the episode's latest evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ContractViolation, Episode, ReplayBuffer

KINDS = ("uniform", "cebp", "ebp", "per")

# observation slots used by the trajectory-energy baseline
_OBJECT_Z = 6
_OBJECT_VEL = slice(10, 13)


@dataclass(frozen=True)
class SigmoidParams:
    k: float = 100.0
    T: float = 0.01

    def __post_init__(self):
        if not (self.k > 0 and self.T > 0):
            raise ContractViolation(f"sigmoid scale and temperature must be positive: {self}")


@dataclass(frozen=True)
class PrioritizerKind:
    """Which prioritisation scheme is active, with its parameters."""

    variant: str = "cebp"
    sigmoid: SigmoidParams = SigmoidParams()
    alpha: float = 0.6
    epsilon_floor: float = 0.01
    per_step_energy: bool = False
    mass: float = 1.0
    gravity: float = 9.81

    def __post_init__(self):
        if self.variant not in KINDS:
            raise ContractViolation(f"unknown prioritizer {self.variant!r}; expected one of {KINDS}")
        if not (self.alpha > 0 and self.epsilon_floor > 0):
            raise ContractViolation("alpha and epsilon_floor must be positive")


@dataclass
class SampleBatch:
    indices: np.ndarray        # (N, 2) rows of (episode, t)
    probabilities: np.ndarray  # p_episode of each drawn episode
    is_weights: np.ndarray

    @property
    def episodes(self) -> np.ndarray:
        return self.indices[:, 0]

    @property
    def timesteps(self) -> np.ndarray:
        return self.indices[:, 1]


def cumulative_contact_energy(touch_left, touch_right, displacement) -> np.ndarray:
    """Running sum of (left + right force) * object displacement."""
    work = (np.asarray(touch_left) + np.asarray(touch_right)) * np.asarray(displacement)
    return np.cumsum(work, axis=-1)


def contact_energy(ep: Episode) -> np.ndarray:
    return cumulative_contact_energy(ep.touch_left, ep.touch_right, ep.object_displacement)


def smooth(c, params: SigmoidParams) -> np.ndarray:
    """Scaled logistic ``k / (1 + exp(-c T))``, evaluated without overflow."""
    z = np.asarray(c, dtype=np.float64) * params.T
    e = np.exp(-np.abs(z))
    return params.k * np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def step_increments(c) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    return np.diff(c, axis=-1, prepend=0.0)


def trajectory_energy_ebp(ep: Episode, mass: float = 1.0, g: float = 9.81) -> float:
    """Sum over steps of |change in potential| + |change in kinetic| energy.

    Rotational energy is always zero for the non-rotating cube.
    """
    return float(_trajectory_energy(ep.observations[None], mass, g)[0])


def _trajectory_energy(observations: np.ndarray, mass: float, g: float) -> np.ndarray:
    z = observations[..., _OBJECT_Z]
    v = observations[..., _OBJECT_VEL]
    potential = mass * g * z
    kinetic = 0.5 * mass * np.sum(v * v, axis=-1)
    return (np.abs(np.diff(potential, axis=-1)).sum(axis=-1)
            + np.abs(np.diff(kinetic, axis=-1)).sum(axis=-1))


def episode_scores(buffer: ReplayBuffer, kind: PrioritizerKind) -> np.ndarray:
    """Unnormalised per-episode sampling weight, oldest episode first."""
    n = len(buffer)
    if n == 0:
        raise ContractViolation("cannot prioritise an empty buffer")
    if kind.variant == "uniform":
        return np.ones(n)
    if kind.variant == "cebp":
        c = buffer.contact_energies
        if kind.per_step_energy:
            c = step_increments(c)
        return smooth(c, kind.sigmoid).sum(axis=1)
    if kind.variant == "ebp":
        return _trajectory_energy(buffer.observations, kind.mass, kind.gravity) + kind.epsilon_floor
    return (buffer.priorities + kind.epsilon_floor) ** kind.alpha


def episode_probabilities(buffer: ReplayBuffer, kind: PrioritizerKind) -> np.ndarray:
    scores = episode_scores(buffer, kind)
    return scores / scores.sum()


def initial_priority(ep: Episode, buffer: ReplayBuffer, kind: PrioritizerKind) -> float:
    """Priority recorded on an episode when it enters the buffer."""
    if kind.variant == "cebp":
        c = ep.cumulative_contact_energy
        if kind.per_step_energy:
            c = step_increments(c)
        return float(smooth(c, kind.sigmoid).sum())
    if kind.variant == "ebp":
        return trajectory_energy_ebp(ep, kind.mass, kind.gravity)
    if kind.variant == "per":
        return buffer.max_priority
    return 1.0


def td_error_priority(buffer: ReplayBuffer, batch_deltas) -> None:
    """Refresh episode priorities from the latest |TD error| of their samples.

    ``batch_deltas`` is a sequence of ``(episode_index, |delta|)`` pairs; each
    touched episode takes the mean of its values in this batch.
    """
    pairs = np.asarray(batch_deltas, dtype=np.float64).reshape(-1, 2)
    if len(pairs) == 0:
        return
    episodes = pairs[:, 0].astype(np.int64)
    deltas = np.abs(pairs[:, 1])
    touched, inverse = np.unique(episodes, return_inverse=True)
    means = np.bincount(inverse, weights=deltas) / np.bincount(inverse)
    buffer.set_priorities(touched, means)
    buffer.max_priority = max(buffer.max_priority, float(means.max()))


def sample_indices(probs, batch_size: int, horizon: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``(episode, t)`` pairs by inverting the cumulative distribution."""
    if batch_size < 1:
        raise ContractViolation("batch_size must be >= 1")
    cdf = np.cumsum(np.asarray(probs, dtype=np.float64))
    u = rng.random(batch_size) * cdf[-1]
    episodes = np.searchsorted(cdf, u, side="right")
    # guards u landing exactly on the final edge after rounding
    np.minimum(episodes, len(cdf) - 1, out=episodes)
    t = rng.integers(0, horizon, size=batch_size)
    return np.stack([episodes, t], axis=1)


def is_weights(p_of_drawn, n_total_episodes: int, beta: float) -> np.ndarray:
    p = np.asarray(p_of_drawn, dtype=np.float64)
    if np.any(p <= 0):
        raise ContractViolation("importance weights need strictly positive probabilities")
    if not 0.0 <= beta <= 1.0:
        raise ContractViolation(f"beta must be in [0, 1], got {beta}")
    w = (n_total_episodes * p) ** (-beta)
    return w / w.max()


def beta_schedule(epoch: int, total_epochs: int, beta0: float = 0.4) -> float:
    """Linear anneal from ``beta0`` at epoch 0 to 1 at the last epoch."""
    if total_epochs <= 1:
        return 1.0 if epoch > 0 else beta0
    frac = min(max(epoch / (total_epochs - 1), 0.0), 1.0)
    return beta0 + (1.0 - beta0) * frac


def sample_batch(buffer: ReplayBuffer, probs, batch_size: int, beta: float,
                 rng: np.random.Generator) -> SampleBatch:
    idx = sample_indices(probs, batch_size, buffer.horizon, rng)
    p = np.asarray(probs)[idx[:, 0]]
    return SampleBatch(indices=idx, probabilities=p, is_weights=is_weights(p, len(buffer), beta))


def entropy(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())
