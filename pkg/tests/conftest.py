import numpy as np
import pytest

from contact_replay.core import Episode, ReplayBuffer
from contact_replay.env import GOAL_DIM, OBS_DIM, compute_reward
from contact_replay.prioritizers import cumulative_contact_energy

H = 6
EPS = 0.05


def make_episode(rng, horizon=H, touch_scale=1.0, contact=True, episode_id=-1):
    """Random but internally consistent episode (rewards agree with goals)."""
    obs = rng.normal(size=(horizon + 1, OBS_DIM)) * 0.1
    ag = obs[:, 4:7].copy()
    goal = ag[-1] + rng.normal(size=GOAL_DIM) * 0.05
    tl = rng.uniform(0, touch_scale, horizon) if contact else np.zeros(horizon)
    tr = rng.uniform(0, touch_scale, horizon) if contact else np.zeros(horizon)
    disp = np.linalg.norm(np.diff(ag, axis=0), axis=1)
    return Episode(
        observations=obs,
        achieved_goals=ag,
        desired_goal=goal,
        actions=rng.uniform(-1, 1, size=(horizon, 4)),
        rewards=compute_reward(ag[1:], goal, EPS),
        touch_left=tl,
        touch_right=tr,
        object_displacement=disp,
        cumulative_contact_energy=cumulative_contact_energy(tl, tr, disp),
        episode_id=episode_id,
    )


def make_buffer(rng, n_episodes, capacity=None, horizon=H, **kwargs):
    buf = ReplayBuffer(capacity or max(n_episodes, 1), horizon, OBS_DIM, GOAL_DIM)
    for _ in range(n_episodes):
        buf.store_episode(make_episode(rng, horizon, **kwargs))
    return buf


def buffer_with_energies(energy_profiles):
    """Buffer whose episodes carry exactly the given cumulative energies."""
    rng = np.random.default_rng(0)
    profiles = np.asarray(energy_profiles, dtype=np.float64)
    buf = ReplayBuffer(len(profiles), profiles.shape[1], OBS_DIM, GOAL_DIM)
    for c in profiles:
        ep = make_episode(rng, profiles.shape[1])
        ep.cumulative_contact_energy = c
        buf.store_episode(ep)
    return buf


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria outcomes, printed once at the end of the session
ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS, key=lambda n: int(n[2:])):
        ok, detail = ACCEPTANCE_RESULTS[name]
        terminalreporter.write_line(f"{name} {'PASS' if ok else 'FAIL'}  {detail}")
