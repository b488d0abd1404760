import numpy as np
import pytest
from scipy import stats

from contact_replay.core import ContractViolation
from contact_replay.env import (
    ConfigError,
    EnvConfig,
    EnvState,
    ManipulationEnv,
    OBS_DIM,
    TrajectoryRecorder,
    compute_reward,
    penalty_force,
    sphere_box_contact,
)


def run(env, actions):
    out = []
    for a in actions:
        out.append(env.step(a))
    return out


def scripted_push(s):
    """Walk behind the object, then push it toward the goal."""
    d = s.goal - s.object_pos
    d[2] = 0
    dn = d / (np.linalg.norm(d) + 1e-9)
    perp = np.array([-dn[1], dn[0], 0.0])
    rel = s.gripper_pos - s.object_pos
    rel[2] = 0
    along, side = rel @ dn, rel @ perp
    if along > -0.03:
        sgn = 1 if side >= 0 else -1
        if abs(side) < 0.05:
            target = s.gripper_pos + perp * sgn * 0.05
        else:
            target = s.object_pos - dn * 0.06 + perp * sgn * 0.05
    elif abs(side) > 0.005:
        target = s.object_pos - dn * 0.05
    else:
        target = s.gripper_pos + dn * 0.03
    a = (target - s.gripper_pos) / 0.03
    return np.clip(np.r_[a[:2], 0.0, 0.0], -1, 1)


class TestComputeReward:
    def test_zero_distance(self):
        assert compute_reward([0.1, 0.2, 0.3], [0.1, 0.2, 0.3], 0.05) == 0.0

    def test_boundary_inclusive(self):
        assert compute_reward([0.05, 0.0, 0.0], [0.0, 0.0, 0.0], 0.05) == 0.0

    def test_twice_threshold(self):
        assert compute_reward([0.1, 0.0, 0.0], [0.0, 0.0, 0.0], 0.05) == -1.0

    def test_batched(self):
        r = compute_reward(np.zeros((3, 3)), np.array([[0, 0, 0], [0.2, 0, 0], [0, 0.04, 0]]), 0.05)
        np.testing.assert_array_equal(r, [0.0, -1.0, 0.0])

    def test_length_mismatch(self):
        with pytest.raises(ContractViolation):
            compute_reward([0.0, 0.0], [0.0, 0.0, 0.0], 0.05)


class TestConfig:
    def test_defaults_per_task(self):
        for task in ("push", "pick_and_place", "slide"):
            cfg = EnvConfig(task=task)
            assert cfg.goal_region is not None

    def test_unknown_task(self):
        with pytest.raises(ConfigError):
            EnvConfig(task="stack")

    def test_degenerate_goal_region(self):
        with pytest.raises(ConfigError):
            EnvConfig(goal_region=((0.0, 0.0, 0.02), (0.0, 0.1, 0.02)))

    def test_threshold_larger_than_goal_region(self):
        with pytest.raises(ConfigError):
            EnvConfig(goal_region=((0.0, 0.0, 0.02), (0.03, 0.03, 0.02)), success_threshold=0.05)

    def test_slide_goal_beyond_reach(self):
        with pytest.raises(ConfigError):
            EnvConfig(task="slide", goal_region=((0.0, -0.1, 0.02), (0.3, 0.1, 0.02)))


class TestReset:
    @pytest.mark.parametrize("task", ["push", "pick_and_place", "slide"])
    def test_same_seed_identical(self, task):
        env = ManipulationEnv(EnvConfig(task=task))
        a = env.reset(seed=7)
        b = env.reset(seed=7)
        assert a.vector.tobytes() == b.vector.tobytes()
        assert a.desired_goal.tobytes() == b.desired_goal.tobytes()
        assert len(a.vector) == OBS_DIM

    @pytest.mark.parametrize("task", ["push", "pick_and_place", "slide"])
    def test_never_starts_solved_or_touching(self, task):
        env = ManipulationEnv(EnvConfig(task=task), np.random.default_rng(0))
        for _ in range(200):
            obs = env.reset()
            assert np.linalg.norm(obs.achieved_goal - obs.desired_goal) > env.config.success_threshold
            assert env.contact_forces(env.state) == (0.0, 0.0)

    def test_goal_distribution_uniform(self):
        cfg = EnvConfig(task="push")
        env = ManipulationEnv(cfg, np.random.default_rng(2024))
        low, high = np.array(cfg.goal_region[0][:2]), np.array(cfg.goal_region[1][:2])
        counts = np.zeros((4, 4))
        for _ in range(10_000):
            g = env.reset().desired_goal[:2]
            cell = np.minimum(((g - low) / (high - low) * 4).astype(int), 3)
            counts[cell[0], cell[1]] += 1
        _, p = stats.chisquare(counts.ravel())
        assert p > 0.01


class TestContact:
    def test_penalty_force_example(self):
        assert penalty_force(0.002, 500.0) == pytest.approx(1.0, abs=1e-12)

    def test_face_penetration_gives_stiffness_times_depth(self):
        cfg = EnvConfig(task="push")
        env = ManipulationEnv(cfg)
        env.reset(seed=0)
        half = cfg.object_side / 2
        # put the left pad's surface 2 mm inside the object's -x face
        left, _ = env.pad_centers(np.zeros(3), 0.0)
        obj = np.array([left[0] + cfg.pad_radius + half - 0.002, left[1], 0.02])
        state = EnvState(gripper_pos=np.array([0.0, 0.0, 0.02]), gripper_gap=0.0,
                         object_pos=obj, object_vel=np.zeros(3), goal=np.ones(3))
        fl, fr = env.contact_forces(state)
        assert fl == pytest.approx(1.0, abs=1e-9)

    def test_sphere_box_normal_points_out(self):
        depth, n = sphere_box_contact([0.025, 0.0, 0.0], 0.01, np.zeros(3), 0.02)
        assert depth == pytest.approx(0.005)
        np.testing.assert_allclose(n, [1.0, 0.0, 0.0])
        assert sphere_box_contact([0.05, 0.0, 0.0], 0.01, np.zeros(3), 0.02) == (0.0, None)


class TestStep:
    def test_far_from_object_no_touch(self):
        env = ManipulationEnv(EnvConfig(task="push"))
        env.reset(seed=3)
        env.state.object_pos = np.array([0.15, 0.15, 0.02])
        env.state.goal = np.array([-0.15, 0.15, 0.02])
        res = env.step(np.array([-1.0, -1.0, 0.0, 0.0]))
        assert res.touch == (0.0, 0.0)
        assert res.object_displacement == 0.0
        assert res.reward == -1.0

    def test_reward_when_object_reaches_goal(self):
        env = ManipulationEnv(EnvConfig(task="push"))
        env.reset(seed=3)
        env.state.goal = env.state.object_pos.copy()
        assert env.step(np.zeros(4)).reward == 0.0
        env.state.goal = env.state.object_pos + np.array([0.1, 0.0, 0.0])
        assert env.step(np.zeros(4)).reward == -1.0

    def test_done_at_horizon(self):
        env = ManipulationEnv(EnvConfig(task="push", horizon=5))
        env.reset(seed=0)
        dones = [env.step(np.zeros(4)).done for _ in range(5)]
        assert dones == [False] * 4 + [True]

    def test_non_finite_action(self):
        env = ManipulationEnv(EnvConfig())
        env.reset(seed=0)
        with pytest.raises(ContractViolation):
            env.step(np.array([np.nan, 0, 0, 0]))

    @pytest.mark.parametrize("task", ["push", "pick_and_place", "slide"])
    def test_determinism(self, task):
        cfg = EnvConfig(task=task)
        actions = np.random.default_rng(5).uniform(-1, 1, size=(50, 4))
        trajs = []
        for _ in range(2):
            env = ManipulationEnv(cfg)
            env.reset(seed=11)
            trajs.append(np.array([np.r_[r.observation.vector, r.reward, r.touch]
                                   for r in run(env, actions)]))
        assert trajs[0].tobytes() == trajs[1].tobytes()

    @pytest.mark.parametrize("task", ["push", "pick_and_place", "slide"])
    def test_touch_nonnegative_and_displacement_consistent(self, task):
        env = ManipulationEnv(EnvConfig(task=task), np.random.default_rng(1))
        rng = np.random.default_rng(2)
        for _ in range(20):
            prev = env.reset().achieved_goal
            for _ in range(50):
                res = env.step(rng.uniform(-1, 1, 4))
                assert min(res.touch) >= 0.0
                now = res.observation.achieved_goal
                assert abs(res.object_displacement - np.linalg.norm(now - prev)) <= 1e-9
                prev = now

    @pytest.mark.parametrize("task", ["push", "pick_and_place"])
    def test_zero_actions_never_move_object(self, task):
        env = ManipulationEnv(EnvConfig(task=task), np.random.default_rng(4))
        for _ in range(20):
            env.reset()
            for _ in range(50):
                assert env.step(np.zeros(4)).object_displacement == 0.0

    def test_reward_minus_one_if_never_near_goal(self):
        env = ManipulationEnv(EnvConfig(task="push"), np.random.default_rng(9))
        rng = np.random.default_rng(10)
        for _ in range(20):
            env.reset()
            rewards, dists = [], []
            for _ in range(50):
                res = env.step(rng.uniform(-1, 1, 4))
                rewards.append(res.reward)
                dists.append(np.linalg.norm(env.state.object_pos - env.state.goal))
            if min(dists) > env.config.success_threshold:
                assert set(rewards) == {-1.0}

    def test_push_moves_object_with_graded_force(self):
        env = ManipulationEnv(EnvConfig(task="push"))
        env.reset(seed=0)
        env.state.object_pos = np.array([0.06, 0.0, 0.02])
        env.state.goal = np.array([0.2, 0.1, 0.02])
        slow = fast = None
        for speed in (0.3, 1.0):
            env.reset(seed=0)
            env.state.object_pos = np.array([0.06, 0.0, 0.02])
            env.state.goal = np.array([0.2, 0.1, 0.02])
            forces = []
            for _ in range(5):
                res = env.step(np.array([speed, 0.0, 0.0, 0.0]))
                forces.append(sum(res.touch))
            if speed < 1:
                slow = max(forces)
            else:
                fast = max(forces)
        assert 0 < slow < fast
        assert env.state.object_pos[0] > 0.06

    def test_scripted_push_solves_task(self):
        env = ManipulationEnv(EnvConfig(task="push"), np.random.default_rng(1))
        wins = 0
        for _ in range(30):
            env.reset()
            for _ in range(50):
                res = env.step(scripted_push(env.state))
            wins += res.reward == 0.0
        assert wins >= 25


class TestPickAndPlace:
    def _grasp(self, env):
        env.reset(seed=1)
        env.state.object_pos = np.array([0.1, 0.0, 0.02])
        env.state.goal = np.array([0.1, 0.0, 0.15])
        env.state.gripper_pos = np.array([0.1, 0.0, 0.02])
        env.state.gripper_gap = env.config.gap_max
        return env.step(np.array([0.0, 0.0, 0.0, -0.8]))

    def test_grasp_lift_has_constant_holding_force(self):
        env = ManipulationEnv(EnvConfig(task="pick_and_place"))
        first = self._grasp(env)
        assert min(first.touch) > 0
        forces = []
        for _ in range(4):
            res = env.step(np.array([0.0, 0.0, 1.0, -0.8]))
            forces.append(res.touch)
            assert res.object_displacement > 0
        assert env.state.object_pos[2] > 0.1
        np.testing.assert_allclose(forces, [forces[0]] * len(forces), rtol=1e-9)
        # lifted to the goal height: success
        assert env.step(np.array([0.0, 0.0, 0.1, -0.8])).reward == 0.0

    def test_release_drops_object(self):
        env = ManipulationEnv(EnvConfig(task="pick_and_place"))
        self._grasp(env)
        env.step(np.array([0.0, 0.0, 1.0, -0.8]))
        res = env.step(np.array([0.0, 0.0, 0.0, 1.0]))
        assert env.state.object_pos[2] == pytest.approx(0.02)
        assert res.object_displacement > 0

    def test_pressing_down_gives_force_without_displacement(self):
        env = ManipulationEnv(EnvConfig(task="pick_and_place"))
        env.reset(seed=1)
        env.state.object_pos = np.array([0.1, 0.0, 0.02])
        env.state.goal = np.array([-0.1, 0.0, 0.02])
        env.state.gripper_pos = np.array([0.1, 0.012 + 0.012, 0.07])
        touched = False
        for _ in range(5):
            res = env.step(np.array([0.0, 0.0, -1.0, -1.0]))
            touched |= sum(res.touch) > 0
            assert res.object_displacement == 0.0
        assert touched


class TestSlide:
    def test_strike_sends_object_past_reach_and_friction_stops_it(self):
        cfg = EnvConfig(task="slide")
        env = ManipulationEnv(cfg)
        env.reset(seed=0)
        env.state.object_pos = np.array([0.0, 0.0, 0.02])
        env.state.gripper_pos = np.array([-0.06, 0.0, 0.02])
        contact_steps = 0
        for t in range(50):
            a = np.array([1.0, 0.0, 0.0, 0.0]) if t < 3 else np.array([-1.0, 0.0, 0.0, 0.0])
            res = env.step(a)
            contact_steps += sum(res.touch) > 0
        assert contact_steps <= 3
        assert env.state.object_pos[0] > cfg.gripper_region[1][0]
        assert np.all(env.state.object_vel == 0.0)


def test_trajectory_dump(tmp_path):
    env = ManipulationEnv(EnvConfig())
    env.reset(seed=0)
    rec = TrajectoryRecorder()
    for t in range(3):
        res = env.step(np.zeros(4))
        rec.record(t, env.state, res.touch, res.reward)
    rec.write(tmp_path / "traj.csv")
    lines = (tmp_path / "traj.csv").read_text().splitlines()
    assert lines[0].startswith("t,gripper_x")
    assert len(lines) == 4
