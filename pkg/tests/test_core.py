import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from contact_replay.core import ContractViolation, ReplayBuffer, load_buffer, save_buffer
from contact_replay.env import GOAL_DIM, OBS_DIM

from conftest import H, make_buffer, make_episode


def brute_force_energy(ep):
    out = []
    total = 0.0
    for i in range(ep.horizon):
        total += (ep.touch_left[i] + ep.touch_right[i]) * ep.object_displacement[i]
        out.append(total)
    return out


class TestStoreEpisode:
    def test_append_to_empty(self, rng):
        buf = ReplayBuffer(2, H, OBS_DIM, GOAL_DIM)
        ep = make_episode(rng)
        buf.store_episode(ep)
        assert len(buf) == 1
        assert buf.episode_ids.tolist() == [0]

    def test_fifo_eviction(self, rng):
        buf = ReplayBuffer(2, H, OBS_DIM, GOAL_DIM)
        eps = [make_episode(rng) for _ in range(3)]
        for ep in eps:
            buf.store_episode(ep)
        assert buf.episode_ids.tolist() == [1, 2]
        np.testing.assert_array_equal(buf.episode(0).actions, eps[1].actions)
        np.testing.assert_array_equal(buf.episode(1).actions, eps[2].actions)

    def test_thousand_into_hundred(self, rng):
        buf = ReplayBuffer(100, H, OBS_DIM, GOAL_DIM)
        expected = []
        for i in range(1000):
            buf.store_episode(make_episode(rng))
            # hand-rolled FIFO oracle
            expected.append(i)
            if len(expected) > 100:
                expected.pop(0)
        assert buf.episode_ids.tolist() == expected == list(range(900, 1000))

    def test_wrong_horizon_rejected(self, rng):
        buf = ReplayBuffer(2, H, OBS_DIM, GOAL_DIM)
        with pytest.raises(ContractViolation):
            buf.store_episode(make_episode(rng, horizon=H + 1))

    def test_nonbinary_reward_rejected(self, rng):
        buf = ReplayBuffer(2, H, OBS_DIM, GOAL_DIM)
        ep = make_episode(rng)
        ep.rewards[0] = 0.5
        with pytest.raises(ContractViolation):
            buf.store_episode(ep)

    @settings(max_examples=50, deadline=None)
    @given(capacity=st.integers(1, 8), n=st.integers(0, 30))
    def test_size_never_exceeds_capacity(self, capacity, n):
        rng = np.random.default_rng(n)
        buf = ReplayBuffer(capacity, H, OBS_DIM, GOAL_DIM)
        for i in range(n):
            buf.store_episode(make_episode(rng))
            assert len(buf) <= capacity
        assert buf.episode_ids.tolist() == list(range(max(0, n - capacity), n))


class TestGetTransition:
    def test_first_and_last(self, rng):
        buf = ReplayBuffer(3, H, OBS_DIM, GOAL_DIM)
        ep = make_episode(rng)
        buf.store_episode(ep)
        first = buf.get_transition(0, 0)
        np.testing.assert_array_equal(first.state, ep.observations[0])
        np.testing.assert_array_equal(first.next_state, ep.observations[1])
        np.testing.assert_array_equal(first.action, ep.actions[0])
        last = buf.get_transition(0, H - 1)
        assert last.reward == ep.rewards[-1]
        np.testing.assert_array_equal(last.achieved_goal, ep.achieved_goals[-1])

    def test_out_of_range(self, rng):
        buf = make_buffer(rng, 3)
        with pytest.raises(IndexError):
            buf.get_transition(5, 3)
        with pytest.raises(IndexError):
            buf.get_transition(0, H)

    def test_gather_matches_single_lookups(self, rng):
        buf = make_buffer(rng, 5)
        e = rng.integers(0, 5, 20)
        t = rng.integers(0, H, 20)
        batch = buf.gather(e, t)
        for j in range(20):
            single = buf.get_transition(e[j], t[j])
            np.testing.assert_array_equal(batch[j].state, single.state)
            np.testing.assert_array_equal(batch[j].desired_goal, single.desired_goal)
            assert batch[j].touch_left == single.touch_left


class TestCachedEnergy:
    def test_matches_resummation(self, rng):
        buf = make_buffer(rng, 10)
        for ep in buf.episodes:
            np.testing.assert_allclose(ep.cumulative_contact_energy, brute_force_energy(ep),
                                       atol=1e-9, rtol=0)
            assert np.all(np.diff(ep.cumulative_contact_energy) >= 0)


class TestSnapshot:
    def test_round_trip_bit_exact(self, rng, tmp_path):
        buf = ReplayBuffer(4, H, OBS_DIM, GOAL_DIM)
        for _ in range(6):
            ep = make_episode(rng)
            ep.priority = float(rng.uniform())
            buf.store_episode(ep)
        buf.max_priority = 1.0 / 3.0
        path = tmp_path / "buf.npz"
        save_buffer(buf, path)
        loaded = load_buffer(path)
        assert len(loaded) == len(buf) and loaded.capacity == buf.capacity
        assert loaded.episode_ids.tolist() == [2, 3, 4, 5]
        assert loaded.max_priority == buf.max_priority
        for a, b in zip(buf.episodes, loaded.episodes):
            for name in ("observations", "achieved_goals", "desired_goal", "actions", "rewards",
                         "touch_left", "touch_right", "object_displacement",
                         "cumulative_contact_energy"):
                assert getattr(a, name).tobytes() == getattr(b, name).tobytes()
            assert a.priority == b.priority
        # the loaded buffer keeps evicting in the same order
        loaded.store_episode(make_episode(rng))
        assert loaded.episode_ids.tolist() == [3, 4, 5, 6]

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "x.npz"
        np.savez(path, a=np.zeros(2))
        with pytest.raises(ValueError):
            load_buffer(path)
