import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import settings
from hypothesis import strategies as st

from soliplex.safepolicy import ValidationError
from soliplex.safepolicy.core import EmptyBufferError
from soliplex.safepolicy.core import ReplayBuffer
from soliplex.safepolicy.core import RngStream
from soliplex.safepolicy.core import Transition
from soliplex.safepolicy.core import push_transition
from soliplex.safepolicy.core import sample_batch


def _transition(i: float, cost: float = 0.0) -> Transition:
    return Transition(
        state=np.array([i, 0.0]),
        action=np.array([0.1, -0.1]),
        reward=float(i),
        cost=cost,
        next_state=np.array([i + 1.0, 0.0]),
        done=False,
    )


class TestRngStream:
    def test_same_seed_and_stream_repeat(self):
        a = RngStream(42, 3)
        b = RngStream(42, 3)
        np.testing.assert_array_equal(a.random(10), b.random(10))
        np.testing.assert_array_equal(a.normal(size=7), b.normal(size=7))

    def test_streams_differ(self):
        assert not np.array_equal(RngStream(42, 0).random(10), RngStream(42, 1).random(10))

    def test_spawn_matches_direct_construction(self):
        spawned = RngStream(9, 0).spawn(5)
        np.testing.assert_array_equal(spawned.random(4), RngStream(9, 5).random(4))

    def test_normal_moments(self):
        z = RngStream(0, 0).normal(size=200_000)
        assert abs(z.mean()) < 0.01
        assert abs(z.std() - 1.0) < 0.01

    def test_normal_shapes(self, rng):
        assert isinstance(rng.normal(), float)
        assert rng.normal(size=(3, 4)).shape == (3, 4)
        assert rng.normal(size=np.int64(5)).shape == (5,)

    def test_uniform_bounds(self, rng):
        u = rng.uniform(-2.0, 3.0, size=1000)
        assert u.min() >= -2.0
        assert u.max() < 3.0

    def test_integers_range(self, rng):
        k = rng.integers(4, size=1000)
        assert set(k.tolist()) == {0, 1, 2, 3}

    @pytest.mark.parametrize("seed,stream", [(-1, 0), (2**64, 0), (0, -1)])
    def test_rejects_out_of_range_ids(self, seed, stream):
        with pytest.raises(ValueError):
            RngStream(seed, stream)


class TestTransition:
    def test_negative_cost_rejected(self):
        with pytest.raises(ValidationError, match="non-negative"):
            _transition(0.0, cost=-1.0).validate()

    def test_nan_reward_rejected(self):
        t = Transition(np.zeros(2), np.zeros(2), float("nan"), 0.0, np.zeros(2), False)
        with pytest.raises(ValidationError, match="reward"):
            t.validate()

    def test_infinite_state_rejected(self):
        t = Transition(np.array([np.inf, 0.0]), np.zeros(2), 0.0, 0.0, np.zeros(2), False)
        with pytest.raises(ValidationError, match="state"):
            t.validate()


class TestReplayBuffer:
    def test_push_and_read_back(self):
        buf = ReplayBuffer(capacity=4)
        push_transition(buf, _transition(1.0, cost=1.0))
        t = buf[0]
        assert t.reward == 1.0
        assert t.cost == 1.0
        np.testing.assert_array_equal(t.next_state, [2.0, 0.0])

    def test_overwrites_oldest_when_full(self):
        buf = ReplayBuffer(capacity=3)
        for i in range(5):
            buf.push(_transition(float(i)))
        assert len(buf) == 3
        assert sorted(buf[k].reward for k in range(3)) == [2.0, 3.0, 4.0]
        assert buf.metadata() == {"capacity": 3, "size": 3, "cursor": 2}

    def test_grows_past_initial_allocation(self):
        buf = ReplayBuffer(capacity=3000)
        for i in range(2500):
            buf.push(_transition(float(i)))
        assert len(buf) == 2500
        assert buf[2499].reward == 2499.0

    def test_invalid_transition_not_stored(self):
        buf = ReplayBuffer(capacity=3)
        with pytest.raises(ValidationError):
            buf.push(_transition(0.0, cost=-0.5))
        assert len(buf) == 0

    def test_index_out_of_range(self):
        buf = ReplayBuffer(capacity=3)
        buf.push(_transition(0.0))
        with pytest.raises(IndexError):
            buf[1]

    @settings(max_examples=50, deadline=None)
    @given(capacity=st.integers(1, 20), pushes=st.integers(0, 60))
    def test_holds_most_recent_entries(self, capacity, pushes):
        buf = ReplayBuffer(capacity=capacity)
        for i in range(pushes):
            buf.push(_transition(float(i)))
        assert len(buf) == min(capacity, pushes)
        expected = set(range(max(0, pushes - capacity), pushes))
        assert {int(buf[k].reward) for k in range(len(buf))} == expected


class TestSampleBatch:
    def test_empty_buffer(self, rng):
        with pytest.raises(EmptyBufferError):
            sample_batch(ReplayBuffer(capacity=2), 4, rng)

    def test_batch_shapes_and_members(self, rng):
        buf = ReplayBuffer(capacity=10)
        for i in range(5):
            buf.push(_transition(float(i)))
        batch = sample_batch(buf, 16, rng)
        assert len(batch) == 16
        assert batch.states.shape == (16, 2)
        assert set(batch.rewards.tolist()) <= {0.0, 1.0, 2.0, 3.0, 4.0}
        assert batch[0].reward == batch.rewards[0]

    def test_deterministic_given_stream(self):
        buf = ReplayBuffer(capacity=10)
        for i in range(10):
            buf.push(_transition(float(i)))
        a = sample_batch(buf, 8, RngStream(5, 3))
        b = sample_batch(buf, 8, RngStream(5, 3))
        np.testing.assert_array_equal(a.rewards, b.rewards)

    def test_draws_are_uniform_over_slots(self):
        n = 10_000
        buf = ReplayBuffer(capacity=n)
        for i in range(n):
            buf.push(_transition(float(i)))
        rng = RngStream(21, 4)
        counts = np.zeros(n)
        for _ in range(n):
            counts += np.bincount(sample_batch(buf, 256, rng).rewards.astype(int), minlength=n)
        expected = 256.0
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        dof = n - 1
        assert abs(chi2 - dof) < 5 * math.sqrt(2 * dof)
        sigma = math.sqrt(n * 256 * (1 / n) * (1 - 1 / n))
        assert np.max(np.abs(counts - expected)) < 5 * sigma
