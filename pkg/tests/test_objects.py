import numpy as np
import pytest
from scipy import stats

from xqc.utils.objects import (
    REWARD_EPS,
    ReplayBuffer,
    RewardNormalizer,
    Transition,
    normalize_reward,
)


def transition(i, done=False):
    return Transition(
        obs=np.full(2, float(i)),
        action=np.array([0.5]),
        reward=float(i),
        next_obs=np.full(2, float(i + 1)),
        done=done,
    )


def test_transition_validation():
    with pytest.raises(AssertionError):
        Transition(np.zeros(2), np.array([1.5]), 0.0, np.zeros(2), False)
    with pytest.raises(AssertionError):
        Transition(np.zeros(2), np.array([0.0]), np.nan, np.zeros(2), False)
    with pytest.raises(AssertionError):
        Transition(
            np.array([np.inf, 0.0]), np.array([0.0]), 0.0, np.zeros(2), False
        )


def test_buffer_overwrites_oldest():
    buffer = ReplayBuffer(2, 1, capacity=3, seed=0)
    for i in range(5):
        buffer.add(transition(i, done=i == 4))
    assert len(buffer) == 3
    assert sorted(buffer.reward) == [2.0, 3.0, 4.0]
    assert buffer.done[1] == 1.0


def test_buffer_samples_filled_region_only():
    buffer = ReplayBuffer(2, 1, capacity=100, seed=0)
    for i in range(10):
        buffer.add(transition(i))
    batch = buffer.sample(1000)
    assert batch["obs"].shape == (1000, 2)
    assert set(batch["reward"]) <= set(float(i) for i in range(10))


def test_empty_buffer_cannot_sample():
    with pytest.raises(AssertionError):
        ReplayBuffer(2, 1, capacity=4).sample(2)


def test_buffer_sampling_is_seeded():
    first = ReplayBuffer(2, 1, capacity=10, seed=3)
    second = ReplayBuffer(2, 1, capacity=10, seed=3)
    for i in range(10):
        first.add(transition(i))
        second.add(transition(i))
    np.testing.assert_array_equal(
        first.sample_indices(50), second.sample_indices(50)
    )


def test_buffer_sampling_is_uniform():
    buffer = ReplayBuffer(1, 1, capacity=50, seed=0)
    buffer.size = 50
    counts = np.bincount(buffer.sample_indices(1_000_000), minlength=50)
    assert stats.chisquare(counts).pvalue > 0.01


def test_zero_rewards_stay_zero():
    normalizer = RewardNormalizer(0.99)
    for step in range(100):
        assert normalize_reward(normalizer, 0.0, done=step % 10 == 9) == 0.0
    assert normalizer.std == REWARD_EPS


def test_first_reward_is_finite():
    normalizer = RewardNormalizer(0.99)
    assert np.isfinite(normalize_reward(normalizer, 1.0))
    assert normalizer.std >= REWARD_EPS


def test_return_scale_of_white_noise():
    gamma = 0.99
    normalizer = RewardNormalizer(gamma)
    rng = np.random.default_rng(0)
    for reward in rng.normal(size=100_000):
        normalizer.update(float(reward))
    expected = 1 / np.sqrt(1 - gamma**2)
    assert abs(normalizer.std - expected) / expected < 0.1


def test_return_restarts_at_episode_end():
    normalizer = RewardNormalizer(0.5)
    normalizer.update(1.0)
    normalizer.update(1.0, done=True)
    assert normalizer.ret == 0.0
    normalizer.update(2.0)
    assert normalizer.ret == 2.0


def test_frozen_normalizer_keeps_statistics():
    normalizer = RewardNormalizer(0.9)
    for reward in (1.0, -1.0, 3.0):
        normalizer.update(reward)
    std = normalizer.std
    normalizer.freeze()
    normalizer.update(100.0)
    assert normalizer.std == std
    assert normalizer.scale(np.array([std])) == pytest.approx(1.0)
    normalizer.unfreeze()
    normalizer.update(100.0)
    assert normalizer.std != std
