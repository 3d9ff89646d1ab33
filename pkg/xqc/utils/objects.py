from dataclasses import dataclass

import numpy as np
from gymnasium.utils import seeding

REWARD_EPS = 1e-8


@dataclass(frozen=True)
class Transition:
    """One environment transition.

    Attributes:
        obs (np.ndarray): Observation s.
        action (np.ndarray): Action a in [-1, 1]^act_dim.
        reward (float): Raw, unnormalized reward.
        next_obs (np.ndarray): Observation s'.
        done (bool): True termination. Time-limit truncations are not done.
    """

    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool

    def __post_init__(self):
        assert np.all(np.isfinite(self.obs)), "Observation must be finite."
        assert np.all(
            np.isfinite(self.next_obs)
        ), "Observation must be finite."
        assert np.isfinite(self.reward), "Reward must be finite."
        assert np.all(np.abs(self.action) <= 1.0), "Action out of [-1, 1]."


class ReplayBuffer:
    """Ring buffer of transitions with a seeded uniform sampler.

    Attributes:
        capacity (int): Maximum number of stored transitions.
        size (int): Number of filled slots.
    """

    def __init__(self, obs_dim, act_dim, capacity=1_000_000, seed=None):
        """Initialize an empty buffer.

        Args:
            obs_dim (int): Observation dimension.
            act_dim (int): Action dimension.
            capacity (int, optional): Maximum number of transitions.
                Defaults to 1_000_000.
            seed (int, optional): Seed of the sampler. Defaults to None.
        """
        assert capacity >= 1, "Capacity must be positive."
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float64)
        self.action = np.zeros((capacity, act_dim), dtype=np.float64)
        self.reward = np.zeros(capacity, dtype=np.float64)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float64)
        self.done = np.zeros(capacity, dtype=np.float64)
        self.size = 0
        self._next = 0
        self.np_random, _ = seeding.np_random(seed)

    def __len__(self):
        return self.size

    def add(self, transition):
        """Stores a transition, overwriting the oldest one when full."""
        i = self._next
        self.obs[i] = transition.obs
        self.action[i] = transition.action
        self.reward[i] = transition.reward
        self.next_obs[i] = transition.next_obs
        self.done[i] = float(transition.done)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch_size):
        assert self.size > 0, "Cannot sample from an empty buffer."
        return self.np_random.integers(0, self.size, size=batch_size)

    def sample(self, batch_size):
        """Samples transitions uniformly with replacement.

        Args:
            batch_size (int): Number of transitions.

        Returns:
            dict: Arrays `obs`, `action`, `reward`, `next_obs`, `done`.
        """
        indices = self.sample_indices(batch_size)
        return {
            "obs": self.obs[indices],
            "action": self.action[indices],
            "reward": self.reward[indices],
            "next_obs": self.next_obs[indices],
            "done": self.done[indices],
        }


class RewardNormalizer:
    """Scales rewards by the running standard deviation of the return.

    Tracks the discounted return `R_t = r_t + gamma R_{t-1}` and its running
    variance with Welford's algorithm. `R_t` restarts at episode boundaries.

    Attributes:
        gamma (float): Discount of the tracked return.
        eps (float): Lower bound of the standard deviation.
        frozen (bool): If set, `update` leaves the statistics unchanged.
    """

    def __init__(self, gamma, eps=REWARD_EPS):
        self.gamma = gamma
        self.eps = eps
        self.frozen = False
        self.ret = 0.0
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    @property
    def std(self):
        if self.count == 0:
            return self.eps
        return max(float(np.sqrt(self.m2 / self.count)), self.eps)

    def update(self, reward, done=False):
        """Advances the return accumulator with a raw reward.

        Args:
            reward (float): Raw reward.
            done (bool, optional): Episode ended (terminated or truncated)
                after this reward. Defaults to False.
        """
        if self.frozen:
            return
        self.ret = reward + self.gamma * self.ret
        self.count += 1
        delta = self.ret - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (self.ret - self.mean)
        if done:
            self.ret = 0.0

    def scale(self, rewards):
        """Divides rewards by the current standard deviation."""
        return rewards / self.std

    def freeze(self):
        self.frozen = True

    def unfreeze(self):
        self.frozen = False


def normalize_reward(normalizer, reward, done=False):
    """Advances the normalizer with `reward` and returns `reward / std(R)`."""
    normalizer.update(reward, done)
    return reward / normalizer.std
