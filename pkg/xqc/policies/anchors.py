from functools import lru_cache

import gymnasium
import numpy as np

from xqc.environments import make
from xqc.policies import random_policy_v0, scripted_policy_v0

ANCHOR_EPISODES = 10
ANCHOR_SEED = 12345


def mean_return(
    task, policy_module, episodes=ANCHOR_EPISODES, seed=ANCHOR_SEED
):
    env = make(task)
    policy = policy_module.policy(env=env, seed=seed)
    returns = [policy.rollout(seed + i) for i in range(episodes)]
    env.close()
    return float(np.mean(returns))


@lru_cache(maxsize=None)
def anchors(task):
    """Random-policy and reference-policy mean returns of a task.

    Both are measured by deterministic simulation over a fixed set of
    seeds, so they are reproducible and computed once per process.

    Args:
        task (str): Task id.

    Returns:
        tuple(float, float): `(random_return, reference_return)`.
    """
    random_return = mean_return(task, random_policy_v0)
    reference_return = mean_return(task, scripted_policy_v0)
    gymnasium.logger.info(
        f"Anchors for {task}: random {random_return:.3f}, "
        f"reference {reference_return:.3f}."
    )
    return random_return, reference_return


def normalized_score(task, value):
    """Maps a return to `(x - random) / (reference - random)`.

    Args:
        task (str): Task id.
        value (float or np.ndarray): Raw return(s).

    Returns:
        float or np.ndarray: Normalized return(s).
    """
    random_return, reference_return = anchors(task)
    return (np.asarray(value, dtype=np.float64) - random_return) / (
        reference_return - random_return
    )
