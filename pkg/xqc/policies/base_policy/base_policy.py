from gymnasium.utils import seeding


class BasePolicy:
    """Base class for policies acting on a single control task.

    Attributes:
        env (gymnasium.Env): Environment used by policy.
        np_random (np.random.Generator): Generator for stochastic policies.
    """

    def __init__(self, env, seed=None):
        """Initialize policy from environment.

        Args:
            env (gymnasium.Env): Environment on which to base policy.
            seed (int, optional): Seed of `np_random`. Defaults to None.
        """
        self.env = env
        self.np_random, _ = seeding.np_random(seed)

    def action(self, observation):
        """Retrieve action based on observation.

        Args:
            observation (np.ndarray): Current observation.

        Returns:
            np.ndarray: Action in [-1, 1]^act_dim.
        """
        raise NotImplementedError

    def rollout(self, seed=None):
        """Runs one episode of `env` and returns its undiscounted return."""
        observation, _ = self.env.reset(seed=seed)
        total = 0.0
        terminated = truncated = False
        while not (terminated or truncated):
            observation, reward, terminated, truncated, _ = self.env.step(
                self.action(observation)
            )
            total += reward
        return total
