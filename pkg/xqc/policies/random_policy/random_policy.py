from xqc.policies.base_policy.base_policy import BasePolicy


def policy(**kwargs):
    """Creates a RandomPolicy for a given environment.

    Returns:
        BasePolicy: Random policy.
    """
    return RandomPolicy(**kwargs)


class RandomPolicy(BasePolicy):
    """Policy that returns uniformly random actions in [-1, 1]^act_dim.

    Compatible with all environments.

    Attributes:
        env (gymnasium.Env): Environment used by policy.
        np_random (np.random.Generator): Seeded generator.
    """

    def action(self, observation):
        return self.np_random.uniform(
            -1.0, 1.0, size=self.env.action_space.shape
        )
