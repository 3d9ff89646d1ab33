from dataclasses import asdict, dataclass, replace

import numpy as np

from xqc.utils.distcrit.losses import AGGREGATIONS, MEAN_MIN
from xqc.utils.exceptions import ConfigurationError

DTYPES = ("float64", "float32")


def discount_heuristic(episode_length, action_repeat=1):
    """Discount from the effective episode length.

    With `T = episode_length / action_repeat`, returns
    `clip(((T / 5) - 1) / (T / 5), 0.95, 0.995)`.

    Args:
        episode_length (int): Episode length in environment steps.
        action_repeat (int, optional): Action repeat. Defaults to 1.

    Returns:
        float: Discount factor.
    """
    assert episode_length >= 1, "episode_length must be >= 1."
    assert action_repeat >= 1, "action_repeat must be >= 1."
    horizon = episode_length / action_repeat / 5
    return float(np.clip((horizon - 1) / horizon, 0.95, 0.995))


@dataclass(frozen=True)
class TrainerConfig:
    """Hyperparameters of the training loop.

    Attributes:
        critic_lr (float): Critic learning rate.
        actor_lr (float): Actor learning rate.
        temp_lr (float): Temperature learning rate.
        batch_size (int): Minibatch size.
        utd (int): Critic updates per environment step.
        policy_delay (int): Critic updates per actor update.
        target_momentum (float): Polyak factor of the target networks.
        init_temperature (float): Initial entropy temperature.
        target_entropy (float, optional): Defaults to `-act_dim / 2`.
        lr_schedule (bool): Linearly decay actor and critic learning rates
            to `lr_final_fraction` over the run when weight projection is on.
        lr_final_fraction (float): Final learning rate fraction.
        adam_betas (tuple): Adam moment coefficients.
        adam_eps (float): Adam epsilon.
        buffer_capacity (int): Replay capacity.
        warmup_steps (int): Uniform-random steps before learning.
        gamma (float, optional): Discount. Defaults to the heuristic.
        action_repeat (int): Action repeat used by the heuristic.
        use_target_network (bool): Bootstrap from polyak-averaged target
            critics (False gives the pure CrossQ target from the online pass).
        critic_aggregation (str): `mean_min` or `mixture`.
        eval_interval (int): Steps between evaluation rollouts (0 disables).
        eval_episodes (int): Episodes per evaluation.
        checkpoint_interval (int): Steps between checkpoints (0 disables).
        diag_interval (int): Steps between plasticity records (0 disables).
        probe_batch_size (int): Size of the Hessian probe batch.
        lanczos_steps (int): Lanczos iterations per probe.
        lanczos_probes (int): Number of Lanczos probes.
        floor_ratio (float): Relative floor of the smallest eigenvalue.
        dtype (str): `float64` or `float32` parameters.
    """

    critic_lr: float = 3e-4
    actor_lr: float = 3e-4
    temp_lr: float = 3e-4
    batch_size: int = 256
    utd: int = 2
    policy_delay: int = 3
    target_momentum: float = 0.005
    init_temperature: float = 0.01
    target_entropy: float = None
    lr_schedule: bool = True
    lr_final_fraction: float = 0.1
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    buffer_capacity: int = 1_000_000
    warmup_steps: int = 1000
    gamma: float = None
    action_repeat: int = 1
    use_target_network: bool = True
    critic_aggregation: str = MEAN_MIN
    eval_interval: int = 5000
    eval_episodes: int = 5
    checkpoint_interval: int = 10000
    diag_interval: int = 1000
    probe_batch_size: int = 256
    lanczos_steps: int = 64
    lanczos_probes: int = 8
    floor_ratio: float = 1e-8
    dtype: str = "float64"

    def __post_init__(self):
        for name in ("critic_lr", "actor_lr", "temp_lr"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0.")
        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be >= 2.")
        if not isinstance(self.utd, int) or self.utd < 1:
            raise ConfigurationError("utd must be an integer >= 1.")
        if self.policy_delay < 1:
            raise ConfigurationError("policy_delay must be >= 1.")
        if not 0 < self.target_momentum <= 1:
            raise ConfigurationError("target_momentum must lie in (0, 1].")
        if self.init_temperature <= 0:
            raise ConfigurationError("init_temperature must be positive.")
        if not 0 < self.lr_final_fraction <= 1:
            raise ConfigurationError("lr_final_fraction must lie in (0, 1].")
        if self.gamma is not None and not 0 <= self.gamma < 1:
            raise ConfigurationError("gamma must lie in [0, 1).")
        if self.critic_aggregation not in AGGREGATIONS:
            raise ConfigurationError(
                f"Unknown critic aggregation {self.critic_aggregation!r}."
            )
        if self.dtype not in DTYPES:
            raise ConfigurationError(f"Unknown dtype {self.dtype!r}.")
        if self.buffer_capacity < 1 or self.warmup_steps < 0:
            raise ConfigurationError("Invalid replay settings.")
        if self.lanczos_steps < 2 or self.lanczos_probes < 1:
            raise ConfigurationError("Lanczos needs m >= 2 and k >= 1.")
        if self.probe_batch_size < 1:
            raise ConfigurationError("probe_batch_size must be >= 1.")

    def resolve_target_entropy(self, act_dim):
        if self.target_entropy is not None:
            return self.target_entropy
        return -act_dim / 2

    def resolve_gamma(self, episode_length):
        if self.gamma is not None:
            return self.gamma
        return discount_heuristic(episode_length, self.action_repeat)

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)
