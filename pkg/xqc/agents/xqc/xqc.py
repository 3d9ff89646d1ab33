import math
from dataclasses import dataclass

import gymnasium
import numpy as np
import torch

from xqc.agents.xqc.config import TrainerConfig
from xqc.utils.diffcore.tape import DIRECT
from xqc.utils.distcrit.categorical import CategoricalSupport, mean_value
from xqc.utils.distcrit.losses import (
    aggregate_targets,
    aggregate_values,
    categorical_target,
    ce_bellman_loss,
    mse_bellman_loss,
    scalar_target,
)
from xqc.utils.exceptions import TrainingAborted
from xqc.utils.netlib.config import CE, ArchitectureConfig
from xqc.utils.netlib.networks import (
    EVAL,
    TRAIN,
    actor_apply,
    build,
    critic_apply,
)
from xqc.utils.netlib.projection import project_weights_

_TORCH_DTYPES = {"float64": torch.float64, "float32": torch.float32}


def agent(**kwargs):
    """Creates an XQCAgent, see `XQCAgent.__init__` for arguments."""
    return XQCAgent(**kwargs)


@dataclass(frozen=True)
class AgentSnapshot:
    """Immutable copy of everything a diagnostic probe may read.

    Attributes:
        step (int): Environment step of the snapshot.
        critic_params (ParamVector): Online critic parameters.
        critic_state (NormState): Online critic running statistics.
        target_params (ParamVector): Target critic parameters.
        target_state (NormState): Target critic running statistics.
        actor_params (ParamVector): Actor parameters.
        actor_state (NormState): Actor running statistics.
        temperature (float): Entropy temperature alpha.
        critic_lr (float): Scheduled critic learning rate.
        last_critic_grad (ParamVector or None): Gradient of the last critic
            update.
        last_critic_loss (float or None): Loss of the last critic update.
    """

    step: int
    critic_params: object
    critic_state: object
    target_params: object
    target_state: object
    actor_params: object
    actor_state: object
    temperature: float
    critic_lr: float
    last_critic_grad: object = None
    last_critic_loss: float = None


def squashed_sample(mean, log_std, generator, deterministic=False):
    """Reparameterized tanh-Gaussian sample and its log-probability."""
    if deterministic:
        noise = torch.zeros_like(mean)
    else:
        noise = torch.randn(
            mean.shape, generator=generator, dtype=mean.dtype
        )
    return DIRECT.squashed_gaussian_log_prob(mean, log_std, noise)


class XQCAgent:
    """Soft actor-critic agent with normalized, weight-projected critics.

    Attributes:
        architecture (ArchitectureConfig): Network cell.
        config (TrainerConfig): Optimization hyperparameters.
        gamma (float): Discount.
        critic (CriticNetwork): Critic structure and running statistics.
        actor (ActorNetwork): Actor structure and running statistics.
        critic_params (ParamVector): Online critic parameters.
        target_params (ParamVector): Target critic parameters.
        target_state (NormState): Target critic running statistics.
        actor_params (ParamVector): Actor parameters.
        log_alpha (torch.Tensor): Log temperature.
        support (CategoricalSupport or None): Categorical support.
    """

    def __init__(
        self,
        obs_dim,
        act_dim,
        architecture=None,
        config=None,
        gamma=0.99,
        seed=0,
        total_steps=None,
    ):
        """Initialize networks, targets and optimizers.

        Args:
            obs_dim (int): Observation dimension.
            act_dim (int): Action dimension.
            architecture (ArchitectureConfig, optional): Defaults to full XQC.
            config (TrainerConfig, optional): Defaults to TrainerConfig().
            gamma (float, optional): Discount. Defaults to 0.99.
            seed (int, optional): Seed of initialization and sampling noise.
                Defaults to 0.
            total_steps (int, optional): Run length driving the learning
                rate schedule. Defaults to None (constant learning rate).
        """
        self.architecture = architecture or ArchitectureConfig()
        self.config = config or TrainerConfig()
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.gamma = gamma
        self.dtype = _TORCH_DTYPES[self.config.dtype]
        self.target_entropy = self.config.resolve_target_entropy(act_dim)

        self.critic, self.actor, theta = build(
            self.architecture, obs_dim, act_dim, seed, dtype=self.dtype
        )
        self.critic_params = theta.select("critic")
        self.actor_params = theta.select("actor")
        if self.architecture.weight_projection:
            project_weights_(self.critic_params, self.architecture.projection)
            project_weights_(self.actor_params, self.architecture.projection)
        self.target_params = self.critic_params.clone()
        self.target_state = self.critic.state.clone()
        self.critic_params.values.requires_grad_(True)
        self.actor_params.values.requires_grad_(True)
        self.log_alpha = torch.tensor(
            math.log(self.config.init_temperature),
            dtype=self.dtype,
            requires_grad=True,
        )

        self.support = None
        if self.architecture.critic_loss == CE:
            self.support = CategoricalSupport.from_config(
                self.architecture, dtype=self.dtype
            )

        adam = dict(betas=self.config.adam_betas, eps=self.config.adam_eps)
        self.critic_optimizer = torch.optim.Adam(
            [self.critic_params.values], lr=self.config.critic_lr, **adam
        )
        self.actor_optimizer = torch.optim.Adam(
            [self.actor_params.values], lr=self.config.actor_lr, **adam
        )
        self.temperature_optimizer = torch.optim.Adam(
            [self.log_alpha], lr=self.config.temp_lr, **adam
        )
        self.total_steps = total_steps
        self.progress = 0
        self.schedulers = []
        if (
            self.architecture.weight_projection
            and self.config.lr_schedule
            and total_steps
        ):
            self.schedulers = [
                torch.optim.lr_scheduler.LambdaLR(opt, self._lr_factor)
                for opt in (self.critic_optimizer, self.actor_optimizer)
            ]

        self.generator = torch.Generator().manual_seed(int(seed) + 1)
        self.num_critic_updates = 0
        self.last_critic_grad = None
        self.last_critic_loss = None

    def _lr_factor(self, _):
        fraction = min(self.progress / self.total_steps, 1.0)
        return 1.0 - (1.0 - self.config.lr_final_fraction) * fraction

    @property
    def temperature(self):
        return float(self.log_alpha.exp())

    @property
    def critic_lr(self):
        return self.critic_optimizer.param_groups[0]["lr"]

    def set_progress(self, step):
        """Advances the learning rate schedule to environment step `step`."""
        self.progress = step
        for scheduler in self.schedulers:
            scheduler.step()

    def _tensor(self, array):
        return torch.as_tensor(np.asarray(array), dtype=self.dtype)

    def _batch(self, batch):
        return {key: self._tensor(value) for key, value in batch.items()}

    def act(self, obs, deterministic=False):
        """Samples an action for a single observation (actor in eval mode).

        Args:
            obs (np.ndarray): Observation.
            deterministic (bool, optional): Return `tanh(mean)`. Defaults to
                False.

        Returns:
            np.ndarray: Action in [-1, 1]^act_dim.
        """
        with torch.no_grad():
            s = self._tensor(obs).reshape(1, -1)
            mean, log_std = actor_apply(
                self.actor, self.actor_params.unpack(), s, EVAL
            )
            action, _ = squashed_sample(
                mean, log_std, self.generator, deterministic
            )
        return action[0].numpy().astype(np.float64)

    def _next_action(self, next_obs):
        mean, log_std = actor_apply(
            self.actor, self.actor_params.unpack(), next_obs, EVAL
        )
        return squashed_sample(mean, log_std, self.generator)

    def _critic_values(self, outputs):
        """Scalar value per member from raw critic outputs."""
        if self.support is None:
            return outputs
        return mean_value(torch.softmax(outputs, dim=-1), self.support)

    def _targets(self, batch, next_sa, online_next, alpha, log_prob):
        if self.config.use_target_network:
            outputs = torch.stack(
                critic_apply(
                    self.critic,
                    self.target_params.unpack(),
                    next_sa,
                    EVAL,
                    state=self.target_state,
                )
            )
        else:
            outputs = online_next.detach()
        entropy_bonus = -alpha * log_prob
        if self.support is None:
            next_values = aggregate_values(
                outputs, self.config.critic_aggregation
            )
            return scalar_target(
                next_values,
                batch["reward"],
                batch["done"],
                self.gamma,
                entropy_bonus,
            )
        probs = aggregate_targets(
            torch.softmax(outputs, dim=-1),
            self.support,
            self.config.critic_aggregation,
        )
        return categorical_target(
            probs,
            batch["reward"],
            batch["done"],
            self.gamma,
            self.support,
            entropy_bonus,
        )

    def critic_update(self, batch):
        """One critic gradient step on a minibatch.

        Both halves `[(s, a); (s', a')]` go through each online critic in a
        single train-mode pass so the BN statistics mix both marginals; the
        loss only uses the `(s, a)` half.

        Args:
            batch (dict): Arrays `obs`, `action`, `reward` (normalized),
                `next_obs`, `done`.

        Returns:
            dict: `critic_loss`, `grad_norm`, `td_error`, `q_mean`.
        """
        batch = self._batch(batch)
        size = batch["obs"].shape[0]
        assert size >= 2, "Critic update needs a batch of at least 2."
        alpha = self.log_alpha.detach().exp()
        with torch.no_grad():
            next_action, log_prob = self._next_action(batch["next_obs"])
        sa = torch.cat([batch["obs"], batch["action"]], dim=-1)
        next_sa = torch.cat([batch["next_obs"], next_action], dim=-1)

        batch_stats = {}
        outputs = torch.stack(
            critic_apply(
                self.critic,
                self.critic_params.unpack(),
                torch.cat([sa, next_sa]),
                TRAIN,
                batch_stats=batch_stats,
            )
        )
        current, online_next = outputs[:, :size], outputs[:, size:]
        with torch.no_grad():
            target = self._targets(
                batch, next_sa, online_next, alpha, log_prob
            )

        if self.support is None:
            losses = [mse_bellman_loss(q, target) for q in current]
        else:
            losses = [ce_bellman_loss(logits, target) for logits in current]
        loss = torch.stack(losses).sum()
        if not torch.isfinite(loss):
            raise TrainingAborted(
                "Non-finite critic loss.", snapshot=self.snapshot()
            )

        self.critic_optimizer.zero_grad()
        loss.backward()
        grad = self.critic_params.values.grad.detach().clone()
        self.critic_optimizer.step()
        if self.architecture.weight_projection:
            project_weights_(self.critic_params, self.architecture.projection)
        self.critic.state.update(batch_stats, self.architecture.bn_momentum)
        self._update_targets()

        with torch.no_grad():
            values = self._critic_values(current.detach())
            if self.support is None:
                target_values = target
            else:
                target_values = mean_value(target, self.support)
            td_error = (values - target_values).abs().mean()
        self.num_critic_updates += 1
        self.last_critic_grad = self.critic_params.with_values(grad)
        self.last_critic_loss = float(loss)
        return {
            "critic_loss": float(loss),
            "grad_norm": float(torch.linalg.vector_norm(grad)),
            "td_error": float(td_error),
            "q_mean": float(values.mean()),
        }

    def _update_targets(self):
        tau = self.config.target_momentum
        with torch.no_grad():
            self.target_params.values.mul_(1 - tau).add_(
                tau * self.critic_params.values.detach()
            )
        self.target_state.polyak(self.critic.state, tau)

    def actor_and_temperature_update(self, batch):
        """One actor step and one temperature step.

        The critics run in eval mode and are not updated.

        Args:
            batch (dict): Arrays with at least `obs`.

        Returns:
            dict: `actor_loss`, `temperature_loss`, `temperature`, `entropy`.
        """
        batch = self._batch(batch)
        obs = batch["obs"]
        batch_stats = {}
        mean, log_std = actor_apply(
            self.actor,
            self.actor_params.unpack(),
            obs,
            TRAIN,
            batch_stats=batch_stats,
        )
        action, log_prob = squashed_sample(mean, log_std, self.generator)
        critic_params = self.critic_params.unpack(
            self.critic_params.values.detach()
        )
        outputs = torch.stack(
            critic_apply(
                self.critic,
                critic_params,
                torch.cat([obs, action], dim=-1),
                EVAL,
            )
        )
        q = self._critic_values(outputs).min(dim=0).values
        alpha = self.log_alpha.detach().exp()
        actor_loss = (alpha * log_prob - q).mean()
        if not torch.isfinite(actor_loss):
            raise TrainingAborted(
                "Non-finite actor loss.", snapshot=self.snapshot()
            )
        self.actor_optimizer.zero_grad()
        actor_loss.backward()
        self.actor_optimizer.step()
        if self.architecture.weight_projection:
            project_weights_(self.actor_params, self.architecture.projection)
        self.actor.state.update(batch_stats, self.architecture.bn_momentum)

        entropy = -log_prob.detach()
        temperature_loss = (
            self.log_alpha.exp() * (entropy - self.target_entropy)
        ).mean()
        self.temperature_optimizer.zero_grad()
        temperature_loss.backward()
        self.temperature_optimizer.step()
        return {
            "actor_loss": float(actor_loss),
            "temperature_loss": float(temperature_loss),
            "temperature": self.temperature,
            "entropy": float(entropy.mean()),
        }

    def update(self, sample_batch):
        """Runs `utd` critic updates and the delayed actor updates.

        Args:
            sample_batch (callable): Returns a fresh normalized minibatch.

        Returns:
            dict: Diagnostics of the last critic (and actor) update.
        """
        diagnostics = {}
        for _ in range(self.config.utd):
            diagnostics.update(self.critic_update(sample_batch()))
            if self.num_critic_updates % self.config.policy_delay == 0:
                diagnostics.update(
                    self.actor_and_temperature_update(sample_batch())
                )
        return diagnostics

    def snapshot(self, step=None):
        """Returns an immutable copy of parameters and statistics."""
        grad = self.last_critic_grad
        return AgentSnapshot(
            step=self.progress if step is None else step,
            critic_params=self.critic_params.clone(),
            critic_state=self.critic.state.clone(),
            target_params=self.target_params.clone(),
            target_state=self.target_state.clone(),
            actor_params=self.actor_params.clone(),
            actor_state=self.actor.state.clone(),
            temperature=self.temperature,
            critic_lr=self.critic_lr,
            last_critic_grad=None if grad is None else grad.clone(),
            last_critic_loss=self.last_critic_loss,
        )

    def log_status(self, step, diagnostics):
        gymnasium.logger.info(
            f"step {step}: "
            + ", ".join(f"{k}={v:.4g}" for k, v in sorted(diagnostics.items()))
        )
