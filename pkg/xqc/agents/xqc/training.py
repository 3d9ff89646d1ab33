import copy
from dataclasses import dataclass, field
from pathlib import Path

import gymnasium
import numpy as np
from gymnasium.utils import seeding
from tqdm import tqdm

from xqc.agents.xqc.config import TrainerConfig
from xqc.agents.xqc.xqc import XQCAgent
from xqc.policies import random_policy_v0
from xqc.policies.anchors import normalized_score
from xqc.utils.diffcore.params import ParamVector
from xqc.utils.exceptions import DegenerateSpectrumError, TrainingAborted
from xqc.utils.metrics.plasticity import plasticity_probe
from xqc.utils.metrics.spectra import (
    conditioning_summary,
    critic_hessian_oracle,
    lanczos_spectrum,
)
from xqc.utils.netlib.checkpoint import save_checkpoint
from xqc.utils.netlib.config import ArchitectureConfig
from xqc.utils.objects import ReplayBuffer, RewardNormalizer, Transition
from xqc.utils.post_processing.run_io import dataclass_to_config, write_run

PROBE_SEED_OFFSET = 10_000
EVAL_SEED_OFFSET = 20_000


@dataclass
class RunArtifacts:
    """Everything a training run produces.

    Attributes:
        returns (list): `(step, episode_return)` per finished episode.
        diagnostics (list[dict]): Rows of `diag.csv`.
        group_norms (list[dict]): Rows of `group_norms.csv`.
        conditioning (list[dict]): Rows of `conditioning.csv`.
        spectra (dict): SpectrumEstimate per probe step.
        evals (list[dict]): Rows of `evals.csv`.
        checkpoints (dict): AgentSnapshot per checkpoint step.
        agent (XQCAgent): Trained agent.
        gamma (float): Discount used.
        out_dir (Path or None): Run directory if one was written.
    """

    returns: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    group_norms: list = field(default_factory=list)
    conditioning: list = field(default_factory=list)
    spectra: dict = field(default_factory=dict)
    evals: list = field(default_factory=list)
    checkpoints: dict = field(default_factory=dict)
    agent: object = None
    gamma: float = None
    out_dir: object = None


def obs_dim(env):
    return env.observation_space.shape[0]


def act_dim(env):
    return env.action_space.shape[0]


def task_name(env):
    return env.unwrapped.metadata.get("name")


def collect_probe_batch(env, size, seed):
    """Transitions of a uniform-random rollout on a separately seeded env.

    Args:
        env (gymnasium.Env): Environment to copy.
        size (int): Number of transitions.
        seed (int): Seed of the copy and its actions.

    Returns:
        dict: Arrays `obs`, `action`, `reward` (raw), `next_obs`, `done`.
    """
    probe_env = copy.deepcopy(env)
    policy = random_policy_v0.policy(env=probe_env, seed=seed)
    buffer = ReplayBuffer(obs_dim(env), act_dim(env), capacity=size)
    obs, _ = probe_env.reset(seed=seed)
    episode = 0
    while len(buffer) < size:
        action = policy.action(obs)
        next_obs, reward, terminated, truncated, _ = probe_env.step(action)
        buffer.add(Transition(obs, action, reward, next_obs, terminated))
        obs = next_obs
        if terminated or truncated:
            episode += 1
            obs, _ = probe_env.reset(seed=seed + episode)
    probe_env.close()
    return {
        "obs": buffer.obs.copy(),
        "action": buffer.action.copy(),
        "reward": buffer.reward.copy(),
        "next_obs": buffer.next_obs.copy(),
        "done": buffer.done.copy(),
    }


def reward_scale(normalizer):
    # Before two returns have been seen the variance carries no signal.
    return normalizer.std if normalizer.count > 1 else 1.0


def evaluate(agent, env, episodes, seed):
    """Mean return of the deterministic policy over fresh episodes."""
    eval_env = copy.deepcopy(env)
    returns = []
    for episode in range(episodes):
        obs, _ = eval_env.reset(seed=seed + episode)
        total = 0.0
        terminated = truncated = False
        while not (terminated or truncated):
            action = agent.act(obs, deterministic=True)
            obs, reward, terminated, truncated, _ = eval_env.step(action)
            total += reward
        returns.append(total)
    eval_env.close()
    return float(np.mean(returns))


class _Trainer:
    def __init__(
        self,
        env,
        config,
        architecture,
        total_steps,
        seed,
        probe_schedule,
        out_dir,
        workers,
        progress,
    ):
        self.env = env
        self.config = config
        self.architecture = architecture
        self.total_steps = total_steps
        self.seed = seed
        self.probe_schedule = sorted(set(probe_schedule))
        assert all(0 <= s <= total_steps for s in self.probe_schedule), (
            "Probe steps must lie in [0, total_steps]."
        )
        self.out_dir = None if out_dir is None else Path(out_dir)
        self.workers = workers
        self.progress = progress
        self.task = task_name(env)

        self.gamma = config.resolve_gamma(env.unwrapped.max_episode_steps)
        self.agent = XQCAgent(
            obs_dim=obs_dim(env),
            act_dim=act_dim(env),
            architecture=architecture,
            config=config,
            gamma=self.gamma,
            seed=seed,
            total_steps=total_steps,
        )
        self.buffer = ReplayBuffer(
            obs_dim(env), act_dim(env), config.buffer_capacity, seed=seed
        )
        self.normalizer = RewardNormalizer(self.gamma)
        self.np_random, _ = seeding.np_random(seed)
        self.artifacts = RunArtifacts(agent=self.agent, gamma=self.gamma)
        self.probe_batch = None
        if self.probe_schedule:
            self.probe_batch = collect_probe_batch(
                env, config.probe_batch_size, seed + PROBE_SEED_OFFSET
            )

    def sample_batch(self):
        batch = self.buffer.sample(self.config.batch_size)
        batch["reward"] = batch["reward"] / reward_scale(self.normalizer)
        return batch

    def checkpoint(self, step):
        snapshot = self.agent.snapshot(step)
        self.artifacts.checkpoints[step] = snapshot
        if self.out_dir is not None:
            save_checkpoint(
                self.out_dir / f"ckpt_{step}.xqc",
                self.architecture,
                ParamVector.concat(
                    snapshot.critic_params, snapshot.actor_params
                ),
                [snapshot.critic_state, snapshot.actor_state],
                step=step,
            )

    def diagnose(self, step, loss):
        snapshot = self.agent.snapshot(step)
        if snapshot.last_critic_grad is None:
            return
        record = plasticity_probe(snapshot)
        row = {
            "step": step,
            "param_norm": record.param_norm,
            "grad_norm": record.grad_norm,
            "elr": record.elr,
            "temperature": snapshot.temperature,
            "loss": loss,
            "effective_update": record.effective_update,
            "projected_norm": record.projected_norm,
            "learning_rate": record.learning_rate,
        }
        self.artifacts.diagnostics.append(row)
        self.artifacts.group_norms.extend(
            {"step": step, "group": key, "norm": norm}
            for key, norm in record.group_norms.items()
        )

    def probe(self, step):
        snapshot = self.agent.snapshot(step)
        batch = dict(self.probe_batch)
        batch["reward"] = batch["reward"] / reward_scale(self.normalizer)
        oracle = critic_hessian_oracle(self.agent, snapshot, batch)
        estimate = lanczos_spectrum(
            oracle,
            m=min(self.config.lanczos_steps, oracle.dim),
            k=self.config.lanczos_probes,
            seed=self.seed + step,
            workers=self.workers,
        )
        self.artifacts.spectra[step] = estimate
        row = {"step": step}
        try:
            summary = conditioning_summary(estimate, self.config.floor_ratio)
            row.update(
                kappa=summary.kappa,
                lambda_max=summary.lambda_max,
                lambda_min_abs=summary.lambda_min_abs,
                kurtosis=summary.kurtosis,
                floor=summary.floor,
            )
        except DegenerateSpectrumError as error:
            gymnasium.logger.warn(f"Step {step}: {error}")
        self.artifacts.conditioning.append(row)

    def evaluate(self, step):
        value = evaluate(
            self.agent,
            self.env,
            self.config.eval_episodes,
            self.seed + EVAL_SEED_OFFSET,
        )
        normalized = float("nan")
        if self.task is not None:
            normalized = float(normalized_score(self.task, value))
        self.artifacts.evals.append(
            {
                "step": step,
                "eval_return": value,
                "normalized_return": normalized,
            }
        )

    def run(self):
        config = self.config
        self.checkpoint(0)
        if 0 in self.probe_schedule:
            self.probe(0)
        if config.eval_interval and self.total_steps > 0:
            self.evaluate(0)

        obs, _ = self.env.reset(seed=self.seed)
        episode_return = 0.0
        episode = 0
        loss = float("nan")
        for step in tqdm(
            range(1, self.total_steps + 1),
            desc=f"train {self.architecture.cell}",
            disable=not self.progress,
        ):
            if step <= config.warmup_steps:
                action = self.np_random.uniform(-1.0, 1.0, act_dim(self.env))
            else:
                action = self.agent.act(obs)
            next_obs, reward, terminated, truncated, _ = self.env.step(action)
            if not np.all(np.isfinite(next_obs)):
                raise TrainingAborted(
                    f"Non-finite observation at step {step}.",
                    snapshot=self.agent.snapshot(step),
                )
            self.buffer.add(
                Transition(obs, action, reward, next_obs, terminated)
            )
            self.normalizer.update(reward, terminated or truncated)
            episode_return += reward
            obs = next_obs
            if terminated or truncated:
                self.artifacts.returns.append((step, episode_return))
                episode += 1
                episode_return = 0.0
                obs, _ = self.env.reset(seed=self.seed + episode)

            if step > config.warmup_steps and len(self.buffer) >= 2:
                diagnostics = self.agent.update(self.sample_batch)
                loss = diagnostics["critic_loss"]
                self.agent.set_progress(step)

            if config.diag_interval and step % config.diag_interval == 0:
                self.diagnose(step, loss)
            if step in self.probe_schedule:
                self.probe(step)
            if config.eval_interval and step % config.eval_interval == 0:
                self.evaluate(step)
            if (
                config.checkpoint_interval
                and step % config.checkpoint_interval == 0
            ):
                self.checkpoint(step)

        if self.out_dir is not None:
            self.artifacts.out_dir = self.out_dir
            write_run(self.out_dir, self.artifacts, self.config_values())
        return self.artifacts

    def config_values(self):
        values = {
            "task": self.task,
            "seed": self.seed,
            "total_steps": self.total_steps,
            "gamma": self.gamma,
            "probe_schedule": self.probe_schedule,
        }
        values.update(dataclass_to_config(self.architecture, "arch."))
        values.update(dataclass_to_config(self.config, "trainer."))
        return values


def train(
    env,
    config=None,
    architecture=None,
    total_steps=30_000,
    seed=0,
    probe_schedule=(),
    out_dir=None,
    workers=1,
    progress=False,
):
    """Trains an XQC agent on a toy task.

    Args:
        env (gymnasium.Env): Environment created with `xqc.environments.make`.
        config (TrainerConfig, optional): Defaults to TrainerConfig().
        architecture (ArchitectureConfig, optional): Defaults to full XQC.
        total_steps (int, optional): Environment steps. Defaults to 30_000.
        seed (int, optional): Seed of every random stream. Defaults to 0.
        probe_schedule (iterable, optional): Steps at which the critic
            Hessian spectrum is probed. Defaults to none.
        out_dir (str or Path, optional): Run directory to write CSVs,
            `config.txt` and checkpoints to. Defaults to None.
        workers (int, optional): Threads for concurrent Lanczos probes.
            Defaults to 1.
        progress (bool, optional): Show a tqdm progress bar. Defaults to
            False.

    Returns:
        RunArtifacts: Results of the run.
    """
    assert total_steps >= 0, "total_steps must be >= 0."
    trainer = _Trainer(
        env,
        config or TrainerConfig(),
        architecture or ArchitectureConfig(),
        total_steps,
        seed,
        probe_schedule,
        out_dir,
        workers,
        progress,
    )
    if trainer.out_dir is not None:
        trainer.out_dir.mkdir(parents=True, exist_ok=True)
    return trainer.run()
