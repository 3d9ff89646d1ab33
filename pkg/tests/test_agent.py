import math

import gymnasium
import numpy as np
import pandas as pd
import pytest
import torch

from xqc.agents import xqc_v0
from xqc.agents.xqc.config import TrainerConfig, discount_heuristic
from xqc.agents.xqc.training import train
from xqc.agents.xqc.xqc import XQCAgent
from xqc.environments import make
from xqc.utils.diffcore.tape import DIRECT
from xqc.utils.distcrit import categorical_target, ce_logit_gradient
from xqc.utils.exceptions import ConfigurationError, TrainingAborted
from xqc.utils.netlib import EVAL, critic_apply, is_projected, load_checkpoint
from xqc.utils.netlib.config import ArchitectureConfig
from xqc.utils.post_processing.run_io import (
    DIAG_COLUMNS,
    GROUP_NORM_COLUMNS,
    read_config,
)


@pytest.mark.parametrize(
    ("episode_length, action_repeat, expected"),
    [(1000, 2, 0.99), (20, 1, 0.95), (10000, 1, 0.995), (200, 1, 0.975)],
)
def test_discount_heuristic(episode_length, action_repeat, expected):
    assert discount_heuristic(episode_length, action_repeat) == pytest.approx(
        expected, abs=1e-12
    )


@pytest.mark.parametrize(
    "changes",
    [
        {"utd": 0},
        {"batch_size": 1},
        {"gamma": 1.0},
        {"critic_aggregation": "max"},
        {"init_temperature": 0.0},
        {"dtype": "float16"},
    ],
)
def test_bad_trainer_configs_are_rejected(changes):
    with pytest.raises(ConfigurationError):
        TrainerConfig(**changes)


def test_target_entropy_default():
    assert TrainerConfig().resolve_target_entropy(6) == -3.0
    assert TrainerConfig(target_entropy=-1.0).resolve_target_entropy(6) == -1


def make_agent(architecture, **changes):
    config = TrainerConfig(batch_size=16, **changes)
    return xqc_v0.agent(
        obs_dim=3,
        act_dim=1,
        architecture=architecture,
        config=config,
        gamma=0.9,
        seed=0,
    )


def random_batch(seed=0, size=16):
    rng = np.random.default_rng(seed)
    return {
        "obs": rng.normal(size=(size, 3)),
        "action": rng.uniform(-1, 1, size=(size, 1)),
        "reward": rng.normal(size=size),
        "next_obs": rng.normal(size=(size, 3)),
        "done": (rng.uniform(size=size) < 0.1).astype(np.float64),
    }


def test_targets_start_equal_to_online_critics(small_architecture):
    agent = make_agent(small_architecture)
    assert isinstance(agent, XQCAgent)
    assert torch.equal(agent.target_params.values, agent.critic_params.values)


def test_critic_update_keeps_projected_norms(small_architecture):
    agent = make_agent(small_architecture)
    assert is_projected(agent.critic_params, tolerance=1e-10)
    for seed in range(3):
        diagnostics = agent.critic_update(random_batch(seed))
        assert math.isfinite(diagnostics["critic_loss"])
        assert is_projected(agent.critic_params, tolerance=1e-10)
    assert agent.num_critic_updates == 3


def test_projected_norms_hold_over_many_updates(small_architecture):
    agent = make_agent(small_architecture)
    for seed in range(1000):
        agent.critic_update(random_batch(seed))
        assert is_projected(agent.critic_params, tolerance=1e-10), seed


def test_targets_contract_towards_frozen_critics(small_architecture):
    agent = make_agent(small_architecture)
    tau = agent.config.target_momentum
    with torch.no_grad():
        agent.target_params.values.add_(1.0)
    online = agent.critic_params.values.detach().clone()
    gap = torch.linalg.vector_norm(agent.target_params.values - online)
    for step in range(1, 21):
        agent._update_targets()
        current = torch.linalg.vector_norm(agent.target_params.values - online)
        assert float(current) == pytest.approx(
            (1 - tau) ** step * float(gap), rel=1e-10
        )


def test_zero_discount_gradient_is_softmax_minus_target(
    small_architecture,
):
    architecture = small_architecture.replace(
        norm="none", weight_projection=False
    )
    agent = XQCAgent(
        3,
        1,
        architecture=architecture,
        config=TrainerConfig(batch_size=16),
        gamma=0.0,
        seed=0,
    )
    batch = random_batch()
    tensors = {key: torch.as_tensor(value) for key, value in batch.items()}
    sa = torch.cat([tensors["obs"], tensors["action"]], dim=-1)
    with torch.no_grad():
        logits = critic_apply(
            agent.critic, agent.critic_params.clone().unpack(), sa, EVAL
        )[0]
        target = categorical_target(
            torch.full_like(logits, 1 / logits.shape[-1]),
            tensors["reward"],
            tensors["done"],
            0.0,
            agent.support,
        )
    agent.critic_update(batch)
    torch.testing.assert_close(
        agent.last_critic_grad["critic0/head.bias"],
        ce_logit_gradient(logits, target).mean(dim=0),
        rtol=1e-9,
        atol=1e-12,
    )


def test_zero_learning_rate_leaves_critic_unchanged(small_architecture):
    architecture = small_architecture.replace(
        norm="none", weight_projection=False, critic_loss="mse"
    )
    agent = make_agent(architecture, critic_lr=0.0)
    before = agent.critic_params.values.detach().clone()
    agent.critic_update(random_batch())
    assert torch.equal(agent.critic_params.values.detach(), before)


def test_non_finite_loss_aborts(small_architecture):
    agent = make_agent(small_architecture)
    batch = random_batch()
    batch["reward"][0] = np.nan
    with pytest.raises(TrainingAborted) as error:
        agent.critic_update(batch)
    assert error.value.snapshot.step == 0


def test_temperature_falls_when_entropy_exceeds_target(small_architecture):
    agent = make_agent(small_architecture, target_entropy=-100.0)
    before = agent.temperature
    diagnostics = agent.actor_and_temperature_update(random_batch())
    assert diagnostics["entropy"] > -100.0
    assert agent.temperature < before


def test_update_respects_utd_and_policy_delay(small_architecture):
    agent = make_agent(small_architecture, utd=3, policy_delay=3)
    seeds = iter(range(100))
    diagnostics = agent.update(lambda: random_batch(next(seeds)))
    assert agent.num_critic_updates == 3
    assert "actor_loss" in diagnostics
    assert next(seeds) == 4


def test_tanh_log_prob_matches_change_of_variables():
    mean = torch.tensor([[0.3]], dtype=torch.float64)
    log_std = torch.tensor([[-0.5]], dtype=torch.float64)
    std = math.exp(-0.5)
    for noise in (-2.0, -0.3, 0.0, 1.1, 2.5):
        eps = torch.tensor([[noise]], dtype=torch.float64)
        _, log_prob = DIRECT.squashed_gaussian_log_prob(mean, log_std, eps)
        u = 0.3 + std * noise
        h = 1e-6
        jacobian = (math.tanh(u + h) - math.tanh(u - h)) / (2 * h)
        gaussian = -0.5 * noise**2 - math.log(std * math.sqrt(2 * math.pi))
        assert abs(float(log_prob) - (gaussian - math.log(jacobian))) < 1e-6


def test_actions_are_bounded(small_architecture):
    agent = make_agent(small_architecture)
    for obs in np.random.default_rng(0).normal(size=(20, 3)) * 10:
        action = agent.act(obs)
        assert action.shape == (1,)
        assert np.all(np.abs(action) <= 1.0)
    obs = np.ones(3)
    assert np.array_equal(
        agent.act(obs, deterministic=True), agent.act(obs, deterministic=True)
    )


def test_snapshot_is_a_copy(small_architecture):
    agent = make_agent(small_architecture)
    agent.critic_update(random_batch())
    snapshot = agent.snapshot(step=7)
    values = snapshot.critic_params.values.clone()
    agent.critic_update(random_batch(1))
    assert snapshot.step == 7
    assert torch.equal(snapshot.critic_params.values, values)
    assert snapshot.last_critic_grad is not None


def test_zero_steps_returns_initial_checkpoint(small_architecture):
    env = make("pendulum")
    artifacts = train(env, architecture=small_architecture, total_steps=0)
    assert list(artifacts.checkpoints) == [0]
    assert artifacts.returns == []
    assert artifacts.evals == []
    assert artifacts.gamma == 0.975


def test_train_writes_run_directory(
    tmp_path, small_architecture, small_trainer
):
    env = make("pendulum", max_episode_steps=20)
    artifacts = train(
        env,
        config=small_trainer,
        architecture=small_architecture,
        total_steps=40,
        seed=0,
        probe_schedule=(0, 40),
        out_dir=tmp_path,
    )
    assert len(artifacts.returns) == 2
    assert [row["step"] for row in artifacts.evals] == [0, 20, 40]
    assert [row["step"] for row in artifacts.diagnostics] == [20, 30, 40]
    assert sorted(artifacts.spectra) == [0, 40]

    for name in (
        "config.txt",
        "returns.csv",
        "diag.csv",
        "group_norms.csv",
        "conditioning.csv",
        "evals.csv",
        "spectrum_0.csv",
        "spectrum_40.csv",
        "ckpt_0.xqc",
        "ckpt_20.xqc",
        "ckpt_40.xqc",
    ):
        assert (tmp_path / name).exists(), name
    config = read_config(tmp_path / "config.txt")
    assert float(config["gamma"]) == 0.95
    assert config["arch.hidden_dim"] == "16"
    conditioning = pd.read_csv(tmp_path / "conditioning.csv")
    assert list(conditioning["step"]) == [0, 40]
    assert (conditioning["kappa"] >= 1).all()
    spectrum = pd.read_csv(tmp_path / "spectrum_40.csv")
    assert spectrum["ritz_weight"].sum() == pytest.approx(1.0)
    diag = pd.read_csv(tmp_path / "diag.csv")
    assert list(diag.columns) == DIAG_COLUMNS
    assert np.allclose(diag["projected_norm"], np.sqrt(2.0), atol=1e-9)
    norms = pd.read_csv(tmp_path / "group_norms.csv")
    assert list(norms.columns) == GROUP_NORM_COLUMNS
    assert set(norms["group"]) == {
        "critic0/dense0.weight",
        "critic1/dense0.weight",
    }
    assert np.allclose(norms["norm"], 1.0, atol=1e-9)
    checkpoint = load_checkpoint(tmp_path / "ckpt_40.xqc", small_architecture)
    assert checkpoint["step"] == 40


def test_training_is_deterministic(small_architecture, small_trainer):
    runs = []
    for _ in range(2):
        env = make("double_integrator", max_episode_steps=15)
        runs.append(
            train(
                env,
                config=small_trainer,
                architecture=small_architecture,
                total_steps=30,
                seed=3,
            )
        )
    assert runs[0].returns == runs[1].returns
    assert torch.equal(
        runs[0].agent.critic_params.values, runs[1].agent.critic_params.values
    )


class NanObservation(gymnasium.ObservationWrapper):
    def observation(self, observation):
        return np.full_like(observation, np.nan)


def test_non_finite_observation_aborts(small_architecture, small_trainer):
    env = NanObservation(make("pendulum"))
    with pytest.raises(TrainingAborted):
        train(
            env,
            config=small_trainer,
            architecture=small_architecture,
            total_steps=5,
        )


def test_mse_cells_train(small_trainer):
    architecture = ArchitectureConfig.from_cell(
        "ln,nown,mse",
        hidden_dim=16,
        num_blocks=1,
        actor_hidden_dim=16,
        actor_num_blocks=1,
    )
    env = make("reacher2", max_episode_steps=10)
    artifacts = train(
        env,
        config=small_trainer.replace(eval_interval=0),
        architecture=architecture,
        total_steps=20,
    )
    assert len(artifacts.returns) == 2
    assert artifacts.evals == []
