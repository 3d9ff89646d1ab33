import math

import numpy as np
import pytest
import torch

from xqc.agents.xqc.config import TrainerConfig
from xqc.agents.xqc.xqc import XQCAgent
from xqc.experiments.verify import brute_force_projection
from xqc.utils.distcrit import (
    CategoricalSupport,
    CategoricalValueDistribution,
    aggregate_targets,
    aggregate_values,
    categorical_target,
    ce_bellman_loss,
    ce_logit_gradient,
    mean_value,
    mse_bellman_loss,
    project_target,
    scalar_target,
)
from xqc.utils.distcrit.certificates import (
    CE_GRADIENT_BOUND,
    ce_gradient_norms,
    certify_elr_bound,
    mse_gradient_norms,
)
from xqc.utils.distcrit.losses import MIXTURE
from xqc.utils.exceptions import ConfigurationError, PreconditionError
from xqc.utils.netlib.config import ArchitectureConfig


def random_probs(generator, *shape):
    raw = torch.rand(*shape, generator=generator, dtype=torch.float64) + 0.01
    return raw / raw.sum(dim=-1, keepdim=True)


def test_support_spacing():
    support = CategoricalSupport(-5.0, 5.0, 101)
    assert len(support) == 101
    assert support.delta == pytest.approx(0.1)
    assert abs(float(support.atoms[50])) <= 1e-12


@pytest.mark.parametrize(
    ("v_min, v_max, atoms"), [(0.0, 0.0, 11), (1.0, -1.0, 11), (-1, 1, 1)]
)
def test_bad_supports_are_rejected(v_min, v_max, atoms):
    with pytest.raises(ConfigurationError):
        CategoricalSupport(v_min, v_max, atoms)


def test_distribution_validation():
    with pytest.raises(ConfigurationError):
        CategoricalValueDistribution(torch.tensor([0.5, 0.6]).double())
    with pytest.raises(ConfigurationError):
        CategoricalValueDistribution(torch.tensor([1.5, -0.5]).double())


def test_mean_value():
    support = CategoricalSupport(-5.0, 5.0, 101)
    delta = CategoricalValueDistribution.delta_at(support, 0.0)
    assert abs(float(mean_value(delta, support))) <= 1e-12
    uniform = torch.full((101,), 1 / 101, dtype=torch.float64)
    assert abs(float(mean_value(uniform, support))) < 1e-12
    two = CategoricalSupport(-1.0, 1.0, 2)
    probs = torch.tensor([0.25, 0.75], dtype=torch.float64)
    assert float(mean_value(probs, two)) == 0.5


def test_projection_preserves_mass():
    generator = torch.Generator().manual_seed(0)
    support = CategoricalSupport(-5.0, 5.0, 51)
    probs = random_probs(generator, 64, 51)
    rewards = 4 * torch.randn(64, generator=generator, dtype=torch.float64)
    dones = (torch.rand(64, generator=generator) < 0.2).double()
    target = categorical_target(probs, rewards, dones, 0.99, support)
    assert (target >= 0).all()
    assert (target.sum(dim=-1) - 1).abs().max() <= 1e-12


def test_projection_matches_brute_force():
    generator = torch.Generator().manual_seed(1)
    support = CategoricalSupport(-5.0, 5.0, 11)
    for _ in range(100):
        probs = random_probs(generator, 11)
        shifted = 6 * torch.randn(11, generator=generator, dtype=torch.float64)
        fast = project_target(shifted, probs, support)
        slow = brute_force_projection(shifted, probs, support)
        assert (fast - slow).abs().max() <= 1e-12


def test_projection_keeps_the_mean_without_clamping():
    generator = torch.Generator().manual_seed(2)
    support = CategoricalSupport(-10.0, 10.0, 101)
    probs = random_probs(generator, 8, 101)
    rewards = torch.full((8,), 0.3, dtype=torch.float64)
    dones = torch.zeros(8, dtype=torch.float64)
    gamma = 0.5
    target = categorical_target(probs, rewards, dones, gamma, support)
    expected = rewards + gamma * mean_value(probs, support)
    assert (mean_value(target, support) - expected).abs().max() <= 1e-10


def test_projection_of_atom_on_support_point():
    support = CategoricalSupport(-1.0, 1.0, 3)
    shifted = torch.tensor([0.0], dtype=torch.float64)
    weights = torch.tensor([1.0], dtype=torch.float64)
    assert torch.equal(
        project_target(shifted, weights, support),
        torch.tensor([0.0, 1.0, 0.0], dtype=torch.float64),
    )


@pytest.mark.parametrize("reward", [0.0, 0.37, -2.0])
def test_zero_discount_collapses_to_reward(reward):
    generator = torch.Generator().manual_seed(3)
    support = CategoricalSupport(-5.0, 5.0, 101)
    probs = random_probs(generator, 4, 101)
    rewards = torch.full((4,), reward, dtype=torch.float64)
    target = categorical_target(
        probs, rewards, torch.zeros(4, dtype=torch.float64), 0.0, support
    )
    assert (mean_value(target, support) - reward).abs().max() <= 1e-12
    if reward == 0.0:
        delta = CategoricalValueDistribution.delta_at(support, 0.0).probs
        assert (target - delta).abs().max() <= 1e-12


def test_done_flags_stop_bootstrapping():
    generator = torch.Generator().manual_seed(4)
    support = CategoricalSupport(-5.0, 5.0, 101)
    probs = random_probs(generator, 2, 101)
    rewards = torch.tensor([1.0, 1.0], dtype=torch.float64)
    dones = torch.ones(2, dtype=torch.float64)
    bonus = torch.tensor([0.5, -0.5], dtype=torch.float64)
    target = categorical_target(probs, rewards, dones, 0.99, support, bonus)
    assert torch.allclose(mean_value(target, support), rewards)


def test_entropy_bonus_shifts_the_target():
    generator = torch.Generator().manual_seed(5)
    support = CategoricalSupport(-10.0, 10.0, 201)
    probs = random_probs(generator, 3, 201) * 0
    probs[:, 100] = 1.0
    rewards = torch.zeros(3, dtype=torch.float64)
    dones = torch.zeros(3, dtype=torch.float64)
    bonus = torch.tensor([0.0, 1.0, -1.0], dtype=torch.float64)
    target = categorical_target(probs, rewards, dones, 0.5, support, bonus)
    assert torch.allclose(
        mean_value(target, support),
        torch.tensor([0.0, 0.5, -0.5], dtype=torch.float64),
    )


def test_ce_loss_of_uniform_logits():
    logits = torch.zeros(1, 101, dtype=torch.float64)
    target = torch.full((1, 101), 1 / 101, dtype=torch.float64)
    assert float(ce_bellman_loss(logits, target)) == pytest.approx(
        math.log(101), abs=1e-12
    )


def test_ce_loss_is_shift_invariant():
    generator = torch.Generator().manual_seed(6)
    logits = torch.randn(16, 101, generator=generator, dtype=torch.float64)
    target = random_probs(generator, 16, 101)
    base = ce_bellman_loss(logits, target)
    shifted = ce_bellman_loss(logits + 123.0, target)
    assert abs(float(base - shifted)) <= 1e-10


def test_ce_loss_survives_large_logits():
    logits = torch.tensor([[1000.0, 0.0, -1000.0]], dtype=torch.float32)
    target = torch.tensor([[0.0, 1.0, 0.0]], dtype=torch.float32)
    assert math.isfinite(float(ce_bellman_loss(logits, target)))


def test_ce_loss_rejects_non_finite_logits():
    logits = torch.tensor([[math.nan, 0.0]], dtype=torch.float64)
    target = torch.tensor([[0.5, 0.5]], dtype=torch.float64)
    with pytest.raises(ArithmeticError):
        ce_bellman_loss(logits, target)


def test_ce_gradient_formula_matches_finite_differences():
    generator = torch.Generator().manual_seed(7)
    logits = torch.randn(1, 11, generator=generator, dtype=torch.float64)
    target = random_probs(generator, 1, 11)
    exact = ce_logit_gradient(logits, target)[0]
    h = 1e-5
    numeric = torch.zeros(11, dtype=torch.float64)
    for i in range(11):
        step = torch.zeros_like(logits)
        step[0, i] = h
        plus = ce_bellman_loss(logits + step, target)
        minus = ce_bellman_loss(logits - step, target)
        numeric[i] = (plus - minus) / (2 * h)
    assert ((exact - numeric).abs().max() / exact.abs().max()) < 1e-8


def test_ce_gradient_norm_is_bounded():
    norms = ce_gradient_norms(num_pairs=2000)
    assert norms.max() <= CE_GRADIENT_BOUND + 1e-9


def test_mse_gradient_grows_with_the_error():
    np.testing.assert_array_equal(mse_gradient_norms(), [1.0, 10.0, 100.0])


def test_mse_loss_arithmetic():
    q = torch.tensor([1.0], dtype=torch.float64, requires_grad=True)
    target = torch.tensor([3.0], dtype=torch.float64)
    loss = mse_bellman_loss(q, target)
    loss.backward()
    assert float(loss) == 2.0
    assert float(q.grad) == -2.0
    assert float(mse_bellman_loss(target, target)) == 0.0


def test_scalar_target():
    target = scalar_target(
        torch.tensor([2.0, 2.0]).double(),
        torch.tensor([1.0, 1.0]).double(),
        torch.tensor([0.0, 1.0]).double(),
        0.5,
        entropy_bonus=torch.tensor([0.4, 0.4]).double(),
    )
    assert torch.allclose(target, torch.tensor([2.2, 1.0]).double())


def test_aggregation_picks_the_lower_mean():
    support = CategoricalSupport(-1.0, 1.0, 2)
    probs = torch.tensor(
        [[[0.9, 0.1], [0.2, 0.8]], [[0.1, 0.9], [0.6, 0.4]]],
        dtype=torch.float64,
    )
    chosen = aggregate_targets(probs, support)
    assert torch.equal(chosen, torch.stack([probs[0, 0], probs[1, 1]]))
    mixed = aggregate_targets(probs, support, MIXTURE)
    assert torch.allclose(mixed, probs.mean(dim=0))
    values = torch.tensor([[1.0, -2.0], [0.0, 3.0]]).double()
    assert torch.equal(
        aggregate_values(values), torch.tensor([0.0, -2.0]).double()
    )
    with pytest.raises(ConfigurationError):
        aggregate_targets(probs, support, "max")


def small_agent(architecture, **trainer):
    return XQCAgent(
        3,
        1,
        architecture=architecture,
        config=TrainerConfig(batch_size=16, lr_schedule=False, **trainer),
        gamma=0.9,
        seed=0,
    )


def sampler(seed=0, size=16):
    rng = np.random.default_rng(seed)

    def sample():
        return {
            "obs": rng.normal(size=(size, 3)),
            "action": rng.uniform(-1, 1, size=(size, 1)),
            "reward": rng.normal(size=size),
            "next_obs": rng.normal(size=(size, 3)),
            "done": np.zeros(size),
        }

    return sample


def test_elr_bound_report(small_architecture):
    agent = small_agent(small_architecture)
    report = certify_elr_bound(agent, sampler(), window=5)
    assert report.window == 5
    assert len(report.steps) == 5
    assert math.isfinite(report.max_effective_update)
    assert report.max_norm_deviation <= 1e-10


def test_elr_bound_with_zero_learning_rate(small_architecture):
    agent = small_agent(small_architecture, critic_lr=0.0)
    report = certify_elr_bound(agent, sampler(), window=2)
    assert report.max_effective_update == 0.0


def test_elr_bound_needs_projection(small_architecture):
    agent = small_agent(small_architecture.replace(weight_projection=False))
    with pytest.raises(PreconditionError):
        certify_elr_bound(agent, sampler(), window=1)
    agent = small_agent(
        ArchitectureConfig.from_cell(
            "bn,wn,mse",
            hidden_dim=16,
            num_blocks=1,
            actor_hidden_dim=16,
            actor_num_blocks=1,
        )
    )
    with pytest.raises(PreconditionError):
        certify_elr_bound(agent, sampler(), window=1)
