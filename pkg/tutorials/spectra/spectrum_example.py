import numpy as np

from xqc.agents import xqc_v0
from xqc.environments import double_integrator_v0
from xqc.policies import random_policy_v0
from xqc.utils.metrics import (
    conditioning_summary,
    critic_hessian_oracle,
    lanczos_spectrum,
)
from xqc.utils.netlib.config import ArchitectureConfig

env = double_integrator_v0.env()
policy = random_policy_v0.policy(env=env)
observation, _ = env.reset(seed=0)
batch = {"obs": [], "action": [], "reward": [], "next_obs": [], "done": []}
for _ in range(256):
    action = policy.action(observation)
    next_observation, reward, terminated, truncated, info = env.step(action)
    for key, value in zip(
        batch, (observation, action, reward, next_observation, terminated)
    ):
        batch[key].append(value)
    observation = next_observation
    if terminated or truncated:
        observation, _ = env.reset()
batch = {
    key: np.asarray(value, dtype=np.float64) for key, value in batch.items()
}

for cell in ("bn,wn,ce", "ln,wn,ce", "bn,wn,mse"):
    agent = xqc_v0.agent(
        obs_dim=2,
        act_dim=1,
        architecture=ArchitectureConfig.from_cell(cell, hidden_dim=64),
        gamma=0.99,
        seed=0,
    )
    agent.critic_update(batch)
    oracle = critic_hessian_oracle(agent, agent.snapshot(), batch)
    summary = conditioning_summary(lanczos_spectrum(oracle, m=32, k=4))
    print(f"{cell}: kappa {summary.kappa:.3g}, max {summary.lambda_max:.3g}")
