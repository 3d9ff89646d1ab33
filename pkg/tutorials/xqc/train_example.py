from xqc.agents.xqc.config import TrainerConfig
from xqc.agents.xqc.training import train
from xqc.environments import pendulum_v0
from xqc.utils.netlib.config import ArchitectureConfig

env = pendulum_v0.env()
artifacts = train(
    env,
    config=TrainerConfig(eval_interval=5000),
    architecture=ArchitectureConfig.from_cell("bn,wn,ce"),
    total_steps=30_000,
    seed=0,
    probe_schedule=(10_000, 20_000, 30_000),
    out_dir="runs/pendulum/bn,wn,ce/seed_0",
    progress=True,
)
env.close()

for row in artifacts.conditioning:
    print(f"step {row['step']}: kappa {row['kappa']:.3g}")

env = pendulum_v0.env(render_mode="human")
observation, _ = env.reset(seed=1)
truncated = False
while not truncated:
    action = artifacts.agent.act(observation, deterministic=True)
    observation, reward, terminated, truncated, info = env.step(action)
env.close()
