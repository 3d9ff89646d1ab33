import pytest

from xqc.agents.xqc.config import TrainerConfig
from xqc.utils.netlib.config import ArchitectureConfig


def pytest_addoption(parser):
    parser.addoption(
        "--runslow",
        action="store_true",
        default=False,
        help="Run full-length training tests",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def small_architecture():
    return ArchitectureConfig(
        hidden_dim=16,
        num_blocks=1,
        atoms=11,
        actor_hidden_dim=16,
        actor_num_blocks=1,
    )


@pytest.fixture
def small_trainer():
    return TrainerConfig(
        batch_size=8,
        warmup_steps=10,
        eval_interval=20,
        eval_episodes=1,
        checkpoint_interval=20,
        diag_interval=10,
        probe_batch_size=16,
        lanczos_steps=8,
        lanczos_probes=2,
    )
