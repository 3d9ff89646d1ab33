from xqc.utils.netlib.checkpoint import load_checkpoint, save_checkpoint
from xqc.utils.netlib.config import (
    ArchitectureConfig,
    ablation_cells,
    all_cells,
)
from xqc.utils.netlib.networks import (
    EVAL,
    TRAIN,
    ActorNetwork,
    CriticNetwork,
    NormState,
    actor_apply,
    actor_forward,
    build,
    critic_apply,
    critic_forward,
)
from xqc.utils.netlib.projection import (
    is_projected,
    project_weights,
    project_weights_,
)

__all__ = [
    "ArchitectureConfig",
    "ActorNetwork",
    "CriticNetwork",
    "EVAL",
    "NormState",
    "TRAIN",
    "ablation_cells",
    "actor_apply",
    "actor_forward",
    "all_cells",
    "build",
    "critic_apply",
    "critic_forward",
    "is_projected",
    "load_checkpoint",
    "project_weights",
    "project_weights_",
    "save_checkpoint",
]
