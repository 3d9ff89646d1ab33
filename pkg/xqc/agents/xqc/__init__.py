from xqc.agents.xqc.config import TrainerConfig, discount_heuristic
from xqc.agents.xqc.training import RunArtifacts, train
from xqc.agents.xqc.xqc import AgentSnapshot, XQCAgent, agent

__all__ = [
    "AgentSnapshot",
    "RunArtifacts",
    "TrainerConfig",
    "XQCAgent",
    "agent",
    "discount_heuristic",
    "train",
]
