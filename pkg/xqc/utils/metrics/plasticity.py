import math
from dataclasses import dataclass, field

import torch

from xqc.utils.diffcore.params import DENSE_WEIGHT
from xqc.utils.exceptions import PreconditionError


@dataclass(frozen=True)
class PlasticityRecord:
    """Parameter norm, gradient norm and effective learning rate at a step.

    Attributes:
        step (int): Environment step.
        param_norm (float): Global critic parameter norm.
        projected_norm (float): Norm of the hidden dense weights (the group
            weight projection acts on).
        grad_norm (float): Norm of the last critic gradient.
        elr (float): `lr / param_norm`.
        effective_update (float): `lr * grad_norm / param_norm`.
        learning_rate (float): Scheduled critic learning rate.
        group_norms (dict): Frobenius norm of every hidden dense weight.
    """

    step: int
    param_norm: float
    projected_norm: float
    grad_norm: float
    elr: float
    effective_update: float
    learning_rate: float
    group_norms: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in (
            "param_norm",
            "projected_norm",
            "grad_norm",
            "elr",
            "effective_update",
        ):
            value = getattr(self, name)
            assert math.isfinite(value) and value >= 0, f"Invalid {name}."


def plasticity_probe(snapshot, learning_rate=None):
    """Computes the plasticity record of a snapshot.

    Args:
        snapshot (AgentSnapshot): Snapshot holding the last critic gradient.
        learning_rate (float, optional): Scheduled learning rate. Defaults
            to the snapshot's critic learning rate.

    Returns:
        PlasticityRecord: Norms and effective learning rate.
    """
    if snapshot.last_critic_grad is None:
        raise PreconditionError("Snapshot has no critic gradient yet.")
    lr = snapshot.critic_lr if learning_rate is None else learning_rate
    params = snapshot.critic_params
    group_norms = params.group_norms(DENSE_WEIGHT)
    param_norm = params.norm()
    projected_norm = math.sqrt(sum(n**2 for n in group_norms.values()))
    if projected_norm == 0:
        projected_norm = param_norm
    grad_norm = float(
        torch.linalg.vector_norm(snapshot.last_critic_grad.values)
    )
    return PlasticityRecord(
        step=snapshot.step,
        param_norm=param_norm,
        projected_norm=projected_norm,
        grad_norm=grad_norm,
        elr=lr / param_norm,
        effective_update=lr * grad_norm / param_norm,
        learning_rate=lr,
        group_norms=group_norms,
    )
