import torch

from xqc.utils.diffcore.tape import DIRECT
from xqc.utils.distcrit.categorical import mean_value, project_target
from xqc.utils.exceptions import ConfigurationError, NumericOverflowError

MEAN_MIN = "mean_min"
MIXTURE = "mixture"
AGGREGATIONS = (MEAN_MIN, MIXTURE)


def ce_bellman_loss(logits, target, ops=DIRECT):
    """Cross-entropy between a target distribution and softmax(logits).

    Args:
        logits (torch.Tensor): `(B, m)` or `(m,)` critic logits.
        target (torch.Tensor): Target probabilities of the same shape.
        ops (Primitives, optional): Primitive evaluator. Defaults to DIRECT.

    Returns:
        torch.Tensor: Scalar loss averaged over the batch.

    Raises:
        NumericOverflowError: If any logit is non-finite.
    """
    if not torch.isfinite(logits).all():
        raise NumericOverflowError("Non-finite critic logits.", op="ce_loss")
    return ops.ce_loss(logits, target)


def mse_bellman_loss(q, target, ops=DIRECT):
    """`0.5 (q - target)^2` averaged over the batch."""
    return ops.mse_loss(q, target)


def ce_logit_gradient(logits, target):
    """Per-sample gradient of the cross-entropy w.r.t. the logits."""
    return torch.softmax(logits, dim=-1) - target


def mse_gradient(q, target):
    """Per-sample gradient of `0.5 (q - target)^2` w.r.t. q."""
    return q - target


def aggregate_targets(probs, support, mode=MEAN_MIN):
    """Combines the next-state distributions of several critics.

    Args:
        probs (torch.Tensor): `(num_critics, B, m)` probabilities.
        support (CategoricalSupport): Atom locations.
        mode (str, optional): `mean_min` keeps, per sample, the distribution
            with the smaller mean; `mixture` averages them. Defaults to
            `mean_min`.

    Returns:
        torch.Tensor: `(B, m)` probabilities.
    """
    if mode not in AGGREGATIONS:
        raise ConfigurationError(f"Unknown critic aggregation {mode!r}.")
    if mode == MIXTURE:
        return probs.mean(dim=0)
    means = mean_value(probs, support)
    chosen = means.argmin(dim=0)
    return probs[chosen, torch.arange(probs.shape[1])]


def aggregate_values(values, mode=MEAN_MIN):
    """Scalar counterpart of `aggregate_targets` over `(num_critics, B)`."""
    if mode not in AGGREGATIONS:
        raise ConfigurationError(f"Unknown critic aggregation {mode!r}.")
    if mode == MIXTURE:
        return values.mean(dim=0)
    return values.min(dim=0).values


def categorical_target(
    next_probs, rewards, dones, gamma, support, entropy_bonus=None
):
    """Projected soft distributional Bellman target.

    The entropy term enters as a per-sample shift of the support:
    `Tz_i = r + gamma (1 - done) (z_i - alpha log pi(a'|s'))`.

    Args:
        next_probs (torch.Tensor): `(B, m)` aggregated next-state
            probabilities.
        rewards (torch.Tensor): `(B,)` (normalized) rewards.
        dones (torch.Tensor): `(B,)` termination flags.
        gamma (float): Discount.
        support (CategoricalSupport): Atom locations.
        entropy_bonus (torch.Tensor, optional): `(B,)` values of
            `-alpha log pi(a'|s')`. Defaults to None.

    Returns:
        torch.Tensor: `(B, m)` target probabilities.
    """
    atoms = support.atoms.to(next_probs.dtype).unsqueeze(0)
    if entropy_bonus is not None:
        atoms = atoms + entropy_bonus.unsqueeze(-1)
    shifted = rewards.unsqueeze(-1) + gamma * (1 - dones).unsqueeze(-1) * atoms
    return project_target(shifted, next_probs, support)


def scalar_target(next_values, rewards, dones, gamma, entropy_bonus=None):
    """Soft scalar target `r + gamma (1 - done) (q' - alpha log pi)`."""
    if entropy_bonus is not None:
        next_values = next_values + entropy_bonus
    return rewards + gamma * (1 - dones) * next_values
