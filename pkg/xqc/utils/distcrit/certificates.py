"""Runnable checks of the gradient bounds of the Bellman losses."""
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from xqc.utils.diffcore.params import DENSE_WEIGHT
from xqc.utils.distcrit.losses import ce_logit_gradient, mse_gradient
from xqc.utils.exceptions import PreconditionError
from xqc.utils.netlib.config import CE
from xqc.utils.netlib.networks import EVAL, critic_apply

CE_GRADIENT_BOUND = math.sqrt(2.0)


def ce_gradient_norms(num_pairs=10_000, atoms=101, seed=0, logit_scale=10.0):
    """Logit-gradient norms of the cross-entropy over random pairs.

    Args:
        num_pairs (int, optional): Number of (logits, target) pairs.
            Defaults to 10_000.
        atoms (int, optional): Number of atoms. Defaults to 101.
        seed (int, optional): Sampling seed. Defaults to 0.
        logit_scale (float, optional): Standard deviation of the logits.
            Defaults to 10.0.

    Returns:
        np.ndarray: `(num_pairs,)` norms of `softmax(logits) - target`.
    """
    generator = torch.Generator().manual_seed(seed)
    logits = logit_scale * torch.randn(
        num_pairs, atoms, generator=generator, dtype=torch.float64
    )
    # Mix dense Dirichlet-like targets with one-hot targets.
    raw = -torch.log(
        torch.rand(num_pairs, atoms, generator=generator, dtype=torch.float64)
    )
    target = raw / raw.sum(dim=-1, keepdim=True)
    one_hot = torch.nn.functional.one_hot(
        torch.randint(atoms, (num_pairs,), generator=generator), atoms
    ).to(torch.float64)
    target[::2] = one_hot[::2]
    grad = ce_logit_gradient(logits, target)
    return torch.linalg.vector_norm(grad, dim=-1).numpy()


def mse_gradient_norms(errors=(1.0, 10.0, 100.0)):
    """Gradient norms of `0.5 (q - target)^2` at `target = q + c`."""
    q = torch.zeros(len(errors), dtype=torch.float64)
    target = q + torch.tensor(errors, dtype=torch.float64)
    return mse_gradient(q, target).abs().numpy()


@dataclass(frozen=True)
class ElrBoundReport:
    """Effective updates observed over a window of critic updates.

    Attributes:
        window (int): Number of critic updates.
        learning_rate (float): Largest learning rate in the window.
        max_effective_update (float): Max over steps and layers of
            `lr * |grad_layer| / |theta_layer|`.
        lipschitz_estimate (float): Max over steps of the per-sample ratio
            `|f(theta') - f(theta)| / |theta' - theta|` on a probe batch.
        bound (float): `lr * sqrt(2) * lipschitz_estimate / C` with C = 1.
        bound_holds (bool): `max_effective_update <= bound`. Report-only:
            the Lipschitz estimate is a lower bound of the true constant.
        max_norm_deviation (float): Max deviation of a projected layer norm
            from one.
        steps (list[dict]): Per-step records.
    """

    window: int
    learning_rate: float
    max_effective_update: float
    lipschitz_estimate: float
    bound: float
    bound_holds: bool
    max_norm_deviation: float
    steps: list = field(default_factory=list)


def _probe_outputs(agent, sa):
    with torch.no_grad():
        return torch.stack(
            critic_apply(agent.critic, agent.critic_params.unpack(), sa, EVAL)
        )


def certify_elr_bound(agent, sample_batch, window, probe_batch=None):
    """Runs `window` critic updates and records effective updates.

    Args:
        agent (XQCAgent): Agent with a CE critic and weight projection.
        sample_batch (callable): Returns a fresh normalized minibatch.
        window (int): Number of critic updates.
        probe_batch (dict, optional): Fixed batch for the Lipschitz ratio.
            Defaults to the first sampled batch.

    Returns:
        ElrBoundReport: Report of the window.

    Raises:
        PreconditionError: If the critic loss is not CE or weight projection
            is disabled.
    """
    architecture = agent.architecture
    if architecture.critic_loss != CE or not architecture.weight_projection:
        raise PreconditionError(
            "The effective update bound needs a CE critic with weight "
            "projection."
        )
    assert window >= 1, "window must be >= 1."
    probe_batch = probe_batch or sample_batch()
    sa = torch.cat(
        [
            torch.as_tensor(np.asarray(probe_batch["obs"]), dtype=agent.dtype),
            torch.as_tensor(
                np.asarray(probe_batch["action"]), dtype=agent.dtype
            ),
        ],
        dim=-1,
    )
    entries = agent.critic_params.entries(DENSE_WEIGHT)
    records = []
    max_lr = 0.0
    for _ in range(window):
        lr = agent.critic_lr
        max_lr = max(max_lr, lr)
        before = agent.critic_params.values.detach().clone()
        outputs_before = _probe_outputs(agent, sa)
        agent.critic_update(sample_batch())
        after = agent.critic_params.values.detach()
        outputs_after = _probe_outputs(agent, sa)

        grad = agent.last_critic_grad
        updates, deviations = [], []
        for entry in entries:
            weight = agent.critic_params[entry.key]
            layer_norm = float(torch.linalg.vector_norm(weight))
            grad_norm = float(torch.linalg.vector_norm(grad[entry.key]))
            updates.append(lr * grad_norm / layer_norm)
            deviations.append(abs(layer_norm - 1.0))
        step_norm = float(torch.linalg.vector_norm(after - before))
        change = torch.linalg.vector_norm(
            (outputs_after - outputs_before).transpose(0, 1).flatten(1), dim=-1
        )
        ratio = float(change.max()) / step_norm if step_norm > 0 else 0.0
        records.append(
            {
                "learning_rate": lr,
                "effective_update": max(updates),
                "lipschitz_ratio": ratio,
                "norm_deviation": max(deviations),
            }
        )

    max_update = max(r["effective_update"] for r in records)
    lipschitz = max(r["lipschitz_ratio"] for r in records)
    bound = max_lr * CE_GRADIENT_BOUND * lipschitz
    return ElrBoundReport(
        window=window,
        learning_rate=max_lr,
        max_effective_update=max_update,
        lipschitz_estimate=lipschitz,
        bound=bound,
        bound_holds=max_update <= bound,
        max_norm_deviation=max(r["norm_deviation"] for r in records),
        steps=records,
    )
