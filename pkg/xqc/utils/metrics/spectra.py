"""Hessian spectra of the critic loss via stochastic Lanczos quadrature."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import gymnasium
import numpy as np
import torch
from scipy.linalg import eigh_tridiagonal

from xqc.utils.diffcore.oracle import HvpOracle, Loss
from xqc.utils.diffcore.tape import DIRECT
from xqc.utils.distcrit.losses import (
    aggregate_targets,
    aggregate_values,
    categorical_target,
    scalar_target,
)
from xqc.utils.exceptions import DegenerateSpectrumError, PreconditionError
from xqc.utils.netlib.networks import EVAL, actor_apply, critic_apply

BREAKDOWN = 1e-12
ZERO_SPECTRUM = 1e-300


@dataclass(frozen=True)
class SpectrumEstimate:
    """Ritz density averaged over Lanczos probes.

    Attributes:
        ritz_values (np.ndarray): Sorted Ritz values of all probes.
        ritz_weights (np.ndarray): Squared first eigenvector components,
            divided by the number of probes so that they sum to one.
        num_probes (int): Number of probes k.
        lanczos_steps (int): Requested iterations m per probe.
        seed (int): Probe seed.
        probe_lengths (tuple): Iterations actually run by each probe.
    """

    ritz_values: np.ndarray
    ritz_weights: np.ndarray
    num_probes: int
    lanczos_steps: int
    seed: int
    probe_lengths: tuple = field(default=())

    def __post_init__(self):
        assert len(self.ritz_values) == len(self.ritz_weights)
        assert np.all(self.ritz_weights >= 0), "Ritz weights must be >= 0."
        assert abs(self.ritz_weights.sum() - 1) <= 1e-9, (
            "Ritz weights must sum to one."
        )


@dataclass(frozen=True)
class ConditioningSummary:
    """Scalar conditioning statistics of a spectrum estimate.

    Attributes:
        kappa (float): `lambda_max / lambda_min_abs`.
        lambda_max (float): Largest absolute Ritz value.
        lambda_min_abs (float): Smallest absolute Ritz value above the floor.
        kurtosis (float): Weighted fourth standardized moment (NaN for a
            density without spread).
        floor (float): Absolute floor applied before taking the minimum.
    """

    kappa: float
    lambda_max: float
    lambda_min_abs: float
    kurtosis: float
    floor: float


def _probe_seed(seed, index):
    return int(seed) * 1_000_003 + index


def lanczos_run(oracle, m, seed):
    """One Lanczos run with full reorthogonalization.

    Args:
        oracle (HvpOracle): Hessian-vector product oracle.
        m (int): Maximum number of iterations.
        seed (int): Seed of the Gaussian start vector.

    Returns:
        tuple(np.ndarray, np.ndarray): Ritz values and weights of this probe.
    """
    dtype = oracle.theta.dtype
    generator = torch.Generator().manual_seed(seed)
    v = torch.randn(oracle.dim, generator=generator, dtype=dtype)
    v = v / torch.linalg.vector_norm(v)
    basis = [v]
    alphas, betas = [], []
    with torch.no_grad():
        for j in range(m):
            w = oracle.hvp_flat(v)
            if not torch.isfinite(w).all():
                oracle._raise_nonfinite("Hessian-vector product")
            alpha = torch.dot(v, w)
            alphas.append(float(alpha))
            stacked = torch.stack(basis)
            # Two passes of classical Gram-Schmidt against all Lanczos vectors.
            for _ in range(2):
                w = w - stacked.T @ (stacked @ w)
            beta = float(torch.linalg.vector_norm(w))
            if j == m - 1 or beta < BREAKDOWN:
                break
            betas.append(beta)
            v = w / beta
            basis.append(v)
    alphas = np.array(alphas)
    if len(alphas) == 1:
        return alphas, np.ones(1)
    values, vectors = eigh_tridiagonal(alphas, np.array(betas))
    return values, vectors[0] ** 2


def lanczos_spectrum(oracle, m=64, k=8, seed=0, workers=1):
    """Stochastic Lanczos quadrature estimate of the Hessian spectrum.

    Args:
        oracle (HvpOracle): Hessian-vector product oracle.
        m (int, optional): Lanczos iterations per probe. Defaults to 64.
        k (int, optional): Number of independent probes. Defaults to 8.
        seed (int, optional): Probe seed. Defaults to 0.
        workers (int, optional): Threads running probes concurrently.
            Defaults to 1.

    Returns:
        SpectrumEstimate: Averaged Ritz density.
    """
    if m < 2 or k < 1:
        raise PreconditionError("Lanczos needs m >= 2 and k >= 1.")
    if m > oracle.dim:
        raise PreconditionError(
            f"Lanczos steps m = {m} exceed the dimension {oracle.dim}."
        )
    seeds = [_probe_seed(seed, j) for j in range(k)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(lambda s: lanczos_run(oracle, m, s), seeds))
    else:
        runs = [lanczos_run(oracle, m, s) for s in seeds]

    values = np.concatenate([run[0] for run in runs])
    weights = np.concatenate([run[1] / run[1].sum() / k for run in runs])
    order = np.argsort(values, kind="stable")
    lengths = tuple(len(run[0]) for run in runs)
    if min(lengths) < m:
        gymnasium.logger.info(
            f"Lanczos breakdown: probe lengths {lengths} (requested {m})."
        )
    return SpectrumEstimate(
        ritz_values=values[order],
        ritz_weights=weights[order],
        num_probes=k,
        lanczos_steps=m,
        seed=seed,
        probe_lengths=lengths,
    )


def spectral_kurtosis(values, weights):
    """Weighted (non-excess) fourth standardized moment; NaN without spread."""
    weights = weights / weights.sum()
    mean = np.sum(weights * values)
    var = np.sum(weights * (values - mean) ** 2)
    if var <= 0:
        return float("nan")
    return float(np.sum(weights * (values - mean) ** 4) / var**2)


def conditioning_summary(estimate, floor_ratio=1e-8):
    """Condition number, extreme eigenvalues and kurtosis of a spectrum.

    Args:
        estimate (SpectrumEstimate): Ritz density.
        floor_ratio (float, optional): Eigenvalues with absolute value below
            `floor_ratio * lambda_max` are ignored for the minimum. Defaults
            to 1e-8.

    Returns:
        ConditioningSummary: Summary statistics.

    Raises:
        DegenerateSpectrumError: If every Ritz value is numerically zero.
    """
    assert len(estimate.ritz_values) > 0, "Spectrum estimate is empty."
    magnitudes = np.abs(estimate.ritz_values)
    lambda_max = float(magnitudes.max())
    if lambda_max < ZERO_SPECTRUM:
        raise DegenerateSpectrumError("All Ritz values are zero.")
    floor = floor_ratio * lambda_max
    lambda_min_abs = float(magnitudes[magnitudes >= floor].min())
    return ConditioningSummary(
        kappa=lambda_max / lambda_min_abs,
        lambda_max=lambda_max,
        lambda_min_abs=lambda_min_abs,
        kurtosis=spectral_kurtosis(
            estimate.ritz_values, estimate.ritz_weights
        ),
        floor=floor,
    )


def critic_hessian_oracle(agent, snapshot, probe_batch, member=0, seed=0):
    """HVP oracle of one critic's Bellman loss at a snapshot.

    The loss is a deterministic function of the member's parameters: BN
    runs in eval mode on the snapshot statistics, targets are computed once
    from the snapshot's target networks with fixed policy noise, and the
    computation is carried out in float64.

    Args:
        agent (XQCAgent): Agent owning the network structures.
        snapshot (AgentSnapshot): Parameters and statistics to probe.
        probe_batch (dict): Arrays `obs`, `action`, `reward` (normalized),
            `next_obs`, `done`.
        member (int, optional): Critic member. Defaults to 0.
        seed (int, optional): Seed of the policy noise. Defaults to 0.

    Returns:
        HvpOracle: Oracle over the member's parameters.
    """
    dtype = torch.float64
    batch = {
        key: torch.as_tensor(np.asarray(value), dtype=dtype)
        for key, value in probe_batch.items()
    }
    critic_state = snapshot.critic_state.to(dtype)
    online = snapshot.critic_params.to(dtype)
    with torch.no_grad():
        mean, log_std = actor_apply(
            agent.actor,
            snapshot.actor_params.to(dtype).unpack(),
            batch["next_obs"],
            EVAL,
            state=snapshot.actor_state.to(dtype),
        )
        noise = torch.randn(
            mean.shape,
            generator=torch.Generator().manual_seed(seed),
            dtype=dtype,
        )
        next_action, log_prob = DIRECT.squashed_gaussian_log_prob(
            mean, log_std, noise
        )
        next_sa = torch.cat([batch["next_obs"], next_action], dim=-1)
        if agent.config.use_target_network:
            params = snapshot.target_params.to(dtype)
            state = snapshot.target_state.to(dtype)
        else:
            params, state = online, critic_state
        outputs = torch.stack(
            critic_apply(
                agent.critic, params.unpack(), next_sa, EVAL, state=state
            )
        )
        bonus = -snapshot.temperature * log_prob
        aggregation = agent.config.critic_aggregation
        if agent.support is None:
            target = scalar_target(
                aggregate_values(outputs, aggregation),
                batch["reward"],
                batch["done"],
                agent.gamma,
                bonus,
            )
        else:
            support = agent.support.to(dtype)
            target = categorical_target(
                aggregate_targets(
                    torch.softmax(outputs, dim=-1), support, aggregation
                ),
                batch["reward"],
                batch["done"],
                agent.gamma,
                support,
                bonus,
            )

    theta = online.select(f"critic{member}/")
    categorical = agent.support is not None

    def member_loss(params, data, ops):
        out = critic_apply(
            agent.critic,
            params,
            data["sa"],
            EVAL,
            state=critic_state,
            members=[member],
            ops=ops,
        )[0]
        if categorical:
            return ops.ce_loss(out, data["target"])
        return ops.mse_loss(out, data["target"])

    data = {
        "sa": torch.cat([batch["obs"], batch["action"]], dim=-1),
        "target": target,
    }
    return HvpOracle(Loss(member_loss, theta.layout), theta, data)
