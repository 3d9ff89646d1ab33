"""Certificate suite: derivative oracles, loss bounds and spectral checks.

Each check runs in seconds on a CPU and returns whether it passed plus a
short detail string. `run_checks` is what `xqc verify` executes.
"""
import math
import time
from dataclasses import dataclass

import gymnasium
import numpy as np
import torch
from tqdm import tqdm

from xqc.agents.xqc.config import TrainerConfig, discount_heuristic
from xqc.agents.xqc.xqc import XQCAgent
from xqc.utils.diffcore.oracle import (
    HvpOracle,
    Loss,
    dense_hessian,
    hvp,
    value_and_grad,
)
from xqc.utils.diffcore.params import DENSE_WEIGHT, OTHER, ParamVector
from xqc.utils.diffcore.tape import DIRECT
from xqc.utils.distcrit.categorical import CategoricalSupport, project_target
from xqc.utils.distcrit.certificates import (
    CE_GRADIENT_BOUND,
    ce_gradient_norms,
    mse_gradient_norms,
)
from xqc.utils.distcrit.losses import categorical_target
from xqc.utils.metrics.aggregate import aggregate_iqm
from xqc.utils.metrics.spectra import lanczos_spectrum
from xqc.utils.netlib.config import BN, CE, LN, MSE, NONE, ArchitectureConfig
from xqc.utils.netlib.networks import TRAIN, build, critic_apply
from xqc.utils.netlib.projection import is_projected, project_weights

OBS_DIM = 3
ACT_DIM = 1
BATCH = 16
SCALES = (0.5, 2.0, 10.0)


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one certificate.

    Attributes:
        name (str): Check name.
        passed (bool): Whether every assertion held.
        detail (str): Measured quantities or the failure message.
        seconds (float): Wall time.
    """

    name: str
    passed: bool
    detail: str
    seconds: float


def _randn(generator, *shape):
    return torch.randn(*shape, generator=generator, dtype=torch.float64)


def _rand(generator, *shape):
    return torch.rand(*shape, generator=generator, dtype=torch.float64)


def tiny_critic(
    norm=BN, critic_loss=CE, weight_projection=False, num_blocks=1, seed=0
):
    """A single small critic and its parameters, for exact checks."""
    config = ArchitectureConfig(
        norm=norm,
        weight_projection=weight_projection,
        critic_loss=critic_loss,
        hidden_dim=16,
        num_blocks=num_blocks,
        atoms=11,
        actor_hidden_dim=8,
        actor_num_blocks=1,
        num_critics=1,
    )
    critic, _, theta = build(config, OBS_DIM, ACT_DIM, seed)
    return critic, theta.select("critic0/")


def critic_loss(critic, theta, seed=0):
    """Train-mode Bellman loss of a critic on a random batch and target."""
    generator = torch.Generator().manual_seed(seed)
    sa = _randn(generator, BATCH, critic.in_dim)
    if critic.config.critic_loss == CE:
        raw = _rand(generator, BATCH, critic.config.atoms) + 0.1
        target = raw / raw.sum(dim=-1, keepdim=True)
    else:
        target = _randn(generator, BATCH)

    def fn(params, batch, ops):
        out = critic_apply(
            critic, params, batch["sa"], TRAIN, members=[0], ops=ops
        )[0]
        if critic.config.critic_loss == CE:
            return ops.ce_loss(out, batch["target"])
        return ops.mse_loss(out, batch["target"])

    return Loss(fn, theta.layout), {"sa": sa, "target": target}


def _primitive_inputs(generator):
    def x(*shape):
        return _randn(generator, *shape)

    def probs(*shape):
        raw = _rand(generator, *shape) + 0.1
        return raw / raw.sum(dim=-1, keepdim=True)

    away_from_kink = x(4, 3)
    away_from_kink = away_from_kink + 0.1 * torch.sign(away_from_kink)
    return {
        "linear": (x(4, 3), x(2, 3), x(2)),
        "batch_norm": (x(5, 3), x(3), x(3)),
        "batch_norm_eval": (
            x(5, 3),
            x(3),
            x(3),
            x(3),
            _rand(generator, 3) + 0.5,
        ),
        "layer_norm": (x(4, 5), x(5), x(5)),
        "relu": (away_from_kink,),
        "tanh": (x(4, 3),),
        "softmax": (x(4, 5),),
        "log_softmax": (x(4, 5),),
        "concat": (x(4, 2), x(4, 3)),
        "ce_loss": (x(4, 5), probs(4, 5)),
        "mse_loss": (x(4), x(4)),
        "quadratic_form": (x(3), x(3, 3), x(3)),
        "gaussian_head": (0.5 * x(4, 4),),
        "squashed_gaussian_log_prob": (x(4, 2), 0.3 * x(4, 2), x(4, 2)),
    }


def check_primitive_gradients():
    """gradcheck and gradgradcheck of every layer primitive."""
    generator = torch.Generator().manual_seed(0)
    checked = []
    for op, inputs in _primitive_inputs(generator).items():
        inputs = tuple(t.clone().requires_grad_(True) for t in inputs)

        def fn(*args, op=op):
            return DIRECT.apply(op, *args)

        torch.autograd.gradcheck(fn, inputs, eps=1e-6, atol=1e-7, rtol=1e-6)
        if op != "relu":
            torch.autograd.gradgradcheck(
                fn, inputs, eps=1e-6, atol=1e-6, rtol=1e-4
            )
        checked.append(op)
    return True, f"{len(checked)} primitives"


def _relative(a, b):
    scale = max(abs(a), abs(b), 1e-300)
    return abs(a - b) / scale


def check_hvp_symmetry():
    """`u^T H v == v^T H u` for every cell norm and both losses."""
    worst = 0.0
    for norm in (BN, LN, NONE):
        for loss_kind in (CE, MSE):
            critic, theta = tiny_critic(norm, loss_kind)
            loss, batch = critic_loss(critic, theta)
            oracle = HvpOracle(loss, theta, batch)
            generator = torch.Generator().manual_seed(1)
            u = theta.with_values(_randn(generator, len(theta)))
            v = theta.with_values(_randn(generator, len(theta)))
            uhv = float(u.values @ hvp(oracle, v).values)
            vhu = float(v.values @ hvp(oracle, u).values)
            worst = max(worst, _relative(uhv, vhu))
    assert worst <= 1e-8, f"relative asymmetry {worst:.3e}"
    return True, f"max relative asymmetry {worst:.3e}"


def check_hvp_finite_difference():
    """H v against central differences of exact gradients."""
    worst = 0.0
    eps = 1e-5
    for norm in (BN, LN):
        for loss_kind in (CE, MSE):
            critic, theta = tiny_critic(norm, loss_kind)
            loss, batch = critic_loss(critic, theta)
            oracle = HvpOracle(loss, theta, batch)
            generator = torch.Generator().manual_seed(2)
            direction = _randn(generator, len(theta))
            direction = direction / torch.linalg.vector_norm(direction)
            hv = hvp(oracle, theta.with_values(direction)).values
            _, g_plus = value_and_grad(
                loss, theta.with_values(theta.values + eps * direction), batch
            )
            _, g_minus = value_and_grad(
                loss, theta.with_values(theta.values - eps * direction), batch
            )
            fd = (g_plus.values - g_minus.values) / (2 * eps)
            error = float(
                torch.linalg.vector_norm(hv - fd)
                / torch.linalg.vector_norm(hv).clamp_min(1e-300)
            )
            worst = max(worst, error)
    assert worst <= 1e-3, f"relative error {worst:.3e}"
    return True, f"max relative error {worst:.3e}"


def check_loss_gradient_bounds():
    """CE logit gradients stay below sqrt(2); MSE gradients equal |error|."""
    ce = ce_gradient_norms(num_pairs=10_000, atoms=101, seed=0)
    assert ce.max() <= CE_GRADIENT_BOUND + 1e-9, (
        f"CE gradient norm {ce.max():.6f} exceeds sqrt(2)"
    )
    errors = (1.0, 10.0, 100.0)
    mse = mse_gradient_norms(errors)
    assert np.array_equal(mse, np.array(errors)), f"MSE norms {mse}"
    return True, f"max CE norm {ce.max():.6f}, MSE norms {mse.tolist()}"


def brute_force_projection(shifted, probs, support):
    """Per-atom clamp-and-split reference of the categorical projection."""
    atoms = len(support)
    out = np.zeros(atoms)
    for location, mass in zip(shifted, probs):
        location = min(max(location, support.v_min), support.v_max)
        b = (location - support.v_min) / support.delta
        lower, upper = math.floor(b), math.ceil(b)
        lower, upper = min(max(lower, 0), atoms - 1), min(upper, atoms - 1)
        if lower == upper:
            out[lower] += mass
        else:
            out[lower] += mass * (upper - b)
            out[upper] += mass * (b - lower)
    return out


def check_categorical_projection(instances=1000, atoms=11):
    """Projection against the brute-force oracle; mass and gamma = 0."""
    support = CategoricalSupport(-5.0, 5.0, atoms)
    rng = np.random.default_rng(0)
    worst = worst_mass = 0.0
    for _ in range(instances):
        raw = rng.random(atoms) + 1e-3
        probs = raw / raw.sum()
        reward = rng.uniform(-3, 3)
        gamma = rng.uniform(0, 1)
        done = float(rng.random() < 0.2)
        shifted = reward + gamma * (1 - done) * support.atoms.numpy()
        projected = project_target(
            torch.as_tensor(shifted), torch.as_tensor(probs), support
        ).numpy()
        expected = brute_force_projection(shifted, probs, support)
        worst = max(worst, float(np.abs(projected - expected).max()))
        worst_mass = max(worst_mass, abs(projected.sum() - 1.0))
    assert worst <= 1e-12, f"projection error {worst:.3e}"
    assert worst_mass <= 1e-12, f"mass error {worst_mass:.3e}"

    # gamma = 0 with the reward on an atom collapses to a point mass.
    probs = torch.full((1, atoms), 1.0 / atoms, dtype=torch.float64)
    target = categorical_target(
        probs,
        torch.tensor([1.0], dtype=torch.float64),
        torch.zeros(1, dtype=torch.float64),
        0.0,
        support,
    )
    delta = torch.zeros(1, atoms, dtype=torch.float64)
    delta[0, int(torch.argmin((support.atoms - 1.0).abs()))] = 1.0
    gap = float((target - delta).abs().max())
    assert gap <= 1e-12, f"gamma = 0 target is off a delta by {gap:.3e}"
    return True, f"max error {worst:.3e}, max mass error {worst_mass:.3e}"


def check_scale_invariance():
    """BN/LN outputs ignore hidden weight scale; dense outputs do not."""
    generator = torch.Generator().manual_seed(3)
    sa = _randn(generator, 32, OBS_DIM + ACT_DIM)
    changes = {}
    for norm in (BN, LN, NONE):
        critic, theta = tiny_critic(norm, CE, num_blocks=2)
        params = theta.unpack()
        reference = critic_apply(critic, params, sa, TRAIN)[0]
        worst = 0.0
        for entry in theta.entries(DENSE_WEIGHT):
            for scale in SCALES:
                scaled = dict(params)
                scaled[entry.key] = params[entry.key] * scale
                out = critic_apply(critic, scaled, sa, TRAIN)[0]
                worst = max(worst, float((out - reference).abs().max()))
        changes[norm] = worst
    assert changes[BN] <= 1e-5, f"BN output changed by {changes[BN]:.3e}"
    assert changes[LN] <= 1e-5, f"LN output changed by {changes[LN]:.3e}"
    assert changes[NONE] > 1e-5, "Dense output did not depend on scale"
    return True, ", ".join(f"{k}: {v:.3e}" for k, v in changes.items())


def check_weight_projection():
    """Unit layer norms after every update; projection is idempotent."""
    _, theta = tiny_critic(BN, CE, num_blocks=2)
    once = project_weights(theta)
    twice = project_weights(once)
    assert torch.equal(once.values, twice.values), "projection not idempotent"

    architecture = ArchitectureConfig(
        hidden_dim=16, num_blocks=2, atoms=11, actor_hidden_dim=8
    )
    agent = XQCAgent(
        OBS_DIM,
        ACT_DIM,
        architecture=architecture,
        config=TrainerConfig(batch_size=BATCH, lr_schedule=False),
        gamma=0.9,
        seed=0,
    )
    rng = np.random.default_rng(0)
    for _ in range(3):
        batch = {
            "obs": rng.normal(size=(BATCH, OBS_DIM)),
            "action": rng.uniform(-1, 1, size=(BATCH, ACT_DIM)),
            "reward": rng.normal(size=BATCH),
            "next_obs": rng.normal(size=(BATCH, OBS_DIM)),
            "done": np.zeros(BATCH),
        }
        agent.critic_update(batch)
        assert is_projected(agent.critic_params, tolerance=1e-10), (
            "critic layer norm left the unit sphere"
        )
    return True, "3 updates, norms within 1e-10"


def check_discount_heuristic():
    cases = {(1000, 2): 0.99, (20, 1): 0.95, (10_000, 1): 0.995}
    for (length, repeat), expected in cases.items():
        got = discount_heuristic(length, repeat)
        assert got == expected, f"T={length}/{repeat}: {got} != {expected}"
    return True, f"{len(cases)} cases"


def check_iqm():
    point, low, high = aggregate_iqm(np.arange(12), seed=0)
    assert point == 5.5, f"IQM of 0..11 is {point}"
    assert low <= point <= high
    constant = aggregate_iqm(np.full(10, 3.0), seed=0)
    assert constant == (3.0, 3.0, 3.0), f"constant CI {constant}"
    return True, f"IQM 5.5 in [{low:.3f}, {high:.3f}]"


def _diagonal_oracle(diagonal):
    theta = ParamVector.from_tensors(
        [("x", "w", torch.zeros(len(diagonal), dtype=torch.float64), OTHER)]
    )
    matrix = torch.diag(torch.as_tensor(diagonal, dtype=torch.float64))

    def fn(params, batch, ops):
        return ops.quadratic_form(params["x.w"], batch["matrix"])

    return HvpOracle(Loss(fn, theta.layout), theta, {"matrix": matrix})


def check_lanczos():
    """Exactness at full dimension and extreme eigenvalue of a critic."""
    diagonal = np.arange(1.0, 11.0)
    estimate = lanczos_spectrum(_diagonal_oracle(diagonal), m=10, k=1)
    error = np.abs(estimate.ritz_values - diagonal).max()
    assert error <= 1e-8, f"diagonal Ritz error {error:.3e}"

    critic, theta = tiny_critic(BN, CE)
    loss, batch = critic_loss(critic, theta)
    oracle = HvpOracle(loss, theta, batch)
    eigenvalues = torch.linalg.eigvalsh(dense_hessian(oracle))
    dense_max = float(eigenvalues.abs().max())
    estimate = lanczos_spectrum(oracle, m=min(64, oracle.dim), k=8, seed=0)
    ritz_max = float(np.abs(estimate.ritz_values).max())
    relative = _relative(ritz_max, dense_max)
    assert relative <= 1e-2, (
        f"max Ritz {ritz_max:.6g} vs dense {dense_max:.6g}"
    )
    return True, (
        f"dim {oracle.dim}, lambda_max {dense_max:.6g}, "
        f"relative error {relative:.3e}"
    )


CHECKS = {
    "primitive_gradients": check_primitive_gradients,
    "hvp_symmetry": check_hvp_symmetry,
    "hvp_finite_difference": check_hvp_finite_difference,
    "loss_gradient_bounds": check_loss_gradient_bounds,
    "categorical_projection": check_categorical_projection,
    "scale_invariance": check_scale_invariance,
    "weight_projection": check_weight_projection,
    "discount_heuristic": check_discount_heuristic,
    "iqm": check_iqm,
    "lanczos": check_lanczos,
}


def run_check(name):
    start = time.perf_counter()
    try:
        passed, detail = CHECKS[name]()
    except (AssertionError, RuntimeError, ArithmeticError, ValueError) as e:
        passed, detail = False, f"{type(e).__name__}: {e}"
    return CheckResult(name, passed, detail, time.perf_counter() - start)


def run_checks(names=None, progress=False):
    """Runs the named checks, or all of them.

    Args:
        names (list[str], optional): Subset of `CHECKS`. Defaults to all.
        progress (bool, optional): Show a tqdm bar. Defaults to False.

    Returns:
        list[CheckResult]: One result per check, in order.
    """
    names = list(CHECKS) if names is None else list(names)
    unknown = [name for name in names if name not in CHECKS]
    assert not unknown, f"Unknown checks: {unknown}."
    results = []
    for name in tqdm(names, desc="verify", disable=not progress):
        result = run_check(name)
        if result.passed:
            log = gymnasium.logger.info
        else:
            log = gymnasium.logger.error
        log(f"{name}: {'ok' if result.passed else 'FAILED'} ({result.detail})")
        results.append(result)
    return results
