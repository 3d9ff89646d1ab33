import pytest
import torch

from xqc.experiments.verify import critic_loss, tiny_critic
from xqc.utils.diffcore import (
    DIRECT,
    HvpOracle,
    Loss,
    ParamVector,
    Tape,
    dense_hessian,
    hvp,
    value_and_grad,
)
from xqc.utils.diffcore.oracle import DENSE_HESSIAN_CAP
from xqc.utils.diffcore.params import (
    DENSE_BIAS,
    DENSE_WEIGHT,
    OTHER,
    LayoutEntry,
)
from xqc.utils.exceptions import (
    CapacityError,
    ConfigurationError,
    NumericOverflowError,
)
from xqc.utils.netlib.config import BN, CE, LN, MSE, NONE


def vector(*values):
    return ParamVector.from_tensors(
        [("x", "w", torch.tensor(values, dtype=torch.float64), OTHER)]
    )


def quadratic(theta, diagonal):
    matrix = torch.diag(torch.tensor(diagonal, dtype=torch.float64))

    def fn(params, batch, ops):
        return ops.quadratic_form(params["x.w"], batch["matrix"])

    return Loss(fn, theta.layout), {"matrix": matrix}


def linear_regression():
    generator = torch.Generator().manual_seed(0)
    theta = ParamVector.from_tensors(
        [
            (
                "dense",
                "weight",
                torch.randn(1, 3, generator=generator, dtype=torch.float64),
                DENSE_WEIGHT,
            ),
            ("dense", "bias", torch.zeros(1, dtype=torch.float64), DENSE_BIAS),
        ]
    )
    batch = {
        "x": torch.randn(32, 3, generator=generator, dtype=torch.float64),
        "y": torch.randn(32, generator=generator, dtype=torch.float64),
    }

    def fn(params, data, ops):
        out = ops.linear(
            data["x"], params["dense.weight"], params["dense.bias"]
        )
        return ops.mse_loss(out.squeeze(-1), data["y"])

    return Loss(fn, theta.layout), theta, batch


def finite_difference_gradient(loss, theta, batch, h=1e-5, indices=None):
    indices = range(len(theta)) if indices is None else indices
    grads = []
    for i in indices:
        step = torch.zeros_like(theta.values)
        step[i] = h
        plus = loss(theta.unpack(theta.values + step), batch)
        minus = loss(theta.unpack(theta.values - step), batch)
        grads.append(float(plus - minus) / (2 * h))
    return torch.tensor(grads, dtype=torch.float64)


def test_layout_rejects_gaps():
    entries = [
        LayoutEntry("a", "w", (2,), 0),
        LayoutEntry("b", "w", (2,), 3),
    ]
    with pytest.raises(ConfigurationError):
        ParamVector(torch.zeros(5, dtype=torch.float64), entries)


def test_pack_unpack_is_exact():
    critic, theta = tiny_critic(BN, CE)
    packed = theta.pack(theta.unpack())
    assert torch.equal(packed.values, theta.values)
    assert packed.layout == theta.layout


def test_unpack_returns_views():
    theta = vector(1.0, 2.0)
    theta.unpack()["x.w"][0] = 5.0
    assert theta.values[0] == 5.0


def test_value_and_grad_of_half_squared_norm():
    theta = vector(3.0, 4.0)
    loss, batch = quadratic(theta, [1.0, 1.0])
    value, grad = value_and_grad(loss, theta, batch)
    assert value == 12.5
    assert torch.allclose(grad.values, torch.tensor([3.0, 4.0]).double())


def test_linear_gradient_matches_finite_differences():
    loss, theta, batch = linear_regression()
    _, grad = value_and_grad(loss, theta, batch)
    numeric = finite_difference_gradient(loss, theta, batch)
    error = (grad.values - numeric).abs().max() / grad.values.abs().max()
    assert error < 1e-6


@pytest.mark.parametrize("norm", [BN, LN, NONE])
def test_critic_gradient_matches_finite_differences(norm):
    critic, theta = tiny_critic(norm, CE)
    loss, batch = critic_loss(critic, theta)
    _, grad = value_and_grad(loss, theta, batch)
    indices = list(range(0, len(theta), max(1, len(theta) // 25)))
    numeric = finite_difference_gradient(loss, theta, batch, indices=indices)
    error = (grad.values[indices] - numeric).abs().max()
    assert error / grad.values.abs().max() < 1e-4


def test_layout_mismatch_is_rejected():
    theta = vector(1.0, 2.0)
    loss, batch = quadratic(theta, [1.0, 2.0])
    with pytest.raises(ConfigurationError):
        value_and_grad(loss, vector(1.0, 2.0, 3.0), batch)


def test_hvp_of_diagonal_quadratic():
    theta = vector(0.5, -1.0)
    loss, batch = quadratic(theta, [1.0, 2.0])
    oracle = HvpOracle(loss, theta, batch)
    result = hvp(oracle, vector(1.0, 1.0))
    assert torch.allclose(result.values, torch.tensor([1.0, 2.0]).double())


def test_hvp_of_zero_direction_is_zero():
    critic, theta = tiny_critic(BN, CE)
    loss, batch = critic_loss(critic, theta)
    oracle = HvpOracle(loss, theta, batch)
    assert torch.equal(
        hvp(oracle, theta.zeros_like()).values,
        torch.zeros_like(theta.values),
    )


def test_hvp_direction_layout_is_checked():
    theta = vector(0.5, -1.0)
    loss, batch = quadratic(theta, [1.0, 2.0])
    oracle = HvpOracle(loss, theta, batch)
    with pytest.raises(ConfigurationError):
        hvp(oracle, vector(1.0, 1.0, 1.0))


@pytest.mark.parametrize("critic_loss_kind", [CE, MSE])
def test_hvp_matches_gradient_differences(critic_loss_kind):
    critic, theta = tiny_critic(NONE, critic_loss_kind, num_blocks=2)
    loss, batch = critic_loss(critic, theta)
    oracle = HvpOracle(loss, theta, batch)
    generator = torch.Generator().manual_seed(1)
    v = torch.randn(len(theta), generator=generator, dtype=torch.float64)
    h = 1e-4
    _, plus = value_and_grad(
        loss, theta.with_values(theta.values + h * v), batch
    )
    _, minus = value_and_grad(
        loss, theta.with_values(theta.values - h * v), batch
    )
    numeric = (plus.values - minus.values) / (2 * h)
    exact = hvp(oracle, theta.with_values(v)).values
    relative = (exact - numeric).norm() / exact.norm()
    assert relative < 1e-3


def test_dense_hessian_of_quadratic_is_its_matrix():
    theta = vector(0.0, 0.0, 0.0)
    loss, batch = quadratic(theta, [1.0, 2.0, 3.0])
    hessian = dense_hessian(HvpOracle(loss, theta, batch))
    assert torch.allclose(hessian, batch["matrix"])


def test_dense_hessian_of_constant_loss_is_zero():
    theta = vector(1.0, 2.0)

    def fn(params, batch, ops):
        return (params["x.w"] * 0).sum() + 1.0

    oracle = HvpOracle(Loss(fn, theta.layout), theta, {})
    assert torch.equal(dense_hessian(oracle), torch.zeros(2, 2).double())


def test_dense_hessian_is_symmetric():
    critic, theta = tiny_critic(LN, CE)
    loss, batch = critic_loss(critic, theta)
    hessian = dense_hessian(HvpOracle(loss, theta, batch))
    assert torch.equal(hessian, hessian.T)


def test_dense_hessian_refuses_large_dimensions():
    theta = ParamVector.from_tensors(
        [
            (
                "x",
                "w",
                torch.zeros(DENSE_HESSIAN_CAP + 1, dtype=torch.float64),
                OTHER,
            )
        ]
    )

    def fn(params, batch, ops):
        return 0.5 * (params["x.w"] ** 2).sum()

    oracle = HvpOracle(Loss(fn, theta.layout), theta, {})
    with pytest.raises(CapacityError):
        dense_hessian(oracle)


def test_overflow_is_localized_to_its_node():
    theta = ParamVector.from_tensors(
        [
            (
                "dense",
                "weight",
                torch.full((1, 2), 1e308, dtype=torch.float64),
                DENSE_WEIGHT,
            )
        ]
    )
    batch = {
        "x": torch.full((4, 2), 10.0, dtype=torch.float64),
        "bias": torch.zeros(1, dtype=torch.float64),
        "y": torch.zeros(4, dtype=torch.float64),
    }

    def fn(params, data, ops):
        out = ops.linear(data["x"], params["dense.weight"], data["bias"])
        return ops.mse_loss(out.squeeze(-1), data["y"])

    with pytest.raises(NumericOverflowError) as error:
        HvpOracle(Loss(fn, theta.layout), theta, batch)
    assert error.value.node == 0
    assert error.value.op == "linear"


def test_tape_records_and_replays():
    critic, theta = tiny_critic(BN, CE)
    loss, batch = critic_loss(critic, theta)
    oracle = HvpOracle(loss, theta, batch)
    tape = oracle.tape
    assert tape.ops()[0] == "batch_norm"
    assert tape.ops()[-1] == "ce_loss"
    assert torch.allclose(tape.replay(), tape.output, rtol=0, atol=1e-12)

    moved = theta.with_values(theta.values * 1.1)
    expected = loss(moved.unpack(), batch, DIRECT)
    replayed = tape.replay(params=moved.unpack())
    assert torch.allclose(replayed, expected, rtol=0, atol=1e-12)


def test_tape_matches_direct_evaluation():
    critic, theta = tiny_critic(NONE, MSE)
    loss, batch = critic_loss(critic, theta)
    tape = Tape()
    params = theta.unpack()
    tape.watch(params, "param")
    tape.watch(batch, "data")
    assert loss(params, batch, tape) == loss(params, batch, DIRECT)
    assert tape.first_nonfinite() is None
