"""Exact gradients and Hessian-vector products over ParamVectors."""
import gymnasium
import torch
from torch.func import grad, grad_and_value, jvp, vmap

from xqc.utils.diffcore.params import ParamVector
from xqc.utils.diffcore.tape import DIRECT, Tape
from xqc.utils.exceptions import (
    CapacityError,
    ConfigurationError,
    NumericOverflowError,
)

DENSE_HESSIAN_CAP = 4096


class Loss:
    """A scalar loss over a declared parameter layout.

    Attributes:
        fn (callable): `fn(params, batch, ops) -> scalar tensor` where
            `params` is a dict of tensors keyed like a ParamVector and `ops`
            is a `Primitives` object.
        signature (tuple): `(key, shape)` pairs the loss expects.
    """

    def __init__(self, fn, layout):
        self.fn = fn
        self.signature = tuple((entry.key, entry.shape) for entry in layout)

    def __call__(self, params, batch, ops=DIRECT):
        return self.fn(params, batch, ops)

    def check(self, theta):
        """Raises ConfigurationError if theta's layout does not match."""
        got = tuple((entry.key, entry.shape) for entry in theta.layout)
        if got != self.signature:
            raise ConfigurationError(
                "Parameter layout does not match the loss graph: expected "
                f"{len(self.signature)} tensors, got {len(got)}."
            )


def _check_batch(batch):
    tensors = batch.values() if isinstance(batch, dict) else [batch]
    for tensor in tensors:
        if isinstance(tensor, torch.Tensor) and tensor.dim() > 0:
            assert tensor.shape[0] > 0, "Minibatch must be non-empty."


def value_and_grad(loss, theta, batch):
    """Evaluates a loss and its exact gradient.

    Args:
        loss (Loss): Loss over theta's layout.
        theta (ParamVector): Point of evaluation.
        batch: Minibatch passed to the loss (tensor or dict of tensors).

    Returns:
        tuple(float, ParamVector): Loss value and gradient with theta's
            layout.
    """
    loss.check(theta)
    _check_batch(batch)

    def flat_loss(flat):
        return loss(theta.unpack(flat), batch)

    g, value = grad_and_value(flat_loss)(theta.values.detach())
    return float(value), theta.with_values(g)


class HvpOracle:
    """Loss evaluation at fixed (theta, minibatch) exposing v -> H v.

    The forward pass is recorded on a `Tape` at construction. The oracle is
    immutable afterwards; `hvp` may be called from several threads.

    Attributes:
        theta (ParamVector): Frozen copy of the evaluation point.
        value (float): Loss value at theta.
        tape (Tape): Recorded forward pass.
    """

    def __init__(self, loss, theta, batch):
        loss.check(theta)
        _check_batch(batch)
        self.theta = theta.clone()
        self._loss = loss
        self._batch = batch
        self._flat = self.theta.values

        self.tape = Tape()
        params = self.theta.unpack()
        self.tape.watch(params, "param")
        if isinstance(batch, dict):
            self.tape.watch(batch, "data")
        with torch.no_grad():
            value = self.tape.record_output(loss(params, batch, self.tape))
        self.value = float(value)
        if not torch.isfinite(value):
            self._raise_nonfinite("loss")

        def flat_loss(flat):
            return loss(self.theta.unpack(flat), batch)

        self._grad = grad(flat_loss)

    @property
    def dim(self):
        return len(self.theta)

    def _raise_nonfinite(self, what):
        located = self.tape.first_nonfinite()
        if located is None:
            raise NumericOverflowError(
                f"Non-finite {what} in Hessian-vector product."
            )
        index, op = located
        raise NumericOverflowError(
            f"Non-finite {what}: first non-finite value at tape node "
            f"{index} ({op}).",
            node=index,
            op=op,
        )

    def gradient(self):
        return self.theta.with_values(self._grad(self._flat))

    def hvp_flat(self, v):
        """H v for a flat tangent tensor (forward-over-reverse)."""
        _, hv = jvp(self._grad, (self._flat,), (v,))
        return hv

    def __call__(self, v):
        return hvp(self, v)


def hvp(oracle, v):
    """Computes the exact Hessian-vector product H v.

    Args:
        oracle (HvpOracle): Oracle bound to (theta, minibatch).
        v (ParamVector): Direction with theta's layout.

    Returns:
        ParamVector: H v with theta's layout.
    """
    if not oracle.theta.same_layout(v):
        raise ConfigurationError("Direction layout does not match theta.")
    assert torch.isfinite(v.values).all(), "Direction must be finite."
    hv = oracle.hvp_flat(v.values.to(oracle.theta.dtype))
    if not torch.isfinite(hv).all():
        oracle._raise_nonfinite("Hessian-vector product")
    return oracle.theta.with_values(hv)


def dense_hessian(oracle, dim=None, chunk_size=256):
    """Assembles the full Hessian column by column from HVPs.

    Args:
        oracle (HvpOracle): Oracle bound to (theta, minibatch).
        dim (int, optional): Expected dimension. Defaults to the oracle's.
        chunk_size (int, optional): Number of basis vectors per vectorized
            batch. Defaults to 256.

    Returns:
        torch.Tensor: Symmetric (dim, dim) Hessian.

    Raises:
        CapacityError: If dim exceeds DENSE_HESSIAN_CAP.
    """
    dim = oracle.dim if dim is None else dim
    assert dim == oracle.dim, f"dim {dim} does not match theta ({oracle.dim})."
    if dim > DENSE_HESSIAN_CAP:
        raise CapacityError(
            f"Refusing to assemble a {dim}x{dim} Hessian "
            f"(cap {DENSE_HESSIAN_CAP})."
        )
    gymnasium.logger.info(f"Assembling dense {dim}x{dim} Hessian.")
    basis = torch.eye(dim, dtype=oracle.theta.dtype)
    columns = [
        vmap(oracle.hvp_flat)(basis[start : start + chunk_size])
        for start in range(0, dim, chunk_size)
    ]
    # Row i of the stacked result is H e_i, i.e. column i of H.
    hessian = torch.cat(columns).T
    if not torch.isfinite(hessian).all():
        oracle._raise_nonfinite("Hessian")
    scale = hessian.abs().max().clamp_min(torch.finfo(hessian.dtype).tiny)
    asymmetry = (hessian - hessian.T).abs().max()
    assert asymmetry <= 1e-8 * scale, (
        f"Hessian is not symmetric (relative asymmetry "
        f"{float(asymmetry / scale):.3e})."
    )
    return 0.5 * (hessian + hessian.T)


__all__ = [
    "Loss",
    "HvpOracle",
    "ParamVector",
    "dense_hessian",
    "hvp",
    "value_and_grad",
]
