"""Closed set of layer primitives and the tape that records them.

Networks and losses never call torch directly for their layer math; they go
through a `Primitives` object. The default `DIRECT` object just evaluates,
while a `Tape` additionally records every call as a node so the forward pass
can be inspected and replayed.
"""
import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from xqc.utils.exceptions import PreconditionError

NORM_EPS = 1e-5


def _linear(x, weight, bias):
    return x @ weight.T + bias


def _batch_norm(x, scale, shift, eps=NORM_EPS):
    # Statistics are functions of the batch and are differentiated through.
    if x.shape[0] < 2:
        raise PreconditionError(
            "Batch normalization in train mode needs a batch of at least 2."
        )
    mean = x.mean(dim=0)
    var = ((x - mean) ** 2).mean(dim=0)
    return (x - mean) / torch.sqrt(var + eps) * scale + shift


def _batch_norm_eval(
    x, scale, shift, running_mean, running_var, eps=NORM_EPS
):
    return (x - running_mean) / torch.sqrt(running_var + eps) * scale + shift


def _layer_norm(x, scale, shift, eps=NORM_EPS):
    mean = x.mean(dim=-1, keepdim=True)
    var = ((x - mean) ** 2).mean(dim=-1, keepdim=True)
    return (x - mean) / torch.sqrt(var + eps) * scale + shift


def _relu(x):
    return torch.relu(x)


def _tanh(x):
    return torch.tanh(x)


def _softmax(x):
    return torch.softmax(x, dim=-1)


def _log_softmax(x):
    return torch.log_softmax(x, dim=-1)


def _concat(*xs):
    return torch.cat(xs, dim=-1)


def _ce_loss(logits, target):
    # log_softmax is log-sum-exp stabilized.
    return -(target * torch.log_softmax(logits, dim=-1)).sum(dim=-1).mean()


def _mse_loss(prediction, target):
    return 0.5 * ((prediction - target) ** 2).mean()


def _quadratic_form(x, matrix, linear=None):
    flat = x.reshape(-1)
    value = 0.5 * flat @ (matrix @ flat)
    if linear is not None:
        value = value + linear @ flat
    return value


def _gaussian_head(h, log_std_min=-10.0, log_std_max=2.0):
    mean, log_std = torch.chunk(h, 2, dim=-1)
    return mean, torch.clamp(log_std, log_std_min, log_std_max)


def _squashed_gaussian_log_prob(mean, log_std, noise):
    pre_tanh = mean + torch.exp(log_std) * noise
    action = torch.tanh(pre_tanh)
    log_prob = -0.5 * noise**2 - log_std - 0.5 * math.log(2 * math.pi)
    # log(1 - tanh(u)^2) in a form that stays finite for large |u|.
    log_prob = log_prob - 2 * (
        math.log(2) - pre_tanh - F.softplus(-2 * pre_tanh)
    )
    return action, log_prob.sum(dim=-1)


PRIMITIVES = {
    "linear": _linear,
    "batch_norm": _batch_norm,
    "batch_norm_eval": _batch_norm_eval,
    "layer_norm": _layer_norm,
    "relu": _relu,
    "tanh": _tanh,
    "softmax": _softmax,
    "log_softmax": _log_softmax,
    "concat": _concat,
    "ce_loss": _ce_loss,
    "mse_loss": _mse_loss,
    "quadratic_form": _quadratic_form,
    "gaussian_head": _gaussian_head,
    "squashed_gaussian_log_prob": _squashed_gaussian_log_prob,
}


class Primitives:
    """Evaluates layer primitives without recording them."""

    def apply(self, op, *args, **attrs):
        """Applies a primitive.

        Args:
            op (str): Primitive op-id, a key of `PRIMITIVES`.
            *args: Tensor inputs.
            **attrs: Non-tensor attributes, e.g. `eps`.

        Returns:
            torch.Tensor or tuple: Primitive output.
        """
        return PRIMITIVES[op](*args, **attrs)

    def linear(self, x, weight, bias):
        return self.apply("linear", x, weight, bias)

    def batch_norm(self, x, scale, shift, eps=NORM_EPS):
        return self.apply("batch_norm", x, scale, shift, eps=eps)

    def batch_norm_eval(self, x, scale, shift, mean, var, eps=NORM_EPS):
        return self.apply(
            "batch_norm_eval", x, scale, shift, mean, var, eps=eps
        )

    def layer_norm(self, x, scale, shift, eps=NORM_EPS):
        return self.apply("layer_norm", x, scale, shift, eps=eps)

    def relu(self, x):
        return self.apply("relu", x)

    def tanh(self, x):
        return self.apply("tanh", x)

    def softmax(self, x):
        return self.apply("softmax", x)

    def log_softmax(self, x):
        return self.apply("log_softmax", x)

    def concat(self, *xs):
        return self.apply("concat", *xs)

    def ce_loss(self, logits, target):
        return self.apply("ce_loss", logits, target)

    def mse_loss(self, prediction, target):
        return self.apply("mse_loss", prediction, target)

    def quadratic_form(self, x, matrix, linear=None):
        if linear is None:
            return self.apply("quadratic_form", x, matrix)
        return self.apply("quadratic_form", x, matrix, linear)

    def gaussian_head(self, h, log_std_min=-10.0, log_std_max=2.0):
        return self.apply(
            "gaussian_head",
            h,
            log_std_min=log_std_min,
            log_std_max=log_std_max,
        )

    def squashed_gaussian_log_prob(self, mean, log_std, noise):
        return self.apply("squashed_gaussian_log_prob", mean, log_std, noise)


DIRECT = Primitives()


@dataclass(frozen=True)
class Node:
    """One recorded primitive call.

    Attributes:
        op (str): Primitive op-id.
        inputs (tuple): References `(kind, key)` to the inputs, where kind is
            `param`, `data`, `const` or `node`.
        attrs (tuple): Sorted `(name, value)` attribute pairs.
        value: Cached forward output (detached tensor or tuple of tensors).
    """

    op: str
    inputs: tuple
    attrs: tuple
    value: object


def _detach(value):
    if isinstance(value, tuple):
        return tuple(v.detach() for v in value)
    return value.detach()


def _is_finite(value):
    if isinstance(value, tuple):
        return all(_is_finite(v) for v in value)
    return bool(torch.isfinite(value).all())


class Tape(Primitives):
    """Records primitive calls in topological order.

    Tensors are tracked by identity: parameter and data tensors are
    registered with `watch`, outputs of recorded primitives are tracked
    automatically and any other tensor is captured as a constant.

    Attributes:
        nodes (list[Node]): Recorded nodes in execution order.
        output (torch.Tensor or None): Recorded scalar loss value.
    """

    def __init__(self):
        self.nodes = []
        self.output = None
        self._refs = {}
        self._consts = {}
        # Keeps every tracked tensor alive so ids stay unique.
        self._alive = []

    def watch(self, tensors, kind):
        """Registers named tensors as `param` or `data` inputs.

        Args:
            tensors (dict): Tensors keyed by name.
            kind (str): Either `param` or `data`.
        """
        assert kind in ("param", "data"), f"Unknown input kind {kind}."
        for key, tensor in tensors.items():
            if isinstance(tensor, torch.Tensor):
                self._refs[id(tensor)] = (kind, key)
                self._alive.append(tensor)

    def _ref(self, tensor):
        ref = self._refs.get(id(tensor))
        if ref is None:
            key = len(self._consts)
            self._consts[key] = tensor.detach()
            ref = ("const", key)
            self._refs[id(tensor)] = ref
            self._alive.append(tensor)
        return ref

    def apply(self, op, *args, **attrs):
        out = PRIMITIVES[op](*args, **attrs)
        index = len(self.nodes)
        self.nodes.append(
            Node(
                op=op,
                inputs=tuple(self._ref(arg) for arg in args),
                attrs=tuple(sorted(attrs.items())),
                value=_detach(out),
            )
        )
        outputs = out if isinstance(out, tuple) else (out,)
        for k, tensor in enumerate(outputs):
            ref = ("node", index, k) if isinstance(out, tuple) else (
                "node",
                index,
            )
            self._refs[id(tensor)] = ref
            self._alive.append(tensor)
        return out

    def record_output(self, value):
        self.output = value.detach()
        return value

    def replay(self, params=None, data=None):
        """Re-executes the recorded nodes.

        Args:
            params (dict, optional): Parameter tensors keyed as watched.
                Defaults to the recorded ones.
            data (dict, optional): Data tensors keyed as watched. Defaults to
                the recorded ones.

        Returns:
            torch.Tensor or tuple: Output of the last node.
        """
        sources = {"param": params, "data": data}
        recorded = {}
        for tensor in self._alive:
            ref = self._refs.get(id(tensor))
            if ref is not None and ref[0] in sources:
                recorded[ref] = tensor.detach()

        values = []

        def resolve(ref):
            kind = ref[0]
            if kind == "node":
                value = values[ref[1]]
                return value[ref[2]] if len(ref) == 3 else value
            if kind == "const":
                return self._consts[ref[1]]
            given = sources[kind]
            if given is not None and ref[1] in given:
                return given[ref[1]]
            return recorded[ref]

        for node in self.nodes:
            inputs = [resolve(ref) for ref in node.inputs]
            values.append(PRIMITIVES[node.op](*inputs, **dict(node.attrs)))
        return values[-1] if values else None

    def first_nonfinite(self):
        """Returns `(index, op)` of the first non-finite node, or None."""
        for index, node in enumerate(self.nodes):
            if not _is_finite(node.value):
                return index, node.op
        return None

    def ops(self):
        return [node.op for node in self.nodes]
