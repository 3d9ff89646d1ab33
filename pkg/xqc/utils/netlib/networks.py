"""Functional critic and actor networks over a flat ParamVector.

Parameters never live inside the networks: every forward takes the
parameters explicitly, so the same function is used for training, for
targets and inside `torch.func` transforms. Batch-norm running statistics
are the only mutable state and are kept apart in a `NormState`.
"""
import math
from dataclasses import dataclass

import torch

from xqc.utils.diffcore.params import (
    DENSE_BIAS,
    DENSE_WEIGHT,
    HEAD_BIAS,
    HEAD_WEIGHT,
    NORM_SCALE,
    NORM_SHIFT,
    ParamVector,
)
from xqc.utils.diffcore.tape import DIRECT
from xqc.utils.exceptions import ConfigurationError
from xqc.utils.netlib.config import ACT_NORM, BN, CE, LN, NONE

TRAIN = "train"
EVAL = "eval"
MODES = (TRAIN, EVAL)

HEAD_INIT_SCALE = 3e-3
HIDDEN_GAIN = math.sqrt(2.0)


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a network body.

    Attributes:
        kind (str): `dense`, `head`, `bn`, `ln` or `relu`.
        name (str): Layer name relative to the network prefix.
        in_dim (int): Input features.
        out_dim (int): Output features.
    """

    kind: str
    name: str
    in_dim: int
    out_dim: int


class NormState:
    """Batch-norm running statistics keyed by full layer id.

    Attributes:
        stats (dict): `layer_id -> (running_mean, running_var)`.
    """

    def __init__(self, stats=None):
        self.stats = dict(stats or {})

    def __len__(self):
        return len(self.stats)

    def __contains__(self, layer_id):
        return layer_id in self.stats

    def __getitem__(self, layer_id):
        return self.stats[layer_id]

    def keys(self):
        return list(self.stats)

    def clone(self):
        return NormState(
            {k: (m.clone(), v.clone()) for k, (m, v) in self.stats.items()}
        )

    def to(self, dtype):
        return NormState(
            {
                k: (m.to(dtype), v.to(dtype))
                for k, (m, v) in self.stats.items()
            }
        )

    def update(self, batch_stats, momentum):
        """Moves running statistics towards the given batch statistics.

        Args:
            batch_stats (dict): `layer_id -> (batch_mean, batch_var)`.
            momentum (float): Weight of the new batch.
        """
        for layer_id, (mean, var) in batch_stats.items():
            running_mean, running_var = self.stats[layer_id]
            running_mean.mul_(1 - momentum).add_(momentum * mean.detach())
            running_var.mul_(1 - momentum).add_(momentum * var.detach())

    def polyak(self, source, tau):
        """In-place `self <- (1 - tau) self + tau source`."""
        for layer_id, (mean, var) in self.stats.items():
            source_mean, source_var = source.stats[layer_id]
            mean.mul_(1 - tau).add_(tau * source_mean)
            var.mul_(1 - tau).add_(tau * source_var)

    def select(self, prefix):
        return NormState(
            {k: v for k, v in self.stats.items() if k.startswith(prefix)}
        )

    def merge(self, other):
        return NormState({**self.stats, **other.stats})


def _body(config, in_dim, hidden_dim, num_blocks, input_norm):
    layers = []
    if input_norm and config.norm == BN:
        layers.append(LayerSpec("bn", "input_norm", in_dim, in_dim))
    width = in_dim
    for i in range(num_blocks):
        layers.append(LayerSpec("dense", f"dense{i}", width, hidden_dim))
        width = hidden_dim
        norm = []
        if config.norm != NONE:
            norm = [LayerSpec(config.norm, f"norm{i}", width, width)]
        relu = [LayerSpec("relu", f"relu{i}", width, width)]
        if config.block_order == ACT_NORM:
            layers.extend(relu + norm)
        else:
            layers.extend(norm + relu)
    return layers, width


def critic_layers(config, obs_dim, act_dim):
    layers, width = _body(
        config,
        obs_dim + act_dim,
        config.hidden_dim,
        config.num_blocks,
        input_norm=True,
    )
    layers.append(LayerSpec("head", "head", width, config.output_dim))
    return tuple(layers)


def actor_layers(config, obs_dim, act_dim):
    layers, width = _body(
        config,
        obs_dim,
        config.actor_hidden_dim,
        config.actor_num_blocks,
        input_norm=config.actor_input_norm,
    )
    layers.append(LayerSpec("head", "head", width, 2 * act_dim))
    return tuple(layers)


class _Network:
    def __init__(self, config, obs_dim, act_dim, prefixes, layers, state):
        self.config = config
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.prefixes = tuple(prefixes)
        self.layers = layers
        self.state = state

    def norm_layer_ids(self):
        return [
            f"{prefix}/{layer.name}"
            for prefix in self.prefixes
            for layer in self.layers
            if layer.kind == "bn"
        ]


class CriticNetwork(_Network):
    """Ensemble of `config.num_critics` identically shaped critics.

    Member `i` owns layer ids `critic{i}/...`. Output of one member is a
    `(B, atoms)` logit tensor for the categorical loss and a `(B,)` value
    for MSE.
    """

    def __init__(self, config, obs_dim, act_dim, state=None):
        prefixes = [f"critic{i}" for i in range(config.num_critics)]
        layers = critic_layers(config, obs_dim, act_dim)
        super().__init__(config, obs_dim, act_dim, prefixes, layers, state)
        if self.state is None:
            self.state = _fresh_state(self)

    @property
    def in_dim(self):
        return self.obs_dim + self.act_dim


class ActorNetwork(_Network):
    """Squashed-Gaussian policy network with layer ids `actor/...`."""

    def __init__(self, config, obs_dim, act_dim, state=None):
        layers = actor_layers(config, obs_dim, act_dim)
        super().__init__(config, obs_dim, act_dim, ["actor"], layers, state)
        if self.state is None:
            self.state = _fresh_state(self)

    @property
    def in_dim(self):
        return self.obs_dim


def _fresh_state(network):
    stats = {}
    for prefix in network.prefixes:
        for layer in network.layers:
            if layer.kind == "bn":
                stats[f"{prefix}/{layer.name}"] = (
                    torch.zeros(layer.out_dim, dtype=torch.float64),
                    torch.ones(layer.out_dim, dtype=torch.float64),
                )
    return NormState(stats)


def _init_tensors(network, generator):
    tensors = []
    for prefix in network.prefixes:
        for layer in network.layers:
            layer_id = f"{prefix}/{layer.name}"
            if layer.kind == "dense":
                weight = torch.empty(
                    layer.out_dim, layer.in_dim, dtype=torch.float64
                )
                torch.nn.init.orthogonal_(
                    weight, gain=HIDDEN_GAIN, generator=generator
                )
                tensors.append((layer_id, "weight", weight, DENSE_WEIGHT))
                tensors.append(
                    (
                        layer_id,
                        "bias",
                        torch.zeros(layer.out_dim, dtype=torch.float64),
                        DENSE_BIAS,
                    )
                )
            elif layer.kind == "head":
                weight = torch.empty(
                    layer.out_dim, layer.in_dim, dtype=torch.float64
                )
                weight.uniform_(
                    -HEAD_INIT_SCALE, HEAD_INIT_SCALE, generator=generator
                )
                tensors.append((layer_id, "weight", weight, HEAD_WEIGHT))
                tensors.append(
                    (
                        layer_id,
                        "bias",
                        torch.zeros(layer.out_dim, dtype=torch.float64),
                        HEAD_BIAS,
                    )
                )
            elif layer.kind in (BN, LN):
                tensors.append(
                    (
                        layer_id,
                        "scale",
                        torch.ones(layer.out_dim, dtype=torch.float64),
                        NORM_SCALE,
                    )
                )
                tensors.append(
                    (
                        layer_id,
                        "shift",
                        torch.zeros(layer.out_dim, dtype=torch.float64),
                        NORM_SHIFT,
                    )
                )
    return tensors


def build(config, obs_dim, act_dim, seed, dtype=torch.float64):
    """Creates critic and actor networks with freshly initialized parameters.

    Hidden dense weights are orthogonal with gain sqrt(2), output heads are
    uniform in +-3e-3, biases and norm shifts are zero and norm scales one.

    Args:
        config (ArchitectureConfig): Architecture cell.
        obs_dim (int): Observation dimension.
        act_dim (int): Action dimension.
        seed (int): Initialization seed.
        dtype (torch.dtype, optional): Parameter dtype. Defaults to
            torch.float64.

    Returns:
        tuple(CriticNetwork, ActorNetwork, ParamVector): Networks and the
            packed parameters of all critics followed by the actor.
    """
    if obs_dim < 1 or act_dim < 1:
        raise ConfigurationError("obs_dim and act_dim must be >= 1.")
    generator = torch.Generator().manual_seed(int(seed))
    critic = CriticNetwork(config, obs_dim, act_dim)
    actor = ActorNetwork(config, obs_dim, act_dim)
    tensors = _init_tensors(critic, generator)
    tensors += _init_tensors(actor, generator)
    theta = ParamVector.from_tensors(tensors, dtype=dtype)
    critic.state = critic.state.to(dtype)
    actor.state = actor.state.to(dtype)
    return critic, actor, theta


def _run_body(
    layers, prefix, params, x, mode, state, eps, ops, batch_stats
):
    for layer in layers:
        layer_id = f"{prefix}/{layer.name}"
        if layer.kind in ("dense", "head"):
            x = ops.linear(
                x, params[f"{layer_id}.weight"], params[f"{layer_id}.bias"]
            )
        elif layer.kind == "relu":
            x = ops.relu(x)
        elif layer.kind == LN:
            x = ops.layer_norm(
                x,
                params[f"{layer_id}.scale"],
                params[f"{layer_id}.shift"],
                eps=eps,
            )
        elif layer.kind == BN:
            scale = params[f"{layer_id}.scale"]
            shift = params[f"{layer_id}.shift"]
            if mode == TRAIN:
                if batch_stats is not None:
                    with torch.no_grad():
                        mean = x.detach().mean(dim=0)
                        var = ((x.detach() - mean) ** 2).mean(dim=0)
                    batch_stats[layer_id] = (mean, var)
                x = ops.batch_norm(x, scale, shift, eps=eps)
            else:
                mean, var = state[layer_id]
                x = ops.batch_norm_eval(x, scale, shift, mean, var, eps=eps)
        else:
            raise ConfigurationError(f"Unknown layer kind {layer.kind}.")
    return x


def _check_mode(mode):
    if mode not in MODES:
        raise ConfigurationError(f"Unknown mode {mode!r}.")


def critic_apply(
    net,
    params,
    sa,
    mode,
    state=None,
    members=None,
    ops=DIRECT,
    batch_stats=None,
):
    """Pure critic forward over a dict of parameter tensors.

    Args:
        net (CriticNetwork): Network structure.
        params (dict): Tensors keyed `layer_id.name`; may be a superset.
        sa (torch.Tensor): `(B, obs_dim + act_dim)` inputs.
        mode (str): `train` (batch statistics) or `eval` (running
            statistics).
        state (NormState, optional): Running statistics for eval mode.
            Defaults to `net.state`.
        members (list[int], optional): Critic members to evaluate. Defaults
            to all.
        ops (Primitives, optional): Primitive evaluator. Defaults to DIRECT.
        batch_stats (dict, optional): Receives `(mean, var)` of every BN
            layer in train mode.

    Returns:
        list[torch.Tensor]: One output per evaluated member.
    """
    _check_mode(mode)
    state = net.state if state is None else state
    members = range(len(net.prefixes)) if members is None else members
    outputs = []
    for i in members:
        out = _run_body(
            net.layers,
            net.prefixes[i],
            params,
            sa,
            mode,
            state,
            net.config.norm_eps,
            ops,
            batch_stats,
        )
        if net.config.critic_loss != CE:
            out = out.squeeze(-1)
        outputs.append(out)
    return outputs


def actor_apply(
    net, params, s, mode, state=None, ops=DIRECT, batch_stats=None
):
    """Pure actor forward returning the pre-tanh `(mean, log_std)`."""
    _check_mode(mode)
    state = net.state if state is None else state
    h = _run_body(
        net.layers,
        "actor",
        params,
        s,
        mode,
        state,
        net.config.norm_eps,
        ops,
        batch_stats,
    )
    return ops.gaussian_head(h)


def _as_params(theta):
    return theta.unpack() if isinstance(theta, ParamVector) else theta


def critic_forward(net, theta, sa, mode, state=None):
    """Evaluates every critic member.

    In train mode the BN running statistics of `net.state` (or `state`) are
    moved towards the batch statistics with momentum `config.bn_momentum`.

    Args:
        net (CriticNetwork): Network structure.
        theta (ParamVector or dict): Parameters containing the critic keys.
        sa (torch.Tensor): `(B, obs_dim + act_dim)` inputs; B >= 2 in train
            mode when BN is used.
        mode (str): `train` or `eval`.
        state (NormState, optional): Statistics to read and update. Defaults
            to `net.state`.

    Returns:
        torch.Tensor: `(num_critics, B, atoms)` logits or `(num_critics, B)`
            values.
    """
    state = net.state if state is None else state
    batch_stats = {} if mode == TRAIN else None
    outputs = critic_apply(
        net,
        _as_params(theta),
        sa,
        mode,
        state=state,
        batch_stats=batch_stats,
    )
    if batch_stats:
        state.update(batch_stats, net.config.bn_momentum)
    return torch.stack(outputs)


def actor_forward(net, theta, s, mode, state=None):
    """Evaluates the actor; see `critic_forward` for the mode semantics."""
    state = net.state if state is None else state
    batch_stats = {} if mode == TRAIN else None
    mean, log_std = actor_apply(
        net,
        _as_params(theta),
        s,
        mode,
        state=state,
        batch_stats=batch_stats,
    )
    if batch_stats:
        state.update(batch_stats, net.config.bn_momentum)
    return mean, log_std
