"""Binary checkpoints: magic, JSON header, little-endian raw tensors.

File layout::

    b"XQC1" | uint32 header length | header (utf-8 JSON) | data

The header stores the config hash, dtype, step, the parameter layout and
the offsets of every BN running statistic inside the data block.
"""
import json
import struct
from pathlib import Path

import numpy as np
import torch

from xqc.utils.diffcore.params import LayoutEntry, ParamVector
from xqc.utils.exceptions import ConfigurationError
from xqc.utils.netlib.networks import NormState

MAGIC = b"XQC1"

_DTYPES = {
    torch.float64: "<f8",
    torch.float32: "<f4",
}
_TORCH_DTYPES = {code: dtype for dtype, code in _DTYPES.items()}


def _to_bytes(tensor, code):
    return tensor.detach().cpu().numpy().astype(code, copy=False).tobytes()


def save_checkpoint(path, config, theta, states, step=0):
    """Writes parameters and running statistics to `path`.

    Args:
        path (str or Path): Destination file.
        config (ArchitectureConfig): Config the parameters belong to.
        theta (ParamVector): Parameters.
        states (NormState or list[NormState]): Running statistics.
        step (int, optional): Environment step. Defaults to 0.
    """
    if isinstance(states, NormState):
        states = [states]
    stats = NormState()
    for state in states:
        stats = stats.merge(state)
    code = _DTYPES[theta.dtype]

    chunks = [_to_bytes(theta.values, code)]
    offset = len(theta)
    stat_table = []
    for layer_id in sorted(stats.keys()):
        mean, var = stats[layer_id]
        stat_table.append([layer_id, int(mean.numel()), offset])
        chunks.append(_to_bytes(mean.to(theta.dtype), code))
        chunks.append(_to_bytes(var.to(theta.dtype), code))
        offset += 2 * mean.numel()

    header = {
        "config_hash": config.config_hash(),
        "cell": config.cell,
        "dtype": code,
        "step": int(step),
        "layout": [
            [e.layer_id, e.name, list(e.shape), e.offset, e.role]
            for e in theta.layout
        ],
        "stats": stat_table,
        "size": offset,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for chunk in chunks:
            f.write(chunk)


def load_checkpoint(path, config=None):
    """Reads a checkpoint written by `save_checkpoint`.

    Args:
        path (str or Path): Checkpoint file.
        config (ArchitectureConfig, optional): If given, the stored config
            hash must match.

    Returns:
        dict: `theta` (ParamVector), `state` (NormState), `step` (int),
            `config_hash` (str) and `cell` (str).
    """
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise ConfigurationError(f"{path} is not an XQC checkpoint.")
    (header_len,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    if config is not None and header["config_hash"] != config.config_hash():
        raise ConfigurationError(
            f"{path} was written for a different config "
            f"({header['cell']})."
        )
    code = header["dtype"]
    data = np.frombuffer(raw, dtype=code, offset=8 + header_len).copy()
    if data.size != header["size"]:
        raise ConfigurationError(f"{path} is truncated.")
    values = torch.from_numpy(data).to(_TORCH_DTYPES[code])

    layout = [
        LayoutEntry(layer_id, name, tuple(shape), offset, role)
        for layer_id, name, shape, offset, role in header["layout"]
    ]
    size = layout[-1].stop if layout else 0
    theta = ParamVector(values[:size].clone(), layout)
    stats = {}
    for layer_id, dim, offset in header["stats"]:
        stats[layer_id] = (
            values[offset : offset + dim].clone(),
            values[offset + dim : offset + 2 * dim].clone(),
        )
    return {
        "theta": theta,
        "state": NormState(stats),
        "step": header["step"],
        "config_hash": header["config_hash"],
        "cell": header["cell"],
    }
