from dataclasses import dataclass

import torch

from xqc.utils.exceptions import ConfigurationError

# Roles of layout entries. Only hidden dense weights are scale-invariant.
DENSE_WEIGHT = "dense_weight"
DENSE_BIAS = "dense_bias"
HEAD_WEIGHT = "head_weight"
HEAD_BIAS = "head_bias"
NORM_SCALE = "norm_scale"
NORM_SHIFT = "norm_shift"
OTHER = "other"


@dataclass(frozen=True)
class LayoutEntry:
    """Position of one parameter tensor inside a flat parameter vector.

    Attributes:
        layer_id (str): Identifier of the owning layer, e.g. `critic0/dense1`.
        name (str): Name of the tensor within the layer, e.g. `weight`.
        shape (tuple): Shape of the tensor.
        offset (int): Start index inside the flat vector.
        role (str): Role of the tensor (see module constants).
    """

    layer_id: str
    name: str
    shape: tuple
    offset: int
    role: str = OTHER

    @property
    def key(self):
        return f"{self.layer_id}.{self.name}"

    @property
    def size(self):
        size = 1
        for dim in self.shape:
            size *= dim
        return size

    @property
    def stop(self):
        return self.offset + self.size


class ParamVector:
    """Flattened trainable parameters with a layout map back to layers.

    The flat tensor is the single source of truth; `unpack()` returns views
    into it, so writes through views are visible in `values`.

    Attributes:
        values (torch.Tensor): 1-D tensor of parameters.
        layout (tuple[LayoutEntry]): Ordered layout records.
    """

    def __init__(self, values, layout):
        layout = tuple(layout)
        assert values.dim() == 1, "ParamVector values must be one-dimensional."
        position = 0
        for entry in layout:
            if entry.offset != position:
                raise ConfigurationError(
                    f"Layout entry {entry.key} starts at {entry.offset}, "
                    f"expected {position} (gap or overlap)."
                )
            position = entry.stop
        if position != values.numel():
            raise ConfigurationError(
                f"Layout covers {position} values but vector has "
                f"{values.numel()}."
            )
        self.values = values
        self.layout = layout
        self._index = {entry.key: entry for entry in layout}

    @classmethod
    def from_tensors(cls, tensors, dtype=torch.float64):
        """Packs an ordered sequence of named tensors.

        Args:
            tensors (list[tuple]): `(layer_id, name, tensor, role)` tuples in
                packing order.
            dtype (torch.dtype, optional): Dtype of the flat vector.
                Defaults to torch.float64.

        Returns:
            ParamVector: Packed parameters.
        """
        layout = []
        chunks = []
        offset = 0
        for layer_id, name, tensor, role in tensors:
            entry = LayoutEntry(
                layer_id, name, tuple(tensor.shape), offset, role
            )
            layout.append(entry)
            chunks.append(tensor.detach().reshape(-1).to(dtype))
            offset = entry.stop
        if chunks:
            values = torch.cat(chunks)
        else:
            values = torch.zeros(0, dtype=dtype)
        return cls(values, layout)

    def __len__(self):
        return self.values.numel()

    def __contains__(self, key):
        return key in self._index

    def __getitem__(self, key):
        return self.view(self.values, self._index[key])

    def __repr__(self):
        return (
            f"ParamVector(dim={len(self)}, tensors={len(self.layout)}, "
            f"dtype={self.values.dtype})"
        )

    @property
    def dtype(self):
        return self.values.dtype

    @staticmethod
    def view(flat, entry):
        return flat[entry.offset : entry.stop].view(entry.shape)

    def entry(self, key):
        return self._index[key]

    def keys(self):
        return [entry.key for entry in self.layout]

    def unpack(self, flat=None):
        """Returns a dict of tensor views keyed by `layer_id.name`.

        Args:
            flat (torch.Tensor, optional): Flat tensor with this vector's
                layout to unpack instead of `values`, e.g. a tangent or a
                functionally transformed input. Defaults to None.

        Returns:
            dict: Views into the flat tensor.
        """
        flat = self.values if flat is None else flat
        if flat.shape[-1] != len(self):
            raise ConfigurationError(
                f"Cannot unpack {flat.shape[-1]} values with a layout of "
                f"{len(self)}."
            )
        return {entry.key: self.view(flat, entry) for entry in self.layout}

    def pack(self, tensors):
        """Packs a dict of tensors back into a ParamVector with this layout.

        Args:
            tensors (dict): Tensors keyed by `layer_id.name`.

        Returns:
            ParamVector: New vector with this layout.
        """
        missing = set(self._index) - set(tensors)
        if missing:
            raise ConfigurationError(f"Missing tensors: {sorted(missing)}.")
        values = torch.cat(
            [
                tensors[entry.key].reshape(-1).to(self.dtype)
                for entry in self.layout
            ]
        )
        return ParamVector(values, self.layout)

    def with_values(self, values):
        return ParamVector(values, self.layout)

    def clone(self):
        return ParamVector(self.values.detach().clone(), self.layout)

    def to(self, dtype):
        return ParamVector(self.values.detach().to(dtype), self.layout)

    def select(self, prefix):
        """Copies the sub-vector of entries whose layer id starts with prefix.

        Args:
            prefix (str): Layer id prefix, e.g. `critic` or `actor`.

        Returns:
            ParamVector: Independent copy with rebased offsets.
        """
        return ParamVector.from_tensors(
            [
                (e.layer_id, e.name, self.view(self.values, e), e.role)
                for e in self.layout
                if e.layer_id.startswith(prefix)
            ],
            dtype=self.dtype,
        )

    @classmethod
    def concat(cls, *vectors):
        """Concatenates vectors with disjoint keys into one."""
        return cls.from_tensors(
            [
                (e.layer_id, e.name, vector.view(vector.values, e), e.role)
                for vector in vectors
                for e in vector.layout
            ],
            dtype=vectors[0].dtype,
        )

    def entries(self, role=None):
        if role is None:
            return list(self.layout)
        return [entry for entry in self.layout if entry.role == role]

    def norm(self):
        return float(torch.linalg.vector_norm(self.values))

    def group_norms(self, role=DENSE_WEIGHT):
        """Frobenius norms of every tensor with the given role.

        Args:
            role (str, optional): Role to select. Defaults to DENSE_WEIGHT.

        Returns:
            dict: Norms keyed by tensor key.
        """
        return {
            entry.key: float(
                torch.linalg.vector_norm(self.view(self.values, entry))
            )
            for entry in self.entries(role)
        }

    def zeros_like(self):
        return ParamVector(torch.zeros_like(self.values), self.layout)

    def same_layout(self, other):
        return self.layout == other.layout
