from dataclasses import dataclass

import torch

from xqc.utils.exceptions import ConfigurationError

MASS_TOLERANCE = 1e-9


class CategoricalSupport:
    """Evenly spaced atoms on `[v_min, v_max]`.

    Attributes:
        v_min (float): Lowest atom.
        v_max (float): Highest atom.
        atoms (torch.Tensor): `(m,)` strictly increasing atom values.
        delta (float): Spacing between neighbouring atoms.
    """

    def __init__(
        self, v_min=-5.0, v_max=5.0, num_atoms=101, dtype=torch.float64
    ):
        if num_atoms < 2:
            raise ConfigurationError("A categorical support needs >= 2 atoms.")
        if not v_min < v_max:
            raise ConfigurationError(
                "A categorical support needs v_min < v_max."
            )
        self.v_min = float(v_min)
        self.v_max = float(v_max)
        self.atoms = torch.linspace(
            self.v_min, self.v_max, num_atoms, dtype=dtype
        )
        self.delta = (self.v_max - self.v_min) / (num_atoms - 1)

    @classmethod
    def from_config(cls, config, dtype=torch.float64):
        return cls(config.v_min, config.v_max, config.atoms, dtype=dtype)

    def __len__(self):
        return self.atoms.numel()

    def __repr__(self):
        return (
            f"CategoricalSupport(v_min={self.v_min}, v_max={self.v_max}, "
            f"atoms={len(self)})"
        )

    def to(self, dtype):
        return CategoricalSupport(
            self.v_min, self.v_max, len(self), dtype=dtype
        )


@dataclass(frozen=True)
class CategoricalValueDistribution:
    """Probabilities over the atoms of a CategoricalSupport.

    Attributes:
        probs (torch.Tensor): `(m,)` or `(B, m)` nonnegative probabilities.
    """

    probs: torch.Tensor

    def __post_init__(self):
        if (self.probs < 0).any():
            raise ConfigurationError("Probabilities must be nonnegative.")
        total = self.probs.sum(dim=-1)
        if ((total - 1).abs() > MASS_TOLERANCE).any():
            raise ConfigurationError("Probabilities must sum to one.")

    @classmethod
    def from_logits(cls, logits):
        return cls(torch.softmax(logits, dim=-1))

    @classmethod
    def delta_at(cls, support, value):
        """Point mass on the atom nearest to `value`."""
        index = int(torch.argmin((support.atoms - value).abs()))
        probs = torch.zeros_like(support.atoms)
        probs[index] = 1.0
        return cls(probs)


def _probs(distribution):
    if isinstance(distribution, CategoricalValueDistribution):
        return distribution.probs
    return distribution


def mean_value(distribution, support):
    """Expected value `sum_i p_i z_i`.

    Args:
        distribution (CategoricalValueDistribution or torch.Tensor): `(m,)`
            or `(..., m)` probabilities.
        support (CategoricalSupport): Atom locations.

    Returns:
        torch.Tensor: Mean per leading index (a 0-dim tensor for a single
            distribution).
    """
    probs = _probs(distribution)
    return (probs * support.atoms.to(probs.dtype)).sum(dim=-1)


def project_target(target_support_values, weights, support):
    """Projects shifted atoms back onto the support (C51 projection).

    Every shifted atom is clamped into `[v_min, v_max]` and its mass split
    linearly between the two nearest support atoms. This is the hat-function
    form `m_j = sum_i p_i max(0, 1 - |Tz_i - z_j| / dz)`, which puts all
    mass of an atom lying exactly on a support point onto that point.

    Args:
        target_support_values (torch.Tensor): `(..., n)` shifted atom
            locations, e.g. `r + gamma (1 - done) z_i`.
        weights (CategoricalValueDistribution or torch.Tensor): `(..., n)`
            probabilities of the shifted atoms.
        support (CategoricalSupport): Target support with m atoms.

    Returns:
        torch.Tensor: `(..., m)` projected probabilities.
    """
    weights = _probs(weights)
    atoms = support.atoms.to(target_support_values.dtype)
    shifted = target_support_values.clamp(support.v_min, support.v_max)
    distance = (shifted.unsqueeze(-1) - atoms).abs() / support.delta
    split = (1 - distance).clamp_min(0)
    return (weights.unsqueeze(-1) * split).sum(dim=-2)
