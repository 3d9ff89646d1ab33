import hashlib
from dataclasses import asdict, dataclass, fields, replace

from xqc.utils.exceptions import ConfigurationError

BN = "bn"
LN = "ln"
NONE = "none"
NORMS = (BN, LN, NONE)

CE = "ce"
MSE = "mse"
CRITIC_LOSSES = (CE, MSE)

NORM_ACT = "norm_act"
ACT_NORM = "act_norm"
BLOCK_ORDERS = (NORM_ACT, ACT_NORM)

MATRIX = "matrix"
ROW = "row"
PROJECTIONS = (MATRIX, ROW)

_NORM_ALIASES = {"bn": BN, "ln": LN, "none": NONE, "dense": NONE}
_WN_ALIASES = {"wn": True, "nown": False, "no-wn": False, "!wn": False}


@dataclass(frozen=True)
class ArchitectureConfig:
    """One cell of the {BN, LN, Dense} x {WN, no WN} x {CE, MSE} matrix.

    Attributes:
        norm (str): Normalization layer kind, one of `bn`, `ln`, `none`.
        weight_projection (bool): Project hidden dense weights to the unit
            sphere after every gradient step.
        critic_loss (str): `ce` (categorical) or `mse` (scalar).
        hidden_dim (int): Critic hidden width.
        num_blocks (int): Critic hidden blocks.
        atoms (int): Number of categorical atoms.
        v_min (float): Lower end of the categorical support.
        v_max (float): Upper end of the categorical support.
        actor_hidden_dim (int): Actor hidden width.
        actor_num_blocks (int): Actor hidden blocks.
        block_order (str): `norm_act` (Linear, norm, ReLU) or `act_norm`
            (Linear, ReLU, norm).
        projection (str): `matrix` (Frobenius norm per layer) or `row`
            (per output neuron).
        bn_momentum (float): Momentum of BN running statistics.
        norm_eps (float): Variance floor inside normalization layers.
        actor_input_norm (bool): Apply input BN to the actor as well.
        num_critics (int): Number of independent critics.
    """

    norm: str = BN
    weight_projection: bool = True
    critic_loss: str = CE
    hidden_dim: int = 512
    num_blocks: int = 4
    atoms: int = 101
    v_min: float = -5.0
    v_max: float = 5.0
    actor_hidden_dim: int = 256
    actor_num_blocks: int = 4
    block_order: str = NORM_ACT
    projection: str = MATRIX
    bn_momentum: float = 0.01
    norm_eps: float = 1e-5
    actor_input_norm: bool = True
    num_critics: int = 2

    def __post_init__(self):
        if self.norm not in NORMS:
            raise ConfigurationError(f"Unknown norm {self.norm!r}.")
        if self.critic_loss not in CRITIC_LOSSES:
            raise ConfigurationError(
                f"Unknown critic loss {self.critic_loss!r}."
            )
        if self.block_order not in BLOCK_ORDERS:
            raise ConfigurationError(
                f"Unknown block order {self.block_order!r}."
            )
        if self.projection not in PROJECTIONS:
            raise ConfigurationError(
                f"Unknown projection {self.projection!r}."
            )
        if self.hidden_dim < 1 or self.num_blocks < 1:
            raise ConfigurationError("hidden_dim and num_blocks must be >= 1.")
        if self.actor_hidden_dim < 1 or self.actor_num_blocks < 1:
            raise ConfigurationError(
                "actor_hidden_dim and actor_num_blocks must be >= 1."
            )
        if self.critic_loss == CE:
            if self.atoms < 2:
                raise ConfigurationError(
                    "A categorical critic needs >= 2 atoms."
                )
            if not self.v_min < self.v_max:
                raise ConfigurationError("Support needs v_min < v_max.")
        if not 0 < self.bn_momentum <= 1:
            raise ConfigurationError("bn_momentum must lie in (0, 1].")
        if self.num_critics < 1:
            raise ConfigurationError("num_critics must be >= 1.")

    @classmethod
    def from_cell(cls, cell, **overrides):
        """Creates a config from a cell string such as `bn,wn,ce`.

        Args:
            cell (str): Comma separated norm, projection and loss tokens.
                Norm is one of `bn`, `ln`, `dense`/`none`; projection is `wn`
                or `nown`; loss is `ce` or `mse`.
            **overrides: Further ArchitectureConfig fields.

        Returns:
            ArchitectureConfig: Parsed config.
        """
        tokens = [token.strip().lower() for token in cell.split(",")]
        if len(tokens) != 3:
            raise ConfigurationError(
                f"Cell {cell!r} must have three tokens, e.g. 'bn,wn,ce'."
            )
        norm, wn, loss = tokens
        if norm not in _NORM_ALIASES or wn not in _WN_ALIASES:
            raise ConfigurationError(f"Cannot parse cell {cell!r}.")
        return cls(
            norm=_NORM_ALIASES[norm],
            weight_projection=_WN_ALIASES[wn],
            critic_loss=loss,
            **overrides,
        )

    @property
    def cell(self):
        norm = "dense" if self.norm == NONE else self.norm
        wn = "wn" if self.weight_projection else "nown"
        return f"{norm},{wn},{self.critic_loss}"

    @property
    def output_dim(self):
        return self.atoms if self.critic_loss == CE else 1

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)

    def config_hash(self):
        """SHA-256 hex digest of the canonical `key=value` rendering."""
        text = "\n".join(
            f"{field.name}={getattr(self, field.name)!r}"
            for field in fields(self)
        )
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def all_cells(**overrides):
    """Returns the 12 cells of the architecture matrix in a fixed order."""
    return [
        ArchitectureConfig(
            norm=norm, weight_projection=wn, critic_loss=loss, **overrides
        )
        for norm in (BN, LN, NONE)
        for wn in (True, False)
        for loss in (CE, MSE)
    ]


def ablation_cells(**overrides):
    """Returns full XQC and its three single-component ablations."""
    return {
        "xqc": ArchitectureConfig(**overrides),
        "xqc-ln": ArchitectureConfig(norm=LN, **overrides),
        "xqc-mse": ArchitectureConfig(critic_loss=MSE, **overrides),
        "xqc-nown": ArchitectureConfig(weight_projection=False, **overrides),
    }
