import torch

from xqc.utils.diffcore.params import DENSE_WEIGHT, ParamVector
from xqc.utils.exceptions import DegenerateWeightError
from xqc.utils.netlib.config import MATRIX, PROJECTIONS, ROW


def _tolerance(dtype):
    return 1e-12 if dtype == torch.float64 else 1e-6


def _project_(flat, layout, mode):
    tolerance = _tolerance(flat.dtype)
    for entry in layout:
        if entry.role != DENSE_WEIGHT:
            continue
        weight = ParamVector.view(flat, entry)
        if mode == MATRIX:
            norm = torch.linalg.vector_norm(weight)
        else:
            norm = torch.linalg.vector_norm(weight, dim=1, keepdim=True)
        if not torch.isfinite(norm).all() or (norm == 0).any():
            raise DegenerateWeightError(
                f"Cannot project {entry.key}: weight norm is zero or "
                "non-finite."
            )
        # Already unit-norm layers are left untouched so repeated
        # projection is bit-exact.
        if ((norm - 1).abs() <= tolerance).all():
            continue
        weight.div_(norm)


def project_weights(theta, mode=MATRIX):
    """Rescales every hidden dense weight to unit norm.

    Biases, norm parameters and output heads are untouched.

    Args:
        theta (ParamVector): Parameters.
        mode (str, optional): `matrix` for the Frobenius norm of each layer,
            `row` for the norm of each output neuron. Defaults to `matrix`.

    Returns:
        ParamVector: Projected copy.

    Raises:
        DegenerateWeightError: If a projected weight has zero norm.
    """
    assert mode in PROJECTIONS, f"Unknown projection mode {mode}."
    projected = theta.clone()
    with torch.no_grad():
        _project_(projected.values, projected.layout, mode)
    return projected


def project_weights_(theta, mode=MATRIX):
    """In-place variant of `project_weights` used inside training steps."""
    assert mode in PROJECTIONS, f"Unknown projection mode {mode}."
    with torch.no_grad():
        _project_(theta.values, theta.layout, mode)
    return theta


def is_projected(theta, mode=MATRIX, tolerance=None):
    """Whether every hidden dense weight has unit norm."""
    if tolerance is None:
        tolerance = _tolerance(theta.dtype) * 10
    for entry in theta.entries(DENSE_WEIGHT):
        weight = theta[entry.key]
        if mode == ROW:
            norm = torch.linalg.vector_norm(weight, dim=1)
        else:
            norm = torch.linalg.vector_norm(weight)
        if ((norm - 1).abs() > tolerance).any():
            return False
    return True
