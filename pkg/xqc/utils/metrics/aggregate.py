import numpy as np
from scipy import integrate, stats

from xqc.utils.exceptions import PreconditionError

CONFIDENCE = 0.9


def iqm(values, axis=None):
    """Interquartile mean: mean of the middle 50% of values by rank.

    `floor(N / 4)` values are dropped from each end, so for N not divisible
    by four slightly more than half the values are kept.
    """
    values = np.asarray(values, dtype=np.float64)
    if axis is None:
        values = values.reshape(-1)
        axis = 0
    return stats.trim_mean(values, 0.25, axis=axis)


def aggregate_iqm(values, bootstrap=2000, seed=0, confidence=CONFIDENCE):
    """IQM with a stratified percentile bootstrap confidence interval.

    Args:
        values (array-like): `(runs,)` scores, or `(tasks, runs)` scores
            where each task is a stratum resampled independently.
        bootstrap (int, optional): Number of bootstrap resamples. Defaults
            to 2000.
        seed (int, optional): Resampling seed. Defaults to 0.
        confidence (float, optional): Interval mass. Defaults to 0.9.

    Returns:
        tuple(float, float, float): `(iqm, ci_low, ci_high)`; the bounds
            always bracket the point estimate.
    """
    values = np.asarray(values, dtype=np.float64)
    strata = values.reshape(1, -1) if values.ndim == 1 else values
    if strata.size < 3:
        raise PreconditionError("IQM needs at least 3 values.")
    point = float(iqm(strata))
    if bootstrap <= 0:
        return point, point, point

    rng = np.random.default_rng(seed)
    resampled = []
    for stratum in strata:
        indices = rng.integers(0, len(stratum), size=(bootstrap, len(stratum)))
        resampled.append(stratum[indices])
    samples = iqm(np.concatenate(resampled, axis=1), axis=1)
    tail = (1 - confidence) / 2 * 100
    low, high = np.percentile(samples, [tail, 100 - tail])
    return point, float(min(low, point)), float(max(high, point))


def auc(curve, steps=None):
    """Area under a normalized return curve over normalized time.

    Args:
        curve (array-like): Normalized returns at evaluation points.
        steps (array-like, optional): Evaluation steps. Defaults to evenly
            spaced points.

    Returns:
        float: Trapezoidal area over steps rescaled to [0, 1]; a single
            point yields its value.
    """
    curve = np.asarray(curve, dtype=np.float64)
    assert curve.size > 0, "Curve must be non-empty."
    if curve.size == 1:
        return float(curve[0])
    if steps is None:
        steps = np.arange(curve.size, dtype=np.float64)
    steps = np.asarray(steps, dtype=np.float64)
    span = steps[-1] - steps[0]
    assert span > 0, "Steps must be increasing."
    return float(integrate.trapezoid(curve, (steps - steps[0]) / span))


def relative_spread(values):
    """Interquartile range divided by the absolute median."""
    values = np.asarray(values, dtype=np.float64)
    q25, median, q75 = np.percentile(values, [25, 50, 75])
    if median == 0:
        return float("inf") if q75 > q25 else 0.0
    return float((q75 - q25) / abs(median))
