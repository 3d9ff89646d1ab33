from xqc.utils.distcrit.categorical import (
    CategoricalSupport,
    CategoricalValueDistribution,
    mean_value,
    project_target,
)
from xqc.utils.distcrit.losses import (
    aggregate_targets,
    aggregate_values,
    categorical_target,
    ce_bellman_loss,
    ce_logit_gradient,
    mse_bellman_loss,
    mse_gradient,
    scalar_target,
)

__all__ = [
    "CategoricalSupport",
    "CategoricalValueDistribution",
    "aggregate_targets",
    "aggregate_values",
    "categorical_target",
    "ce_bellman_loss",
    "ce_logit_gradient",
    "mean_value",
    "mse_bellman_loss",
    "mse_gradient",
    "project_target",
    "scalar_target",
]
