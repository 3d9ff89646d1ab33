from xqc.utils.metrics.aggregate import (
    aggregate_iqm,
    auc,
    iqm,
    relative_spread,
)
from xqc.utils.metrics.plasticity import PlasticityRecord, plasticity_probe
from xqc.utils.metrics.spectra import (
    ConditioningSummary,
    SpectrumEstimate,
    conditioning_summary,
    critic_hessian_oracle,
    lanczos_spectrum,
)

__all__ = [
    "ConditioningSummary",
    "PlasticityRecord",
    "SpectrumEstimate",
    "aggregate_iqm",
    "auc",
    "conditioning_summary",
    "critic_hessian_oracle",
    "iqm",
    "lanczos_spectrum",
    "plasticity_probe",
    "relative_spread",
]
