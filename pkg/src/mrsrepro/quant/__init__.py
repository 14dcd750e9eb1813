"""Quantification engines: multi-start time-domain and spline-regularized frequency-domain."""

from ..signals import FidSignal, MacromoleculeModel, MetaboliteBasis, SpectrometerContext
from .config import (
    FREQ_DOMAIN,
    METHOD_IDS,
    PRESETS,
    TIME_DOMAIN,
    FitResult,
    MethodConfig,
    ParameterBounds,
    method_config,
    split_method_id,
)
from .crb import compute_crb, estimate_noise
from .freqdomain import IllConditionedBaselineError, fit_freq_domain
from .model import FidModel, ModelParameters, ParameterLayout, model_eval, residuals
from .timedomain import fit_time_domain


def quantify(observed: FidSignal, basis: MetaboliteBasis, mm: MacromoleculeModel,
             cfg: MethodConfig, seed: int, execution_index: int = 0,
             ctx: SpectrometerContext | None = None) -> FitResult:
    """Run whichever engine ``cfg`` names."""
    if cfg.engine == TIME_DOMAIN:
        return fit_time_domain(observed, basis, mm, cfg, seed, execution_index)
    return fit_freq_domain(observed, basis, mm, cfg, ctx, seed, execution_index)


__all__ = [
    "FREQ_DOMAIN", "METHOD_IDS", "PRESETS", "TIME_DOMAIN", "FidModel", "FitResult",
    "IllConditionedBaselineError", "MethodConfig", "ModelParameters", "ParameterBounds",
    "ParameterLayout", "compute_crb", "estimate_noise", "fit_freq_domain", "fit_time_domain",
    "method_config", "model_eval", "quantify", "residuals", "split_method_id",
]
