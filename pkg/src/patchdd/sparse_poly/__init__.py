from .basis import design_matrix, eval_basis, legendre01
from .indices import (
    IndexSetError,
    MultiIndexSet,
    is_monotone,
    margin,
    monotone_envelope,
    reduced_margin,
    select_bulk,
)
from .regression import InstabilityError, LeastSquaresFit, LeverageSaturationError, loo_errors, ls_fit
from .adaptive import AdaptiveParams, AdaptiveResult, PceApprox, SampleLog, UniformSampler, adaptive_fit

__all__ = [
    "design_matrix", "eval_basis", "legendre01",
    "IndexSetError", "MultiIndexSet", "is_monotone", "margin", "monotone_envelope",
    "reduced_margin", "select_bulk",
    "InstabilityError", "LeastSquaresFit", "LeverageSaturationError", "loo_errors", "ls_fit",
    "AdaptiveParams", "AdaptiveResult", "PceApprox", "SampleLog", "UniformSampler", "adaptive_fit",
]
