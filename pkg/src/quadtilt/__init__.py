"""Diffusion-based sampling from linear and PSD quadratic tilts of a base law."""

__version__ = "0.1.0"

from .base_dist import (
    FiniteAtomBase,
    GaussianMixtureBase,
    base_from_dict,
    exact_linear_tilt,
    exact_quadratic_tilt,
    log_mgf,
    noised_log_density,
    noised_score,
    score_oracle,
)
from .budget import Budget, BudgetExceeded
from .diffusion_sampler import DiffusionSchedule, default_schedule, unadjusted_sample, unadjusted_sample_batch
from .linear_tilt import LinearTiltSpec, lin_tilt_sample, lin_tilt_sample_batch, tilted_score
from .normalization import NormalizationEstimate, estimate_normalization
from .psd_tilt import PsdTiltSpec, psd_tilt_sample, psd_tilt_sample_batch
from .reference_oracle import SampleSet, empirical_w2, exact_tv, exact_w2_discrete

__all__ = [
    "Budget",
    "BudgetExceeded",
    "DiffusionSchedule",
    "FiniteAtomBase",
    "GaussianMixtureBase",
    "LinearTiltSpec",
    "NormalizationEstimate",
    "PsdTiltSpec",
    "SampleSet",
    "base_from_dict",
    "default_schedule",
    "empirical_w2",
    "estimate_normalization",
    "exact_linear_tilt",
    "exact_quadratic_tilt",
    "exact_tv",
    "exact_w2_discrete",
    "lin_tilt_sample",
    "lin_tilt_sample_batch",
    "log_mgf",
    "noised_log_density",
    "noised_score",
    "psd_tilt_sample",
    "psd_tilt_sample_batch",
    "score_oracle",
    "tilted_score",
    "unadjusted_sample",
    "unadjusted_sample_batch",
]
