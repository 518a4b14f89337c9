"""Windowed Hong-Ou-Mandel coincidence modeling for dispersed SPDC pairs.

Closed-form coincidence rate under a finite rectangular coincidence window,
a brute-force quadrature reference, global multi-dataset fitting with shared
dispersion/spectral parameters, and synthetic-campaign tooling.
"""

from .erfkernel import erf_complex, erf_real, scaled_dip_term
from .fitting import (
    Dataset,
    FitOptions,
    FitParams,
    FitResult,
    canonical_eta,
    global_loss,
    lm_fit,
    model_values,
    profile_scale,
    rmsre,
)
from .io import (
    CampaignConfig,
    DatasetFormatError,
    generate_synthetic,
    poisson_counts,
    read_dataset,
    write_dataset,
)
from .model import (
    C_MM_PER_PS,
    C_NM_PER_PS,
    ChannelParams,
    DerivedSpectral,
    DetectionParams,
    EpmCheck,
    FilterConvention,
    FilterParams,
    FwhmResult,
    HomCurve,
    SourceParams,
    broadened_rho,
    check_epm,
    coincidence_curve,
    coincidence_rate,
    derive_gammas,
    derive_spectral,
    eta_prime,
    extract_fwhm,
    filter_variance,
    group_index_bounds,
    oscillation_period,
)
from .oracle import (
    QuadratureError,
    QuadratureMethod,
    QuadratureSpec,
    beta_minus_time,
    differential_rate,
    sinc_gaussian_check,
    windowed_rate_numeric,
)

__version__ = "0.1.0"

__all__ = [
    "C_MM_PER_PS",
    "C_NM_PER_PS",
    "CampaignConfig",
    "ChannelParams",
    "Dataset",
    "DatasetFormatError",
    "DerivedSpectral",
    "DetectionParams",
    "EpmCheck",
    "FilterConvention",
    "FilterParams",
    "FitOptions",
    "FitParams",
    "FitResult",
    "FwhmResult",
    "HomCurve",
    "QuadratureError",
    "QuadratureMethod",
    "QuadratureSpec",
    "SourceParams",
    "beta_minus_time",
    "broadened_rho",
    "canonical_eta",
    "check_epm",
    "coincidence_curve",
    "coincidence_rate",
    "derive_gammas",
    "derive_spectral",
    "differential_rate",
    "erf_complex",
    "erf_real",
    "eta_prime",
    "extract_fwhm",
    "filter_variance",
    "generate_synthetic",
    "global_loss",
    "group_index_bounds",
    "lm_fit",
    "model_values",
    "oscillation_period",
    "poisson_counts",
    "profile_scale",
    "read_dataset",
    "rmsre",
    "scaled_dip_term",
    "sinc_gaussian_check",
    "windowed_rate_numeric",
    "write_dataset",
]
