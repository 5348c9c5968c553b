"""Threshold-control equilibria for one-dimensional diffusions.

Closed-form candidate construction (reflection and exploding-rate
thresholds for the quadratic-cost GBM case studies), a generic numerical
verifier for the equilibrium conditions, Feller boundary classification of
the controlled process, and Monte Carlo cross-validation of the cost
criteria.  See the README for the command-line entry points.
"""

from .model import (
    DiffusionModel,
    DomainError,
    GeneralisedThreshold,
    InsufficientDataError,
    MildThreshold,
    NumericalError,
    ParameterError,
    RateFunction,
    RegionPartition,
    RunningCost,
    StrongThreshold,
    ThreshEqError,
    WeightedDiscount,
    regions_of_strategy,
    validate_strategy,
    wdf_eval,
    wdf_moments,
)
from .strong import StrongCandidate, build_strong, gamma, regime_indicator, v_strong_eval
from .mild import MildCandidate, MildInvalidity, build_mild, u_star_eval, v_mild_eval
from .verify import (
    ValueBundle,
    VerificationVerdict,
    bundle_from_mild,
    bundle_from_strong,
    deviation_gain_jump,
    deviation_gain_rate,
    ode_oracle_solve,
    smooth_fit_check,
    verify_conditions,
)
from .scale import BoundaryReport, ScaleFunction, Verdict, feller_classify_upper, scale_eval
from .simulate import CostEstimate, PathRecord, SimConfig, estimate_J, estimate_w, simulate_path

__version__ = "0.1.0"

__all__ = [
    "DiffusionModel",
    "WeightedDiscount",
    "RunningCost",
    "RateFunction",
    "StrongThreshold",
    "MildThreshold",
    "GeneralisedThreshold",
    "RegionPartition",
    "ThreshEqError",
    "DomainError",
    "ParameterError",
    "InsufficientDataError",
    "NumericalError",
    "regions_of_strategy",
    "validate_strategy",
    "wdf_eval",
    "wdf_moments",
    "StrongCandidate",
    "build_strong",
    "gamma",
    "regime_indicator",
    "v_strong_eval",
    "MildCandidate",
    "MildInvalidity",
    "build_mild",
    "u_star_eval",
    "v_mild_eval",
    "ValueBundle",
    "VerificationVerdict",
    "bundle_from_strong",
    "bundle_from_mild",
    "verify_conditions",
    "smooth_fit_check",
    "deviation_gain_jump",
    "deviation_gain_rate",
    "ode_oracle_solve",
    "ScaleFunction",
    "BoundaryReport",
    "Verdict",
    "feller_classify_upper",
    "scale_eval",
    "SimConfig",
    "PathRecord",
    "CostEstimate",
    "simulate_path",
    "estimate_w",
    "estimate_J",
    "__version__",
]
