"""Numerical tests for directional and tangential derivatives of black-box maps."""

__version__ = "0.1.0"

from .blackbox import BlackBoxFn, compose, from_callable
from .estimators import (
    DEFAULT_OPTIONS,
    ChainResult,
    ComposeReport,
    DerivativeEstimate,
    DirectionProfile,
    Options,
    Verdict,
    chain_condition,
    compose_and_check,
    cone_growth,
    estimate_directional,
    estimate_tangential,
    per_direction_profile,
    two_point_cone_lipschitz,
)
from .linalg import DimensionMismatch, LinearMap, Subspace, dist_to_subspace, min_gain, operator_norm, orthonormalize, project
from .paths import (
    PiecewisePath,
    build_path,
    interp_deriv,
    interp_eval,
    pullback_test,
    random_admissible_path,
    straightened_directional,
    straightening_map,
)
from .sampling import InsufficientSamples, ScaleSchedule, cone_cloud, direction_mesh, schedule_scales

__all__ = [
    "BlackBoxFn", "compose", "from_callable",
    "DEFAULT_OPTIONS", "ChainResult", "ComposeReport", "DerivativeEstimate", "DirectionProfile",
    "Options", "Verdict", "chain_condition", "compose_and_check", "cone_growth",
    "estimate_directional", "estimate_tangential", "per_direction_profile", "two_point_cone_lipschitz",
    "DimensionMismatch", "LinearMap", "Subspace", "dist_to_subspace", "min_gain", "operator_norm",
    "orthonormalize", "project",
    "PiecewisePath", "build_path", "interp_deriv", "interp_eval", "pullback_test",
    "random_admissible_path", "straightened_directional", "straightening_map",
    "InsufficientSamples", "ScaleSchedule", "cone_cloud", "direction_mesh", "schedule_scales",
]
