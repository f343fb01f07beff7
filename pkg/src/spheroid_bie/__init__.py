"""Spectral boundary integral operators on suspensions of prolate and oblate spheroids.

Layer potentials of a spheroid are diagonal in spheroidal harmonics, so
single, double and normal-derivative layers are applied on the surface and
evaluated arbitrarily close to it with spectral accuracy.
"""
__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    FocalDegeneracy,
    GMRESStagnation,
    LegendreOverflow,
    LentzNoConvergence,
    NoConvergence,
    OverlapDetected,
    RegionMismatch,
    SpheroidError,
    TargetInsideParticle,
    WronskianViolation,
)
from .geometry import Kind, SpheroidShape, pair_distance, point_distance, surface_area  # noqa: E402
from .engine import SuspensionProblem, eval_at_targets, eval_gradient_at_targets, matvec  # noqa: E402
from .laplace import Operator, apply_on_surface, multipliers  # noqa: E402
from .solver import BVPSpec, Completion, condition_study, heuristic_eta, solve  # noqa: E402
from .stokes import stokes_pressure, stokes_single_layer  # noqa: E402

__all__ = [
    "__version__",
    "SpheroidError", "ConfigError", "FocalDegeneracy", "GMRESStagnation", "LegendreOverflow",
    "LentzNoConvergence", "NoConvergence", "OverlapDetected", "RegionMismatch",
    "TargetInsideParticle", "WronskianViolation",
    "Kind", "SpheroidShape", "pair_distance", "point_distance", "surface_area",
    "SuspensionProblem", "eval_at_targets", "eval_gradient_at_targets", "matvec",
    "Operator", "apply_on_surface", "multipliers",
    "BVPSpec", "Completion", "condition_study", "heuristic_eta", "solve",
    "stokes_single_layer", "stokes_pressure",
]
