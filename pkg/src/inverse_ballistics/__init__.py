"""Optimal barrel direction for an unguided shell under a nonconvex visibility cone.

The target M is projected onto the zero set of an epsilon-Lipschitz residual
by an expanding-sphere method.  Task I keeps the target on the horizon plane;
tasks II.a and II.b place it in space, and II.b also requires that terrain
blocks neither the line of sight nor the trajectory.
"""
from types import ModuleType as _ModuleType

from .constraints import (
    ClearanceGrid,
    ConstantBound,
    Scenario,
    SineBound,
    TableBound,
    TerrainField,
    VisibilityCone,
    WeightSet,
    box_terrain,
    cone_e1,
    cone_e2,
    cone_violation,
    flat_floor,
    residual_F,
    segment_clearance,
    terrain_eval,
    trajectory_clearance,
    validate_declared_lipschitz,
)
from .enclosing import chebyshev_center, smallest_enclosing_circle
from .errors import (
    BallisticsError,
    ConfigurationError,
    DomainError,
    InfeasibleSphereError,
    InvalidScenarioError,
    OutsideReachableSetError,
    UnreachableError,
)
from .geometry import (
    BranchId,
    GravityContext,
    ReachableSetParams,
    ShotAngles,
    Task,
    azimuth,
    dimensionless_speed,
    envelope_height,
    impact_point_planar,
    in_reachable_set,
    inverse_elevation_planar,
    inverse_elevation_spatial,
    trajectory_point,
    velocity_from_angles,
)
from .lipschitz import EpsLipBound, lip_azimuth, lip_cone, lip_elevation, lip_residual, tau_root
from .solver import SolveResult, SolverParams, SolveStatus, project_branch, solve, sphere_argmin

__version__ = "1.0.0"

__all__ = [name for name, obj in dict(globals()).items() if not name.startswith("_") and not isinstance(obj, _ModuleType)]
