"""Vacuum trajectory geometry in the gun-centred frame.

The gun sits at the origin, ``Oxy`` is the true horizon plane and ``z`` points
up.  A shot is given by the barrel azimuth ``phi`` and elevation ``psi``.  The
only physical parameter is the squared dimensionless speed ``v2 = v0**2 / g``,
which has the dimension of length and equals the maximum range on the plane.

Every function here accepts scalars or numpy arrays and returns the same.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import NamedTuple, Optional

import numpy as np

from .errors import DomainError, InvalidScenarioError, OutsideReachableSetError, UnreachableError

STANDARD_GRAVITY = 9.80665

__all__ = [
    "STANDARD_GRAVITY",
    "Task",
    "BranchId",
    "GravityContext",
    "ShotAngles",
    "ImpactPoint2",
    "ImpactPoint3",
    "ReachableSetParams",
    "dimensionless_speed",
    "velocity_from_angles",
    "impact_point_planar",
    "trajectory_point",
    "azimuth",
    "inverse_elevation_planar",
    "inverse_elevation_spatial",
    "elevation_radicand",
    "envelope_height",
    "in_reachable_set",
]


class Task(str, Enum):
    PLANAR = "I"
    SPATIAL = "II.a"
    TERRAIN = "II.b"

    @property
    def dim(self) -> int:
        return 2 if self is Task.PLANAR else 3

    @property
    def family(self) -> str:
        """``"I"`` or ``"II"``: which forward map and reachable set apply."""
        return "I" if self is Task.PLANAR else "II"

    @classmethod
    def parse(cls, value: "str | Task") -> "Task":
        if isinstance(value, Task):
            return value
        key = str(value).strip().replace("б", "b").replace("а", "a")
        for member in cls:
            if member.value.lower() == key.lower():
                return member
        raise InvalidScenarioError(f"unknown task {value!r}; expected one of I, II.a, II.b")


class BranchId(IntEnum):
    """Selection of the two-valued inverse map: low (1) or high (2) elevation."""

    LOW = 1
    HIGH = 2

    @property
    def sign(self) -> int:
        return -1 if self is BranchId.LOW else 1


@dataclass(frozen=True)
class GravityContext:
    v0: float
    g: float = STANDARD_GRAVITY
    v: float = field(init=False)
    v2: float = field(init=False)

    def __post_init__(self):
        if not (self.v0 > 0 and self.g > 0) or not (math.isfinite(self.v0) and math.isfinite(self.g)):
            raise InvalidScenarioError(f"muzzle speed and gravity must be positive, got v0={self.v0}, g={self.g}")
        object.__setattr__(self, "v", self.v0 / math.sqrt(self.g))
        object.__setattr__(self, "v2", self.v0 * self.v0 / self.g)

    @property
    def max_range(self) -> float:
        """Maximum range on the horizon plane (attained at 45 degrees)."""
        return self.v2


def dimensionless_speed(v0: float, g: float = STANDARD_GRAVITY) -> GravityContext:
    return GravityContext(float(v0), float(g))


@dataclass(frozen=True)
class ShotAngles:
    """Barrel direction in radians; ``phi`` is kept in (-pi, pi]."""

    phi: float
    psi: float

    def __post_init__(self):
        psi = float(self.psi)
        if not -math.pi / 2 < psi < math.pi / 2:
            raise DomainError(f"elevation must lie in (-pi/2, pi/2), got {psi}")
        phi = math.remainder(float(self.phi), 2 * math.pi)
        if phi <= -math.pi:
            phi += 2 * math.pi
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", psi)

    @classmethod
    def from_degrees(cls, phi_deg: float, psi_deg: float) -> "ShotAngles":
        return cls(math.radians(phi_deg), math.radians(psi_deg))

    @property
    def degrees(self) -> tuple[float, float]:
        return math.degrees(self.phi), math.degrees(self.psi)


class ImpactPoint2(NamedTuple):
    x: float
    y: float


class ImpactPoint3(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class ReachableSetParams:
    """Bounds of the reachable sets W_I (planar) and W_II (spatial).

    ``rho`` is the largest ground-plane distance: ``v2`` for the planar task and
    ``v * sqrt(v2 - 2 z_min)`` for the spatial tasks.
    """

    kappa: float
    rho: float
    z_min: Optional[float] = None

    def __post_init__(self):
        if not self.kappa > 0:
            raise InvalidScenarioError(f"kappa must be positive, got {self.kappa}")
        if self.z_min is not None and not self.z_min < 0:
            raise InvalidScenarioError(f"z_min must be negative, got {self.z_min}")
        if not self.rho > self.kappa:
            raise InvalidScenarioError(f"range bound {self.rho} does not exceed kappa={self.kappa}")

    @classmethod
    def planar(cls, ctx: GravityContext, kappa: float) -> "ReachableSetParams":
        return cls(kappa=float(kappa), rho=ctx.v2)

    @classmethod
    def spatial(cls, ctx: GravityContext, kappa: float, z_min: float) -> "ReachableSetParams":
        if not z_min < 0:
            raise InvalidScenarioError(f"z_min must be negative, got {z_min}")
        return cls(kappa=float(kappa), rho=ctx.v * math.sqrt(ctx.v2 - 2.0 * z_min), z_min=float(z_min))


def _out(value):
    return float(value) if np.ndim(value) == 0 else value


def velocity_from_angles(ctx: GravityContext, a: ShotAngles) -> tuple[float, float, float]:
    c = math.cos(a.psi)
    return (ctx.v0 * c * math.cos(a.phi), ctx.v0 * c * math.sin(a.phi), ctx.v0 * math.sin(a.psi))


def impact_point_planar(ctx: GravityContext, phi, psi):
    """Landing point on the horizon plane for an upward shot."""
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if np.any(psi < 0) or np.any(psi >= math.pi / 2):
        raise DomainError("planar impact needs an elevation in [0, pi/2)")
    r = ctx.v2 * np.sin(2.0 * psi)
    return _out(r * np.cos(phi)), _out(r * np.sin(phi))


def trajectory_point(ctx: GravityContext, phi, psi, r):
    """Point of the trajectory whose ground-plane distance from the gun is ``r``."""
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("ground distance must be non-negative")
    t = np.tan(psi)
    z = r * t - (1.0 + t * t) * r * r / (2.0 * ctx.v2)
    return _out(r * np.cos(phi)), _out(r * np.sin(phi)), _out(z)


def azimuth(point, kappa: Optional[float] = None):
    """``arctan(y / x)``; points must satisfy ``x >= kappa`` (``x > 0`` if unset)."""
    x = np.asarray(point[0], dtype=float)
    y = np.asarray(point[1], dtype=float)
    bad = x < kappa if kappa is not None else x <= 0
    if np.any(bad):
        raise OutsideReachableSetError(f"azimuth needs x >= {kappa if kappa is not None else '0+'}")
    return _out(np.arctan(y / x))


def inverse_elevation_planar(ctx: GravityContext, point, j: BranchId):
    """Elevation of branch ``j`` that lands at ``point = (x, y)`` on the horizon plane."""
    j = BranchId(j)
    s = np.hypot(np.asarray(point[0], dtype=float), np.asarray(point[1], dtype=float)) / ctx.v2
    if np.any(s > 1.0):
        raise UnreachableError("planar range exceeds the maximum range v^2")
    half = 0.5 * np.arcsin(s)
    return _out(math.pi / 4 + j.sign * (math.pi / 4 - half))


def elevation_radicand(ctx: GravityContext, point):
    """``v^4 - (x^2 + y^2 + 2 v^2 z)``; negative exactly when no elevation reaches the point."""
    x, y, z = (np.asarray(c, dtype=float) for c in point[:3])
    return _out(ctx.v2 * ctx.v2 - (x * x + y * y + 2.0 * ctx.v2 * z))


def inverse_elevation_spatial(ctx: GravityContext, point, j: BranchId):
    """Elevation of branch ``j`` whose trajectory passes through ``point = (x, y, z)``."""
    j = BranchId(j)
    x = np.asarray(point[0], dtype=float)
    y = np.asarray(point[1], dtype=float)
    disc = np.asarray(elevation_radicand(ctx, point))
    if np.any(disc < 0):
        raise UnreachableError("point lies above the envelope of all trajectories")
    r = np.hypot(x, y)
    if np.any(r <= 0):
        raise DomainError("inverse elevation is undefined on the vertical axis")
    return _out(np.arctan((ctx.v2 + j.sign * np.sqrt(disc)) / r))


def envelope_height(ctx: GravityContext, r):
    """Height of the envelope of all trajectories at ground distance ``r``."""
    r = np.asarray(r, dtype=float)
    return _out(0.5 * (ctx.v2 - r * r / ctx.v2))


def in_reachable_set(task, point, params: ReachableSetParams, ctx: GravityContext) -> bool:
    task = Task.parse(task)
    x, y = float(point[0]), float(point[1])
    r = math.hypot(x, y)
    if x < params.kappa or r > params.rho:
        return False
    if task.family == "I":
        return True
    if params.z_min is None:
        raise InvalidScenarioError("the spatial reachable set needs z_min")
    z = float(point[2])
    # same expression as the elevation radicand, so members of W are never unreachable by rounding
    return params.z_min <= z and ctx.v2 * ctx.v2 - ((x * x + y * y) + 2.0 * ctx.v2 * z) >= 0.0
