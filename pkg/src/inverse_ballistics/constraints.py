"""Visibility cone, terrain field and the aggregated residual functions.

The feasible set of every task is the zero sublevel set of a residual
``F = max_l w_l * c_l(N)`` whose components ``c_l`` are constraint violations
expressed on the target point ``N`` (not on the barrel angles).  The
evaluation itself runs in compiled kernels (``_kernels``); the classes here
describe the problem, validate it and encode it for those kernels.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .errors import ConfigurationError, DomainError, InvalidScenarioError, UnreachableError
from .geometry import (
    BranchId,
    GravityContext,
    ReachableSetParams,
    ShotAngles,
    Task,
    elevation_radicand,
    in_reachable_set,
)

TWO_PI = 2.0 * math.pi

__all__ = [
    "BoundFunction",
    "ConstantBound",
    "SineBound",
    "TableBound",
    "VisibilityCone",
    "cone_e1",
    "cone_e2",
    "Affine",
    "MinNode",
    "MaxNode",
    "TerrainField",
    "box_terrain",
    "flat_floor",
    "WeightSet",
    "ClearanceGrid",
    "Scenario",
    "cone_violation",
    "terrain_eval",
    "segment_clearance",
    "trajectory_clearance",
    "residual_F",
    "validate_declared_lipschitz",
]


# --------------------------------------------------------------------------
# Elevation bounds g1, g2 of the visibility cone
# --------------------------------------------------------------------------


class BoundFunction:
    """An elevation bound ``psi = g(phi)`` with a known Lipschitz constant."""

    kind: int
    lip: float

    def __call__(self, phi):
        raise NotImplementedError

    def encode(self):
        """Kernel parameters: a 4-tuple of floats, or an array for tables."""
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantBound(BoundFunction):
    value: float
    kind = K.BOUND_CONST

    def __call__(self, phi):
        return np.full_like(np.asarray(phi, dtype=float), self.value) if np.ndim(phi) else float(self.value)

    @property
    def lip(self) -> float:
        return 0.0

    def encode(self) -> tuple:
        return (float(self.value), 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SineBound(BoundFunction):
    """``a + b sin(phi) + c cos(phi)``, optionally wrapped in an absolute value."""

    a: float
    b: float = 0.0
    c: float = 0.0
    absolute: bool = True
    kind = K.BOUND_SINE

    def __call__(self, phi):
        phi = np.asarray(phi, dtype=float)
        out = self.a + self.b * np.sin(phi) + self.c * np.cos(phi)
        if self.absolute:
            out = np.abs(out)
        return float(out) if out.ndim == 0 else out

    @property
    def lip(self) -> float:
        return math.hypot(self.b, self.c)

    def encode(self) -> tuple:
        return (float(self.a), float(self.b), float(self.c), 1.0 if self.absolute else 0.0)


@dataclass(frozen=True)
class TableBound(BoundFunction):
    """Piecewise-linear interpolation of ``(phi, psi)`` nodes, constant beyond the ends."""

    phis: tuple
    values: tuple
    kind = K.BOUND_TABLE

    def __post_init__(self):
        phis = tuple(float(p) for p in self.phis)
        values = tuple(float(v) for v in self.values)
        if len(phis) < 2 or len(phis) != len(values):
            raise InvalidScenarioError("a bound table needs at least two (phi, psi) nodes of equal length")
        if any(b <= a for a, b in zip(phis, phis[1:])):
            raise InvalidScenarioError("bound table nodes must be strictly increasing in phi")
        object.__setattr__(self, "phis", phis)
        object.__setattr__(self, "values", values)

    def __call__(self, phi):
        out = np.interp(np.asarray(phi, dtype=float), self.phis, self.values)
        return float(out) if np.ndim(out) == 0 else out

    @property
    def lip(self) -> float:
        p = np.asarray(self.phis)
        v = np.asarray(self.values)
        return float(np.max(np.abs(np.diff(v) / np.diff(p))))

    def encode(self) -> np.ndarray:
        return np.concatenate([[float(len(self.phis))], self.phis, self.values])


@dataclass(frozen=True)
class VisibilityCone:
    """Admissible barrel directions ``theta1 <= phi <= theta2, g1(phi) <= psi <= g2(phi)``.

    ``lip_g1``/``lip_g2`` default to the constants implied by the bound
    representation; explicitly declared values are checked by sampling.
    """

    theta1: float
    theta2: float
    g1: BoundFunction
    g2: BoundFunction
    lip_g1: Optional[float] = None
    lip_g2: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        if not (0.0 <= self.theta1 <= self.theta2 <= TWO_PI + 1e-12):
            raise InvalidScenarioError(
                f"azimuth sector [{self.theta1}, {self.theta2}] must satisfy 0 <= theta1 <= theta2 <= 2 pi"
            )
        if self.lip_g1 is None:
            object.__setattr__(self, "lip_g1", self.g1.lip)
        if self.lip_g2 is None:
            object.__setattr__(self, "lip_g2", self.g2.lip)

    @property
    def wraps_azimuth(self) -> bool:
        # Azimuths of W lie in (-pi/2, pi/2).  A sector starting at zero is
        # compared with them directly; any other sector is an arc of the circle.
        return self.theta1 > 0.0

    def sector_violation(self, phi):
        phi = np.asarray(phi, dtype=float)
        if not self.wraps_azimuth:
            return np.maximum(self.theta1 - phi, phi - self.theta2)
        w = np.mod(phi, TWO_PI)
        inside = (self.theta1 <= w) & (w <= self.theta2)
        outside = np.minimum(np.mod(self.theta1 - w, TWO_PI), np.mod(w - self.theta2, TWO_PI))
        return np.where(inside, np.maximum(self.theta1 - w, w - self.theta2), outside)

    def violation(self, phi, psi):
        phi = np.asarray(phi, dtype=float)
        psi = np.asarray(psi, dtype=float)
        out = np.maximum.reduce(
            [
                self.sector_violation(phi),
                np.asarray(self.g1(phi)) - psi,
                psi - np.asarray(self.g2(phi)),
            ]
        )
        return float(out) if out.ndim == 0 else out


def cone_e1() -> VisibilityCone:
    """Full azimuth circle, elevation between 35 and 40 degrees."""
    return VisibilityCone(0.0, TWO_PI, ConstantBound(7 * math.pi / 36), ConstantBound(8 * math.pi / 36), name="E1")


def cone_e2() -> VisibilityCone:
    """Full azimuth circle, ``|(4 + sin phi) pi/36| <= psi <= |(1 + sin phi) pi/9|``."""
    return VisibilityCone(
        0.0,
        TWO_PI,
        SineBound(4 * math.pi / 36, math.pi / 36),
        SineBound(math.pi / 9, math.pi / 9),
        name="E2",
    )


# --------------------------------------------------------------------------
# Terrain
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Affine:
    a: float
    b: float
    c: float
    d: float

    def evaluate(self, x, y, z):
        return self.a * x + self.b * y + self.c * z + self.d

    @property
    def lip(self) -> float:
        # dual of the 1-norm
        return max(abs(self.a), abs(self.b), abs(self.c))

    def to_spec(self) -> dict:
        return {"affine": {"a": self.a, "b": self.b, "c": self.c, "d": self.d}}


@dataclass(frozen=True)
class MinNode:
    children: tuple

    def evaluate(self, x, y, z):
        out = self.children[0].evaluate(x, y, z)
        for child in self.children[1:]:
            out = np.minimum(out, child.evaluate(x, y, z))
        return out

    @property
    def lip(self) -> float:
        return max(child.lip for child in self.children)

    def to_spec(self) -> dict:
        return {"min": [c.to_spec() for c in self.children]}


@dataclass(frozen=True)
class MaxNode:
    children: tuple

    def evaluate(self, x, y, z):
        out = self.children[0].evaluate(x, y, z)
        for child in self.children[1:]:
            out = np.maximum(out, child.evaluate(x, y, z))
        return out

    @property
    def lip(self) -> float:
        return max(child.lip for child in self.children)

    def to_spec(self) -> dict:
        return {"max": [c.to_spec() for c in self.children]}


def _parse_node(spec, path="terrain"):
    if not isinstance(spec, dict) or len(spec) != 1:
        raise InvalidScenarioError(f"{path}: expected a single-key object min/max/affine, got {spec!r}")
    (key, value), = spec.items()
    if key == "affine":
        if isinstance(value, (list, tuple)) and len(value) == 4:
            return Affine(*(float(v) for v in value))
        if isinstance(value, dict):
            try:
                return Affine(*(float(value.get(k, 0.0)) for k in "abcd"))
            except (TypeError, ValueError) as exc:
                raise InvalidScenarioError(f"{path}.affine: {exc}") from None
        raise InvalidScenarioError(f"{path}.affine: expected {{a,b,c,d}} or a 4-list")
    if key in ("min", "max"):
        if not isinstance(value, list) or not value:
            raise InvalidScenarioError(f"{path}.{key}: expected a non-empty list of nodes")
        children = tuple(_parse_node(child, f"{path}.{key}[{i}]") for i, child in enumerate(value))
        return MinNode(children) if key == "min" else MaxNode(children)
    raise InvalidScenarioError(f"{path}: unknown terrain node {key!r}")


@dataclass(frozen=True)
class TerrainField:
    """``H(x, y, z)`` built from min/max of affine pieces; ``D = {H <= 0}``."""

    root: object
    lip_h: Optional[float] = None
    name: str = ""
    program: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.lip_h is None:
            object.__setattr__(self, "lip_h", self.root.lip)
        object.__setattr__(self, "program", _compile_terrain(self.root))

    @classmethod
    def from_spec(cls, spec, lip_h: Optional[float] = None, name: str = "") -> "TerrainField":
        return cls(_parse_node(spec), lip_h=lip_h, name=name)

    def to_spec(self) -> dict:
        return self.root.to_spec()

    def __call__(self, x, y, z):
        out = self.root.evaluate(np.asarray(x, dtype=float), np.asarray(y, dtype=float), np.asarray(z, dtype=float))
        return float(out) if np.ndim(out) == 0 else out


def _compile_terrain(root):
    ops: list[tuple[int, int]] = []
    rows: list[tuple[float, float, float, float]] = []
    depth = 0
    max_depth = 0

    def emit(node):
        nonlocal depth, max_depth
        if isinstance(node, Affine):
            ops.append((K.OP_PUSH, len(rows)))
            rows.append((node.a, node.b, node.c, node.d))
            depth += 1
            max_depth = max(max_depth, depth)
            return
        for child in node.children:
            emit(child)
        ops.append((K.OP_MIN if isinstance(node, MinNode) else K.OP_MAX, len(node.children)))
        depth -= len(node.children) - 1

    emit(root)
    return (
        np.asarray(ops, dtype=np.int64).reshape(-1, 2),
        np.asarray(rows, dtype=float).reshape(-1, 4),
        max(max_depth, 1),
    )


def box_terrain() -> TerrainField:
    """A 40 x 40 m block, 20 m tall, standing on a floor at z = -10."""
    spec = {
        "min": [
            {
                "max": [
                    {"affine": [-1, 0, 0, 90]},
                    {"affine": [1, 0, 0, -130]},
                    {"affine": [0, -1, 0, -10]},
                    {"affine": [0, 1, 0, -30]},
                    {"affine": [0, 0, 1, -20]},
                ]
            },
            {"affine": [0, 0, 1, 10]},
        ]
    }
    return TerrainField.from_spec(spec, name="box")


def flat_floor(z0: float) -> TerrainField:
    return TerrainField(Affine(0.0, 0.0, 1.0, -float(z0)), name="floor")


# --------------------------------------------------------------------------
# Weights, 1-D minimisation grid and the full scenario
# --------------------------------------------------------------------------

DEFAULT_WEIGHTS = {
    Task.PLANAR: (1.0, 0.01),
    Task.SPATIAL: (1.0, 0.01, 0.01),
    Task.TERRAIN: (1.0, 0.01, 0.001, 0.001, 0.001),
}


@dataclass(frozen=True)
class WeightSet:
    values: tuple

    def __post_init__(self):
        values = tuple(float(w) for w in self.values)
        if not values or any(not (w > 0 and math.isfinite(w)) for w in values):
            raise InvalidScenarioError(f"weights must be positive, got {self.values}")
        object.__setattr__(self, "values", values)

    @classmethod
    def default(cls, task) -> "WeightSet":
        return cls(DEFAULT_WEIGHTS[Task.parse(task)])

    def __getitem__(self, i):
        return self.values[i]

    def __len__(self):
        return len(self.values)

    def scaled(self, factor: float) -> "WeightSet":
        return WeightSet(tuple(w * factor for w in self.values))


@dataclass(frozen=True)
class ClearanceGrid:
    """Fallback sampling for the 1-D clearance minimisations over ``[0, 1]``.

    Terrains with at most ``EXACT_ROW_LIMIT`` affine pieces are minimised
    exactly by enumerating candidate points; larger ones are sampled on this
    grid and refined by ``refine_iters`` golden-section steps.
    """

    n_lambda: int = 64
    n_mu: int = 64
    refine_iters: int = 24

    def __post_init__(self):
        if self.n_lambda < 2 or self.n_mu < 2 or self.refine_iters < 0:
            raise InvalidScenarioError("clearance grids need at least two samples")


@dataclass(frozen=True)
class Scenario:
    """One problem instance: task, physics, reachable set, cone, terrain, weights."""

    task: Task
    ctx: GravityContext
    reach: ReachableSetParams
    cone: VisibilityCone
    weights: WeightSet
    terrain: Optional[TerrainField] = None
    clearance: ClearanceGrid = ClearanceGrid()
    target: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "task", Task.parse(self.task))
        n_weights = len(DEFAULT_WEIGHTS[self.task])
        if len(self.weights) != n_weights:
            raise InvalidScenarioError(f"task {self.task.value} needs {n_weights} weights, got {len(self.weights)}")
        if self.task is Task.TERRAIN and self.terrain is None:
            raise InvalidScenarioError("task II.b needs a terrain")
        if self.task.family == "II" and self.reach.z_min is None:
            raise InvalidScenarioError("tasks II.a/II.b need z_min")
        if self.target is not None:
            object.__setattr__(self, "target", tuple(float(c) for c in self.target))

    @classmethod
    def build(
        cls,
        task,
        v0: float = 180.0,
        g: float = 9.80665,
        kappa: float = 100.0,
        z_min: float = -10.0,
        cone: Optional[VisibilityCone] = None,
        weights=None,
        terrain: Optional[TerrainField] = None,
        clearance: ClearanceGrid = ClearanceGrid(),
        target=None,
    ) -> "Scenario":
        task = Task.parse(task)
        ctx = GravityContext(float(v0), float(g))
        if task is Task.PLANAR:
            reach = ReachableSetParams.planar(ctx, kappa)
        else:
            reach = ReachableSetParams.spatial(ctx, kappa, z_min)
        if weights is None:
            weights = WeightSet.default(task)
        elif not isinstance(weights, WeightSet):
            weights = WeightSet(tuple(weights))
        return cls(
            task=task,
            ctx=ctx,
            reach=reach,
            cone=cone if cone is not None else cone_e1(),
            weights=weights,
            terrain=terrain if terrain is not None or task is not Task.TERRAIN else box_terrain(),
            clearance=clearance,
            target=target,
        )

    def with_target(self, target) -> "Scenario":
        return _replace(self, target=tuple(float(c) for c in target))

    def with_weights(self, weights) -> "Scenario":
        return _replace(self, weights=weights if isinstance(weights, WeightSet) else WeightSet(tuple(weights)))

    @property
    def dim(self) -> int:
        return self.task.dim

    def contains(self, point) -> bool:
        """Membership of ``point`` in the task's reachable set W."""
        return in_reachable_set(self.task, point, self.reach, self.ctx)

    def encode(self, j: BranchId, target=None) -> "K.Encoded":
        """Pack this scenario and a branch into the flat arrays used by the kernels."""
        target = self.target if target is None else target
        if target is None:
            if self.task is Task.TERRAIN:
                raise InvalidScenarioError("task II.b residual needs the target point M")
            target = (0.0, 0.0, 0.0)
        m = tuple(float(c) for c in target) + (0.0,) * (3 - len(target))
        w = self.weights.values + (0.0,) * (5 - len(self.weights))
        fp = np.array(
            [
                self.ctx.v2,
                self.reach.kappa,
                self.reach.z_min if self.reach.z_min is not None else -np.inf,
                self.reach.rho,
                self.cone.theta1,
                self.cone.theta2,
                *w,
                *m[:3],
            ],
            dtype=float,
        )
        task_code = {Task.PLANAR: K.TASK_PLANAR, Task.SPATIAL: K.TASK_SPATIAL, Task.TERRAIN: K.TASK_TERRAIN}[self.task]
        ip = np.array(
            [
                task_code,
                int(BranchId(j)),
                1 if self.cone.wraps_azimuth else 0,
                self.cone.g1.kind,
                self.cone.g2.kind,
                self.clearance.n_lambda,
                self.clearance.n_mu,
                self.clearance.refine_iters,
            ],
            dtype=np.int64,
        )
        g1p, g2p = self.cone.g1.encode(), self.cone.g2.encode()
        if self.task is not Task.TERRAIN:
            return K.Encoded(fp, ip, g1p, g2p, None, None, None)
        if self.terrain is not None:
            ops, rows, depth = self.terrain.program
        else:
            ops, rows, depth = _compile_terrain(Affine(0.0, 0.0, 0.0, 0.0))
        return K.Encoded(fp, ip, g1p, g2p, ops, rows, np.empty(depth + 1))


def _replace(obj, **changes):
    return dataclasses.replace(obj, **changes)


# --------------------------------------------------------------------------
# Public evaluation helpers
# --------------------------------------------------------------------------


def cone_violation(cone: VisibilityCone, a: ShotAngles) -> float:
    """Signed largest violation (radians) of the cone inequalities; ``<= 0`` inside."""
    return float(cone.violation(a.phi, a.psi))


def terrain_eval(t: TerrainField, point) -> float:
    return float(t(*point[:3]))


def segment_clearance(t: TerrainField, m, n, grid: ClearanceGrid = ClearanceGrid()) -> float:
    """Approximate ``min_{lambda in [0,1]} H(lambda N + (1 - lambda) M)``."""
    ops, rows, depth = t.program
    return float(
        K.segment_clearance(
            ops, rows, np.empty(depth + 1), *map(float, m[:3]), *map(float, n[:3]),
            grid.n_lambda, grid.refine_iters, -np.inf,
        )
    )


def trajectory_clearance(ctx: GravityContext, t: TerrainField, a: ShotAngles, r: float,
                         grid: ClearanceGrid = ClearanceGrid()) -> float:
    """Approximate minimum of ``H`` along the arc from the muzzle to ground distance ``r``."""
    if r < 0:
        raise DomainError("ground distance must be non-negative")
    ops, rows, depth = t.program
    return float(
        K.trajectory_clearance(
            ops, rows, np.empty(depth + 1), ctx.v2, a.phi, a.psi, float(r),
            grid.n_mu, grid.refine_iters, -np.inf,
        )
    )


def residual_F(task, j: BranchId, point, scenario: Scenario) -> float:
    """Weighted max of the constraint violations of ``task`` and branch ``j`` at ``point``.

    ``scenario.target`` supplies M for the line-of-sight component of II.b.
    """
    task = Task.parse(task)
    if task is not scenario.task:
        scenario = _replace(scenario, task=task)
    point = tuple(float(c) for c in point)
    if task.family == "II" and elevation_radicand(scenario.ctx, point) < 0:
        raise UnreachableError(f"no elevation reaches {point}")
    if task.family == "I" and math.hypot(point[0], point[1]) > scenario.ctx.v2:
        raise UnreachableError(f"{point} is beyond the maximum range")
    enc = scenario.encode(j)
    x, y = point[0], point[1]
    z = point[2] if len(point) > 2 else 0.0
    return float(K.residual(x, y, z, *enc, np.inf))


def validate_declared_lipschitz(scenario: Scenario, n_pairs: int = 20000, seed: int = 0) -> None:
    """Spot-check declared Lipschitz constants of g1, g2 and H by random pairs.

    Raises ``ConfigurationError`` on the first violated declaration.
    """
    rng = np.random.default_rng(seed)
    cone = scenario.cone
    lo, hi = cone.theta1 - 0.5, cone.theta2 + 0.5
    p1 = rng.uniform(lo, hi, n_pairs)
    p2 = np.where(rng.random(n_pairs) < 0.5, p1 + rng.normal(0.0, 1e-3, n_pairs), rng.uniform(lo, hi, n_pairs))
    for name, g, lip in (("g1", cone.g1, cone.lip_g1), ("g2", cone.g2, cone.lip_g2)):
        gap = np.abs(np.asarray(g(p1)) - np.asarray(g(p2))) - lip * np.abs(p1 - p2)
        if np.any(gap > 1e-9 * (1.0 + np.abs(np.asarray(g(p1))))):
            raise ConfigurationError(f"declared lip({name}) = {lip} is violated by the bound function")
    t = scenario.terrain
    if t is not None:
        scale = max(scenario.reach.rho, 1.0)
        a = rng.uniform(-scale, scale, (n_pairs, 3))
        b = np.where(rng.random((n_pairs, 1)) < 0.5, a + rng.normal(0.0, 1.0, (n_pairs, 3)),
                     rng.uniform(-scale, scale, (n_pairs, 3)))
        ha = np.asarray(t(a[:, 0], a[:, 1], a[:, 2]))
        hb = np.asarray(t(b[:, 0], b[:, 1], b[:, 2]))
        gap = np.abs(ha - hb) - t.lip_h * np.abs(a - b).sum(axis=1)
        if np.any(gap > 1e-9 * (1.0 + np.abs(ha))):
            raise ConfigurationError(f"declared lip(H) = {t.lip_h} is violated by the terrain")
