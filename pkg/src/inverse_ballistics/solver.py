"""Projection of the target M onto the zero sublevel set of a residual.

The method grows a ball around M.  At every expansion the radius increases by
the largest step that the epsilon-Lipschitz bound certifies to contain no zero
of F, and the next iterate is the minimiser of F on the new sphere.  Once F
drops below ``eps_k (1 + gamma)`` the iterate is recorded and ``eps_k`` is
shrunk; the run stops when an iterate reaches the requested residual.
"""
from __future__ import annotations

import dataclasses
import logging
import math
import time
from array import array
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels as K
from .constraints import Scenario
from .errors import DomainError, InfeasibleSphereError, InvalidScenarioError, OutsideReachableSetError
from .geometry import BranchId, ShotAngles, Task, inverse_elevation_planar, inverse_elevation_spatial
from .lipschitz import lip_residual

log = logging.getLogger(__name__)

__all__ = [
    "SolveStatus",
    "SolverParams",
    "SolverTrace",
    "SolveResult",
    "sphere_argmin",
    "project_branch",
    "solve",
]


class SolveStatus(str, Enum):
    CONVERGED = "converged"
    RESIDUAL_FLOOR = "residual_floor"
    ITER_CAP = "iter_cap"
    INFEASIBLE_BRANCH = "infeasible_branch"
    # stopped because the sphere outgrew a closer answer from the other branch
    DOMINATED = "dominated"


@dataclass(frozen=True)
class SolverParams:
    """Algorithm parameters.

    ``circle_grid`` is the number of angles on the circle (planar task);
    ``sphere_grid`` the (polar, azimuth) sample counts on the sphere.  The
    best ``seeds`` samples are refined by at most ``max_refine`` local grids.
    """

    eps0: float = 0.1
    gamma: float = 0.5
    lam: float = 0.5
    eps_star: Optional[float] = None
    eps_q: Optional[float] = None
    max_iter: int = 1_000_000
    circle_grid: int = 2048
    sphere_grid: tuple = (48, 96)
    seeds: int = 3
    max_refine: int = 8
    delta_factor: float = 0.5
    eps_floor_ratio: float = 1e-6
    stop_rule: str = "iterate"

    def __post_init__(self):
        if not self.eps0 > 0:
            raise InvalidScenarioError(f"eps0 must be positive, got {self.eps0}")
        for name in ("gamma", "lam"):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise InvalidScenarioError(f"{name} must lie in (0, 1), got {value}")
        if self.eps_star is None:
            object.__setattr__(self, "eps_star", self.eps0)
        if not 0 < self.eps_star < 1:
            raise InvalidScenarioError(f"eps_star must lie in (0, 1), got {self.eps_star}")
        if self.eps_q is not None and not 0 < self.eps_q < 1:
            raise InvalidScenarioError(f"eps_q must lie in (0, 1), got {self.eps_q}")
        if self.max_iter < 1 or self.circle_grid < 4 or self.seeds < 1 or self.max_refine < 0:
            raise InvalidScenarioError("iteration cap, grids and seed count must be positive")
        grid = tuple(int(n) for n in self.sphere_grid)
        if len(grid) != 2 or min(grid) < 2:
            raise InvalidScenarioError(f"sphere_grid must be two counts >= 2, got {self.sphere_grid}")
        object.__setattr__(self, "sphere_grid", grid)
        if not 0 < self.delta_factor < 1:
            raise InvalidScenarioError("delta_factor must lie in (0, 1)")
        if self.stop_rule not in ("iterate", "q"):
            raise InvalidScenarioError(f"stop_rule must be 'iterate' or 'q', got {self.stop_rule!r}")

    def grid_for(self, task: Task):
        return self.circle_grid if Task.parse(task) is Task.PLANAR else self.sphere_grid


class SolverTrace:
    """Per-iteration record: ``k, eps_k, F(N^k), r_k, radius, N^{k+1}``.

    ``r_k`` is zero on iterations that shrink eps instead of expanding the
    sphere; ``q_index`` lists the iterations whose point was recorded as Q.
    """

    columns = ("k", "eps", "F", "r", "radius", "x", "y", "z", "F_next")

    def __init__(self):
        self._cols = {name: array("d") for name in self.columns}
        self.q_index: list[int] = []

    def append(self, *values):
        for name, value in zip(self.columns, values):
            self._cols[name].append(value)

    def __len__(self):
        return len(self._cols["k"])

    def __getitem__(self, name) -> np.ndarray:
        return np.frombuffer(self._cols[name], dtype=float) if len(self) else np.empty(0)

    def points(self, dim: int = 3) -> np.ndarray:
        return np.column_stack([self[c] for c in ("x", "y", "z")[:dim]]) if len(self) else np.empty((0, dim))

    def q_points(self, dim: int = 3) -> np.ndarray:
        """The Q subsequence (points at which eps was shrunk or the run stopped)."""
        return self.points(dim)[self.q_index] if self.q_index else np.empty((0, dim))

    def records(self):
        for i in range(len(self)):
            yield {name: self._cols[name][i] for name in self.columns}


@dataclass
class SolveResult:
    task: Task
    branch: BranchId
    target: tuple
    point: tuple
    angles: Optional[ShotAngles]
    residual: float
    distance: float
    iterations: int
    status: SolveStatus
    eps_final: float
    wall_time: float = 0.0
    trace: Optional[SolverTrace] = field(default=None, repr=False)
    grazing: bool = False
    branches: dict = field(default_factory=dict, repr=False)
    v2: float = math.nan

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED

    @property
    def ground_distance(self) -> float:
        return math.hypot(self.point[0], self.point[1])


# --------------------------------------------------------------------------
# Minimisation on a sphere
# --------------------------------------------------------------------------


def _sphere_points(center, radius, th, al):
    if len(center) == 2:
        return np.column_stack([center[0] + radius * np.cos(al), center[1] + radius * np.sin(al)])
    st = np.sin(th)
    return np.column_stack(
        [center[0] + radius * st * np.cos(al), center[1] + radius * st * np.sin(al), center[2] + radius * np.cos(th)]
    )


def sphere_argmin(
    func: Callable[[np.ndarray], np.ndarray],
    center: Sequence[float],
    radius: float,
    contains: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    grid=None,
    refine: int = 4,
    seeds: int = 3,
):
    """Minimise a vectorised ``func`` over the circle/sphere ``|X - center| = radius``.

    ``func`` and ``contains`` take an ``(m, n)`` array of points.  The uniform
    angular grid is scanned first (ties resolved by the lowest index), then the
    best ``seeds`` samples are refined by ``refine`` shrinking local grids.
    Returns ``(point, value)``.
    """
    center = np.asarray(center, dtype=float)
    if not radius > 0:
        raise DomainError(f"radius must be positive, got {radius}")
    dim = center.shape[0]
    if dim == 2:
        n = int(grid or 2048)
        al = 2 * math.pi * np.arange(n) / n
        th = np.zeros(n)
        steps = (0.0, 2 * math.pi / n)
        offsets = [(0, q) for q in range(-4, 5) if q]
        shrink = 4.0
    else:
        n_theta, n_alpha = grid or (48, 96)
        tt, aa = np.meshgrid(math.pi * (np.arange(n_theta) + 0.5) / n_theta, 2 * math.pi * np.arange(n_alpha) / n_alpha,
                             indexing="ij")
        th, al = tt.ravel(), aa.ravel()
        steps = (math.pi / n_theta, 2 * math.pi / n_alpha)
        offsets = [(p, q) for p in range(-3, 4) for q in range(-3, 4) if p or q]
        shrink = 3.0
    pts = _sphere_points(center, radius, th, al)
    inside = np.ones(len(pts), bool) if contains is None else np.asarray(contains(pts), bool)
    if not inside.any():
        raise InfeasibleSphereError(f"no sample of the sphere of radius {radius} lies in the admissible set")
    values = np.full(len(pts), np.inf)
    values[inside] = func(pts[inside])
    order = np.argsort(values, kind="stable")[:seeds]
    best = int(order[0])
    best_val = values[best]
    best_pt = pts[best]
    offs = np.asarray(offsets, dtype=float)
    for idx in order:
        if not np.isfinite(values[idx]):
            continue
        ct, ca, cv = th[idx], al[idx], values[idx]
        half = np.array(steps)
        for _ in range(refine):
            step = half / shrink
            cand_t = ct + offs[:, 0] * step[0]
            cand_a = ca + offs[:, 1] * step[1]
            cand = _sphere_points(center, radius, cand_t, cand_a)
            ok = np.ones(len(cand), bool) if contains is None else np.asarray(contains(cand), bool)
            if ok.any():
                vals = np.full(len(cand), np.inf)
                vals[ok] = func(cand[ok])
                i = int(np.argmin(vals))
                if vals[i] < cv:
                    ct, ca, cv = cand_t[i], cand_a[i], vals[i]
            half = step
        if cv < best_val:
            best_val = cv
            best_pt = _sphere_points(center, radius, np.array([ct]), np.array([ca]))[0]
    return best_pt, float(best_val)


# --------------------------------------------------------------------------
# The expanding-sphere iteration
# --------------------------------------------------------------------------


class _Branch:
    """Compiled residual and sphere search for one (scenario, branch, target)."""

    def __init__(self, scenario: Scenario, j: BranchId, target, params: SolverParams):
        self.scenario = scenario
        self.task = scenario.task
        self.dim = self.task.dim
        self.params = params
        self.m = tuple(float(c) for c in target[: self.dim])
        self.enc = scenario.encode(j, self._target3(target))
        self._lip_cache: dict[float, float] = {}
        self.j = BranchId(j)

    def _target3(self, target):
        t = tuple(float(c) for c in target)
        return t + (0.0,) * (3 - len(t))

    def F(self, p) -> float:
        z = p[2] if self.dim == 3 else 0.0
        return float(K.residual(p[0], p[1], z, *self.enc, math.inf))

    def lip(self, eps: float) -> float:
        L = self._lip_cache.get(eps)
        if L is None:
            L = lip_residual(self.task, self.j, eps, self.scenario).L
            self._lip_cache[eps] = L
        return L

    def levels(self, radius: float, L: float, delta: float) -> int:
        if self.dim == 2:
            spacing = radius * 2 * math.pi / self.params.circle_grid
            shrink = 4.0
        else:
            n_theta, n_alpha = self.params.sphere_grid
            spacing = radius * max(math.pi / n_theta, 2 * math.pi / n_alpha)
            shrink = 3.0
        need = L * math.sqrt(self.dim) * spacing / delta
        if need <= 1.0:
            return 1
        return int(min(self.params.max_refine, max(1, math.ceil(math.log(need) / math.log(shrink)))))

    def argmin(self, radius: float, levels: int, prev):
        p = self.params
        if self.dim == 2:
            f, x, y, a, inside = K.circle_argmin(
                self.m[0], self.m[1], radius, p.circle_grid, levels, p.seeds, prev[0], *self.enc
            )
            return (f, (x, y), (a,), inside)
        f, x, y, z, th, al, inside = K.sphere_argmin(
            self.m[0], self.m[1], self.m[2], radius, p.sphere_grid[0], p.sphere_grid[1], levels, p.seeds,
            prev[0], prev[1], *self.enc,
        )
        return (f, (x, y, z), (th, al), inside)


def _angles(scenario: Scenario, j: BranchId, point) -> Optional[ShotAngles]:
    x, y = point[0], point[1]
    if x <= 0:
        return None
    phi = math.atan(y / x)
    try:
        if scenario.task is Task.PLANAR:
            psi = inverse_elevation_planar(scenario.ctx, (x, y), j)
        else:
            psi = inverse_elevation_spatial(scenario.ctx, point, j)
    except DomainError:
        return None
    return ShotAngles(phi, psi)


def _grazing(scenario: Scenario, target, point, angles: Optional[ShotAngles], tol: float = 1e-3) -> bool:
    """True when the sight segment or the arc touches the terrain away from their ends."""
    t = scenario.terrain
    if scenario.task is not Task.TERRAIN or t is None or angles is None:
        return False
    s = np.linspace(0.05, 0.95, 2001)
    m = np.asarray(target, dtype=float)
    n = np.asarray(point, dtype=float)
    seg = m[None, :] + s[:, None] * (n - m)[None, :]
    if np.min(t(seg[:, 0], seg[:, 1], seg[:, 2])) <= tol:
        return True
    r = math.hypot(point[0], point[1]) * s
    tp = math.tan(angles.psi)
    z = r * tp - (1 + tp * tp) * r * r / (2 * scenario.ctx.v2)
    return bool(np.min(t(r * math.cos(angles.phi), r * math.sin(angles.phi), z)) <= tol)


def project_branch(
    scenario: Scenario,
    j: BranchId,
    target=None,
    params: SolverParams = SolverParams(),
    max_radius: float = math.inf,
    keep_trace: bool = True,
) -> SolveResult:
    """Run the expanding-sphere iteration for one inverse branch.

    ``max_radius`` stops the run (status ``dominated``) once the sphere is
    larger than a distance already achieved elsewhere.
    """
    started = time.perf_counter()
    task = scenario.task
    j = BranchId(j)
    target = scenario.target if target is None else tuple(float(c) for c in target)
    if target is None:
        raise InvalidScenarioError("no target point given")
    dim = task.dim
    m_point = tuple(target[:dim])
    if not scenario.contains(m_point):
        raise OutsideReachableSetError(f"target {m_point} is outside the reachable set of task {task.value}")
    br = _Branch(scenario, j, target, params)
    trace = SolverTrace() if keep_trace else None
    sqrt_n = math.sqrt(dim)
    eps_star = params.eps_star
    eps_floor = params.eps_floor_ratio * params.eps0

    def finish(point, value, status, k, eps):
        angles = _angles(scenario, j, point)
        point = tuple(float(c) for c in point)
        return SolveResult(
            task=task,
            branch=j,
            target=tuple(target),
            point=point,
            angles=angles,
            residual=float(value),
            distance=math.dist(point, m_point),
            iterations=k,
            status=status,
            eps_final=eps,
            wall_time=time.perf_counter() - started,
            trace=trace,
            grazing=_grazing(scenario, target[:3], point, angles) if status is SolveStatus.CONVERGED else False,
            v2=scenario.ctx.v2,
        )

    n_pt = m_point
    f_n = br.F(n_pt)
    if f_n <= 0.0:
        return finish(n_pt, f_n, SolveStatus.CONVERGED, 0, params.eps0)
    eps = params.eps0
    radius = 0.0
    q_pt, f_q = n_pt, f_n
    best_pt, best_f = n_pt, f_n
    prev = (math.nan, math.nan)
    gamma, lam = params.gamma, params.lam
    for k in range(params.max_iter):
        if f_n < eps * (1.0 + gamma):
            # step 1 -> 2: record Q and tighten eps
            prev_q = q_pt
            q_pt, f_q = n_pt, f_n
            if trace is not None:
                trace.q_index.append(len(trace))
            eps_next = lam * f_n if f_n <= eps else lam * eps
            r = 0.0
            next_pt, f_next = n_pt, f_n
            q_stop = params.stop_rule == "q" and f_q < eps_star
            if q_stop or (params.eps_q is not None and math.dist(prev_q, q_pt) < params.eps_q and k > 0):
                if trace is not None:
                    trace.append(k, eps, f_n, r, radius, *(tuple(n_pt) + (0.0,))[:3], f_next)
                return finish(q_pt, f_q, SolveStatus.CONVERGED, k + 1, eps_next)
        else:
            # step 3: certified expansion of the ball around M
            L = br.lip(eps)
            r = (f_n - eps) / (sqrt_n * L)
            radius += r
            if radius > max_radius:
                return finish(best_pt, best_f, SolveStatus.DOMINATED, k, eps)
            delta = params.delta_factor * eps * gamma
            f_next, next_pt, prev, inside = br.argmin(radius, br.levels(radius, L, delta), prev)
            if inside == 0 or not math.isfinite(f_next):
                return finish(best_pt, best_f, SolveStatus.INFEASIBLE_BRANCH, k, eps)
            eps_next = eps
        if trace is not None:
            trace.append(k, eps, f_n, r, radius, *(tuple(next_pt) + (0.0,))[:3], f_next)
        if f_next < best_f:
            best_pt, best_f = next_pt, f_next
        # step 4 with the residual tolerance
        if f_next <= 0.0 or (params.stop_rule == "iterate" and f_next < eps_star):
            if trace is not None and (not trace.q_index or trace.q_index[-1] != len(trace) - 1):
                trace.q_index.append(len(trace) - 1)
            return finish(next_pt, f_next, SolveStatus.CONVERGED, k + 1, eps_next)
        if eps_next < eps_floor:
            return finish(best_pt, best_f, SolveStatus.RESIDUAL_FLOOR, k + 1, eps_next)
        n_pt, f_n, eps = next_pt, f_next, eps_next
    return finish(best_pt, best_f, SolveStatus.ITER_CAP, params.max_iter, eps)


def solve(
    scenario: Scenario,
    target=None,
    params: SolverParams = SolverParams(),
    keep_trace: bool = True,
) -> SolveResult:
    """Solve both branches and keep the converged one nearest to the target.

    The second branch is stopped as soon as its sphere is larger than the
    distance the first branch achieved, since it can no longer win.
    """
    started = time.perf_counter()
    results = {}
    best: Optional[SolveResult] = None
    for j in (BranchId.LOW, BranchId.HIGH):
        cap = best.distance if best is not None else math.inf
        res = project_branch(scenario, j, target, params, max_radius=cap, keep_trace=keep_trace)
        log.debug("branch %d: %s after %d iterations, distance %.3f", int(j), res.status.value, res.iterations,
                  res.distance)
        results[j] = res
        if res.converged and (best is None or res.distance < best.distance):
            best = res
    if best is None:
        # report the branch that got closest to feasibility
        best = min(results.values(), key=lambda r: r.residual)
        overall = SolveStatus.INFEASIBLE_BRANCH if all(
            r.status is SolveStatus.INFEASIBLE_BRANCH for r in results.values()) else best.status
        best = _copy(best, status=overall)
    out = _copy(best, iterations=sum(r.iterations for r in results.values()),
                wall_time=time.perf_counter() - started)
    out.branches = results
    return out


def _copy(res: SolveResult, **changes) -> SolveResult:
    return dataclasses.replace(res, **changes)
