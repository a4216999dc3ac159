import math

import numpy as np
import pytest

from inverse_ballistics import _kernels as K
from inverse_ballistics.constraints import ConstantBound, Scenario, VisibilityCone, cone_e1, cone_e2
from inverse_ballistics.errors import DomainError, InfeasibleSphereError, InvalidScenarioError, OutsideReachableSetError
from inverse_ballistics.geometry import BranchId, impact_point_planar
from inverse_ballistics.lipschitz import lip_residual
from inverse_ballistics.solver import SolverParams, SolveStatus, project_branch, solve, sphere_argmin

M1 = (110.0, 0.0)
M2 = (2700.0, 0.0)


def test_generic_sphere_argmin_finds_nearest_point():
    rng = np.random.default_rng(0)
    for dim in (2, 3):
        for _ in range(10):
            center = rng.normal(size=dim) * 10
            d = rng.normal(size=dim)
            p = center + 5.0 * d / np.linalg.norm(d)
            pt, val = sphere_argmin(lambda q: np.linalg.norm(q - p, axis=1), center, 5.0, refine=8)
            assert np.allclose(pt, p, atol=1e-3)
            assert val < 1e-3


def test_generic_sphere_argmin_errors():
    with pytest.raises(DomainError):
        sphere_argmin(lambda q: q[:, 0], (0.0, 0.0), 0.0)
    with pytest.raises(InfeasibleSphereError):
        sphere_argmin(lambda q: q[:, 0], (0.0, 0.0), 1.0, contains=lambda q: np.zeros(len(q), bool))


def _dense_min(points, enc, sc):
    inside = np.array([sc.contains(p) for p in points])
    vals = K.residual_many(np.ascontiguousarray(points[inside]), *enc)
    return vals.min() if len(vals) else math.inf


@pytest.mark.parametrize("radius", [15.0, 120.0, 600.0])
def test_circle_argmin_against_dense_scan(radius):
    sc = Scenario.build("I", cone=cone_e2())
    enc = sc.encode(1, M2)
    f, x, y, a, inside = K.circle_argmin(M2[0], M2[1], radius, 2048, 6, 3, math.nan, *enc)
    ang = np.linspace(0, 2 * math.pi, 400001)
    pts = np.column_stack([M2[0] + radius * np.cos(ang), M2[1] + radius * np.sin(ang)])
    dense = _dense_min(pts, enc, sc)
    assert inside > 0
    assert math.hypot(x - M2[0], y - M2[1]) == pytest.approx(radius, rel=1e-12)
    assert f <= dense + 1e-6


@pytest.mark.parametrize("task", ["II.a", "II.b"])
def test_sphere_kernel_against_dense_scan(task):
    m = (110.0, 0.0, 20.0)
    sc = Scenario.build(task, cone=cone_e2(), target=m)
    enc = sc.encode(1)
    radius = 30.0
    f, x, y, z, th, al, inside = K.sphere_argmin(*m, radius, 48, 96, 6, 3, math.nan, math.nan, *enc)
    tt, aa = np.meshgrid(np.linspace(0, math.pi, 721), np.linspace(0, 2 * math.pi, 1441), indexing="ij")
    tt, aa = tt.ravel(), aa.ravel()
    pts = np.column_stack([m[0] + radius * np.sin(tt) * np.cos(aa), m[1] + radius * np.sin(tt) * np.sin(aa),
                           m[2] + radius * np.cos(tt)])
    dense = _dense_min(pts, enc, sc)
    assert math.dist((x, y, z), m) == pytest.approx(radius, rel=1e-12)
    # the dense grid is itself approximate: allow its own resolution
    assert f <= dense + 1e-4


def test_target_inside_feasible_set_is_returned():
    sc = Scenario.build("I", cone=cone_e1())
    m = impact_point_planar(sc.ctx, 0.2, math.radians(37))
    res = solve(sc, m, SolverParams(eps0=0.1))
    assert res.status is SolveStatus.CONVERGED
    assert res.distance == 0.0
    assert res.residual <= 0


def test_target_outside_w_rejected():
    sc = Scenario.build("I")
    with pytest.raises(OutsideReachableSetError):
        project_branch(sc, 1, (50.0, 0.0))
    with pytest.raises(InvalidScenarioError):
        project_branch(sc, 1, None)


def test_table1_spec_example():
    res = solve(Scenario.build("I", cone=cone_e2()), M2, SolverParams(eps0=0.01))
    phi, psi = res.angles.degrees
    assert res.converged and res.branch is BranchId.LOW
    assert res.point[0] == pytest.approx(2316.7, abs=20)
    assert res.point[1] == pytest.approx(217.0, abs=20)
    assert phi == pytest.approx(5.4, abs=0.5)
    assert psi == pytest.approx(22.4, abs=0.5)


@pytest.mark.parametrize("task,target", [("I", M1), ("I", M2), ("II.a", (110.0, 0.0, 20.0))])
def test_trace_invariants(task, target):
    eps0 = 0.1
    sc = Scenario.build(task, cone=cone_e2())
    p = SolverParams(eps0=eps0)
    res = project_branch(sc, 1, target, p)
    tr = res.trace
    eps = tr["eps"]
    assert np.all(np.diff(eps) <= 0)
    n = sc.task.dim
    step = tr["r"] > 0
    pts = tr.points(n)
    dist = np.linalg.norm(pts - np.asarray(target[:n]), axis=1)
    assert np.allclose(dist[step], tr["radius"][step], rtol=1e-9)
    assert np.allclose(tr["radius"][step], np.cumsum(tr["r"])[step], rtol=1e-9)
    # step 3 runs only when F >= eps (1 + gamma), giving a positive radius increment
    assert np.all(tr["F"][step] >= eps[step] * (1 + p.gamma))
    for k in np.flatnonzero(step):
        L = lip_residual(task, 1, eps[k], sc).L
        assert tr["r"][k] >= eps[k] * p.gamma / (math.sqrt(n) * L) * (1 - 1e-12)
    assert res.converged and res.residual < p.eps_star
    assert res.distance == pytest.approx(tr["radius"][-1], rel=1e-9)


def test_high_branch_selected_when_low_cannot_comply():
    # the low branch never exceeds 45 degrees of elevation
    cone = VisibilityCone(0.0, 2 * math.pi, ConstantBound(math.radians(60)), ConstantBound(math.radians(70)))
    sc = Scenario.build("I", cone=cone)
    res = solve(sc, M2, SolverParams(eps0=0.05, circle_grid=512))
    assert res.converged
    assert res.branch is BranchId.HIGH
    assert 60 - 3 < res.angles.degrees[1] < 70
    assert res.branches[BranchId.LOW].status is not SolveStatus.CONVERGED


def test_iteration_cap_and_residual_floor():
    sc = Scenario.build("II.a", cone=cone_e1())
    res = solve(sc, (2700.0, 0.0, -10.0), SolverParams(eps0=0.05, max_iter=50))
    assert res.status is SolveStatus.ITER_CAP
    assert res.iterations == 100
    res = solve(Scenario.build("I", cone=cone_e1()), M1, SolverParams(eps0=0.1, eps_floor_ratio=0.99, eps_star=0.001))
    assert res.status is SolveStatus.RESIDUAL_FLOOR


def test_eps_q_stop():
    sc = Scenario.build("I", cone=cone_e1())
    loose = solve(sc, M1, SolverParams(eps0=0.1, eps_star=1e-4, eps_q=0.5, circle_grid=512))
    assert loose.converged


def test_solver_is_deterministic():
    sc = Scenario.build("II.a", cone=cone_e2())
    a = solve(sc, (110.0, 0.0, 20.0), SolverParams(eps0=0.1), keep_trace=False)
    b = solve(sc, (110.0, 0.0, 20.0), SolverParams(eps0=0.1), keep_trace=False)
    assert a.point == b.point and a.iterations == b.iterations and a.residual == b.residual


def test_solver_params_validation():
    with pytest.raises(InvalidScenarioError):
        SolverParams(eps0=0)
    with pytest.raises(InvalidScenarioError):
        SolverParams(gamma=1.0)
    with pytest.raises(InvalidScenarioError):
        SolverParams(sphere_grid=(1, 10))
    assert SolverParams(eps0=0.05).eps_star == 0.05
