import math

import mpmath
import numpy as np
import pytest

from _sampling import sample_pairs
from inverse_ballistics import _kernels as K
from inverse_ballistics.constraints import ConstantBound, Scenario, TableBound, VisibilityCone, cone_e1, cone_e2
from inverse_ballistics.errors import DomainError
from inverse_ballistics.geometry import inverse_elevation_planar, inverse_elevation_spatial
from inverse_ballistics.lipschitz import (
    TAU_EPS_MAX,
    EpsLipBound,
    lip_arcsin,
    lip_azimuth,
    lip_cone,
    lip_elevation,
    lip_residual,
    tau_residual,
    tau_root,
)

EPSILONS = (0.01, 0.05, 0.1)


def mp_tau(eps):
    mpmath.mp.dps = 40
    f = lambda t: (mpmath.pi / 2 - eps - mpmath.asin(t)) * mpmath.sqrt(1 - t * t) - (1 - t)
    return float(mpmath.findroot(f, (mpmath.mpf(0), mpmath.mpf(1) - mpmath.mpf(10) ** -30), solver="bisect"))


@pytest.mark.parametrize("eps", [0.01, 0.1, 0.3, 0.5, TAU_EPS_MAX - 0.01])
def test_tau_root_matches_high_precision_oracle(eps):
    assert tau_root(eps) == pytest.approx(mp_tau(eps), abs=1e-10)


def test_tau_root_boundary_and_domain():
    assert tau_root(TAU_EPS_MAX) == pytest.approx(0.0, abs=1e-12)
    for bad in (0.0, -0.1, TAU_EPS_MAX + 1e-9, 2.0):
        with pytest.raises(DomainError):
            tau_root(bad)


def test_tau_root_decreases_with_eps():
    taus = [tau_root(e) for e in np.linspace(0.01, TAU_EPS_MAX, 50)]
    assert all(b < a for a, b in zip(taus, taus[1:]))
    assert all(abs(tau_residual(t, e)) < 1e-10 for t, e in zip(taus, np.linspace(0.01, TAU_EPS_MAX, 50)))


@pytest.mark.parametrize("eps", EPSILONS)
def test_arcsin_eps_lipschitz(eps):
    rng = np.random.default_rng(0)
    L = lip_arcsin(eps).L
    a = rng.random(200000)
    b = np.clip(np.where(rng.random(200000) < 0.5, a + rng.normal(0, 1e-3, 200000), rng.random(200000)), 0, 1)
    # points near 1 are where arcsin is steepest
    a[:1000] = 1.0
    gap = np.abs(np.arcsin(a) - np.arcsin(b)) - (L * np.abs(a - b) + eps)
    assert gap.max() <= 1e-12


def test_eps_lip_bound_validation():
    assert float(EpsLipBound(2.0, 0.1)) == 2.0
    with pytest.raises(DomainError):
        EpsLipBound(0.0)
    with pytest.raises(DomainError):
        EpsLipBound(1.0, -0.1)


def test_lip_constants_hand_values():
    assert lip_azimuth(100.0) == pytest.approx(math.sqrt(2) / 100)
    assert lip_cone(cone_e1()) == 1.0
    # the azimuth and elevation terms of the cone function have slope 1
    assert lip_cone(cone_e2()) == 1.0
    assert cone_e2().lip_g2 == pytest.approx(math.pi / 9)
    sc = Scenario.build("II.a")
    v2, kappa, zmin = sc.ctx.v2, 100.0, -10.0
    beta = v2 + math.sqrt(v2 * v2 - kappa ** 2 - 2 * v2 * zmin)
    expected = (sc.reach.rho / 0.2 + beta * math.sqrt(2)) / kappa ** 2
    assert lip_elevation("II", 0.1, sc.ctx, sc.reach).L == pytest.approx(expected, rel=1e-14)
    with pytest.raises(DomainError):
        lip_elevation("I", 0.3, sc.ctx, sc.reach)


def test_lip_residual_terms():
    sc = Scenario.build("II.b")
    bound = lip_residual("II.b", 1, 0.1, sc).L
    w5_term = 0.001 * 1.0 * (sc.reach.rho / (8 * 0.1) + 1.0)
    assert bound >= w5_term
    assert lip_residual("I", 1, 0.1, Scenario.build("I")).L >= 0.01


def _azimuth_gap(a, b, L):
    pa = np.arctan(a[:, 1] / a[:, 0])
    pb = np.arctan(b[:, 1] / b[:, 0])
    return np.abs(pa - pb) - L * np.abs(a - b).sum(axis=1)


@pytest.mark.parametrize("task", ["I", "II.a"])
def test_azimuth_lipschitz_on_w(task):
    sc = Scenario.build(task)
    a, b = sample_pairs(np.random.default_rng(1), sc, 100000)
    assert _azimuth_gap(a, b, lip_azimuth(sc.reach.kappa)).max() <= 1e-12


@pytest.mark.parametrize("eps", EPSILONS)
@pytest.mark.parametrize("task", ["I", "II.a"])
def test_elevation_eps_lipschitz_on_w(task, eps):
    sc = Scenario.build(task)
    a, b = sample_pairs(np.random.default_rng(2), sc, 100000)
    L = lip_elevation(task, eps, sc.ctx, sc.reach).L
    f = inverse_elevation_planar if task == "I" else inverse_elevation_spatial
    for j in (1, 2):
        gap = np.abs(f(sc.ctx, a.T, j) - f(sc.ctx, b.T, j)) - (L * np.abs(a - b).sum(axis=1) + eps)
        assert gap.max() <= 1e-9


@pytest.mark.parametrize("eps", EPSILONS)
@pytest.mark.parametrize("task", ["I", "II.a", "II.b"])
def test_residual_eps_lipschitz_on_w(task, eps):
    rng = np.random.default_rng(3)
    # a sector that does not start at zero straddles phi = 0 inside W
    sector = VisibilityCone(math.radians(10), math.radians(60), TableBound((-1.0, 1.0), (0.3, 0.5)), ConstantBound(0.7))
    for cone in (cone_e1(), cone_e2(), sector):
        target = (110.0, 0.0, 20.0)[: 2 if task == "I" else 3]
        sc = Scenario.build(task, cone=cone, target=target)
        a, b = sample_pairs(rng, sc, 50000)
        L = lip_residual(task, 1, eps, sc).L
        for j in (1, 2):
            enc = sc.encode(j)
            fa = K.residual_many(np.ascontiguousarray(a), *enc)
            fb = K.residual_many(np.ascontiguousarray(b), *enc)
            gap = np.abs(fa - fb) - (L * np.abs(a - b).sum(axis=1) + eps)
            assert gap.max() <= 1e-9
