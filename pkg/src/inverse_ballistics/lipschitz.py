"""Certified (epsilon-)Lipschitz constants for every function in the residual chain.

A function ``f`` is epsilon-Lipschitz with bound ``L(eps)`` when
``|f(a) - f(b)| <= L(eps) * ||a - b||_1 + eps`` for all ``a, b`` in its domain.
All constants here are with respect to the 1-norm on the argument.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import DomainError
from .geometry import BranchId, GravityContext, ReachableSetParams, Task

__all__ = [
    "EpsLipBound",
    "TAU_EPS_MAX",
    "tau_residual",
    "tau_root",
    "lip_arcsin",
    "lip_cone",
    "lip_azimuth",
    "lip_radius",
    "lip_elevation",
    "lip_residual",
]

# upper end of the admissible range of the arcsin slack
TAU_EPS_MAX = math.pi / 2 - 1.0


@dataclass(frozen=True)
class EpsLipBound:
    L: float
    eps: Optional[float] = None

    def __post_init__(self):
        if not (self.L > 0 and math.isfinite(self.L)):
            raise DomainError(f"Lipschitz bound must be positive and finite, got {self.L}")
        if self.eps is not None and not self.eps > 0:
            raise DomainError(f"eps must be positive, got {self.eps}")

    def __float__(self):
        return float(self.L)


def tau_residual(tau: float, eps: float) -> float:
    """``(pi/2 - eps - arcsin tau) * sqrt(1 - tau^2) - (1 - tau)``."""
    return (math.pi / 2 - eps - math.asin(tau)) * math.sqrt(1.0 - tau * tau) - (1.0 - tau)


def tau_root(eps: float, tol: float = 1e-12) -> float:
    """Root on [0, 1) of ``tau_residual(., eps)`` by bisection.

    The residual is positive at 0 for ``eps < pi/2 - 1`` and negative just
    below 1, so the bracket always holds a sign change.  At the upper end
    ``eps = pi/2 - 1`` the root is 0.
    """
    eps = float(eps)
    if not 0.0 < eps <= TAU_EPS_MAX:
        raise DomainError(f"eps must lie in (0, pi/2 - 1], got {eps}")
    if tau_residual(0.0, eps) <= 0.0:
        return 0.0
    lo, hi = 0.0, 1.0 - 1e-15
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if tau_residual(mid, eps) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def lip_arcsin(eps: float) -> EpsLipBound:
    """epsilon-Lipschitz bound of ``arcsin`` on [0, 1]: ``(1 - tau(eps)^2)^(-1/2)``."""
    tau = tau_root(eps)
    return EpsLipBound(1.0 / math.sqrt(1.0 - tau * tau), eps)


def lip_cone(cone) -> float:
    """Lipschitz constant of the cone function ``g(phi, psi)``."""
    return max(float(cone.lip_g1), float(cone.lip_g2), 1.0)


def lip_azimuth(kappa: float) -> float:
    if not kappa > 0:
        raise DomainError(f"kappa must be positive, got {kappa}")
    return math.sqrt(2.0) / kappa


def lip_radius() -> float:
    """Constant used for ``sqrt(x^2 + y^2)``."""
    return math.sqrt(2.0)


def _beta(ctx: GravityContext, params: ReachableSetParams) -> float:
    v2 = ctx.v2
    return v2 + math.sqrt(v2 * v2 - params.kappa ** 2 - 2.0 * v2 * params.z_min)


def lip_elevation(task, eps: float, ctx: GravityContext, params: ReachableSetParams) -> EpsLipBound:
    """Bound for the branch elevation ``psi_j(N)`` on W (same for both branches)."""
    family = "II" if task == "II" else Task.parse(task).family
    eps = float(eps)
    if family == "I":
        if not 0.0 < 2.0 * eps <= TAU_EPS_MAX:
            raise DomainError(f"planar elevation bound needs 2*eps in (0, pi/2 - 1], got eps={eps}")
        tau = tau_root(2.0 * eps)
        return EpsLipBound(1.0 / (math.sqrt(2.0) * ctx.v2 * math.sqrt(1.0 - tau * tau)), eps)
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    if params.z_min is None:
        raise DomainError("the spatial elevation bound needs z_min")
    return EpsLipBound((params.rho / (2.0 * eps) + _beta(ctx, params) * math.sqrt(2.0)) / params.kappa ** 2, eps)


def lip_residual(task, j: BranchId, eps: float, scenario) -> EpsLipBound:
    """Bound ``lip(F_j; eps)`` for the residual of ``task`` (same for both branches).

    The cone term receives the slack ``eps / (w1 lip(g))`` so that after
    weighting its additive error is exactly ``eps``.
    """
    task = Task.parse(task)
    eps = float(eps)
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    w = scenario.weights.values
    ctx, reach = scenario.ctx, scenario.reach
    lg = lip_cone(scenario.cone)
    inner = eps / (w[0] * lg)
    cone_term = w[0] * lg * (lip_azimuth(reach.kappa) + lip_elevation(task.family, inner, ctx, reach).L)
    terms = [cone_term, w[1]]
    if task is Task.SPATIAL:
        terms.append(w[2])
    elif task is Task.TERRAIN:
        lh = scenario.terrain.lip_h
        terms += [w[2] * lh, w[3] * lh]
        # weights above one would scale the additive slack as well
        e5 = eps / max(w[4], 1.0)
        terms.append(w[4] * lh * (reach.rho * lh / (8.0 * e5) + 1.0))
    return EpsLipBound(max(terms), eps)
