"""Loading and validation of JSON scenario files.

A scenario file describes one task and a list of runs.  Lengths are metres,
speeds m/s, angles in degrees (converted to radians here, once).

.. code-block:: json

    {
      "task": "II.a",
      "v0": 180, "g": 9.80665, "kappa": 100, "z_min": -10,
      "weights": [1, 0.01, 0.01],
      "terrain": "box",
      "targets": {"M1": [110, 0, 20]},
      "cones": {"narrow": {"theta1": 0, "theta2": 360,
                           "g1": {"constant": 30}, "g2": {"table": [[0, 40], [360, 45]]}}},
      "solver": {"gamma": 0.5, "lambda": 0.5, "sphere_grid": [48, 96]},
      "runs": [{"target": "M1", "cone": "E1", "eps": 0.1}]
    }

``cone`` in a run names a builtin (``E1``, ``E2``) or an entry of ``cones``;
``target`` names an entry of ``targets`` or gives coordinates inline.  A
run may carry its own ``solver`` object; its keys override the file-level
ones for that run only.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

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
    validate_declared_lipschitz,
)
from .enclosing import chebyshev_center
from .errors import BallisticsError, ConfigurationError, InvalidScenarioError
from .geometry import Task
from .solver import SolverParams

__all__ = ["RunSpec", "ScenarioFile", "load_scenario", "parse_scenario", "reduce_multitarget", "BUILTIN_CONES"]

BUILTIN_CONES = {"E1": cone_e1, "E2": cone_e2}

_TOP_KEYS = {"task", "v0", "g", "kappa", "z_min", "weights", "terrain", "targets", "cones", "solver", "clearance", "runs", "name"}
_SOLVER_KEYS = {
    "gamma": "gamma",
    "lambda": "lam",
    "eps_star": "eps_star",
    "eps_q": "eps_q",
    "max_iter": "max_iter",
    "circle_grid": "circle_grid",
    "sphere_grid": "sphere_grid",
    "seeds": "seeds",
    "max_refine": "max_refine",
    "delta_factor": "delta_factor",
    "eps_floor_ratio": "eps_floor_ratio",
    "stop_rule": "stop_rule",
}
_RUN_KEYS = {"target", "cone", "eps", "label", "reference", "solver"}


@dataclass(frozen=True)
class RunSpec:
    label: str
    target_name: str
    target: tuple
    cone: VisibilityCone
    params: SolverParams
    reference: Optional[dict] = None

    @property
    def eps(self) -> float:
        return self.params.eps0


@dataclass(frozen=True)
class ScenarioFile:
    name: str
    scenario: Scenario
    runs: tuple = field(default=())

    def scenario_for(self, run: RunSpec) -> Scenario:
        return _with_cone(self.scenario, run.cone).with_target(run.target)


def _with_cone(scenario: Scenario, cone: VisibilityCone) -> Scenario:
    return Scenario(
        task=scenario.task,
        ctx=scenario.ctx,
        reach=scenario.reach,
        cone=cone,
        weights=scenario.weights,
        terrain=scenario.terrain,
        clearance=scenario.clearance,
        target=scenario.target,
    )


def _fail(path: str, message: str):
    raise ConfigurationError(f"{path}: {message}")


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        _fail(path, f"expected a finite number, got {value!r}")
    return float(value)


def _check_keys(obj, allowed, path: str):
    if not isinstance(obj, dict):
        _fail(path, f"expected an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        _fail(path, f"unknown field(s) {', '.join(unknown)}")


def _bound(spec, path: str):
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return ConstantBound(math.radians(_number(spec, path)))
    _check_keys(spec, {"constant", "table", "sine"}, path)
    if len(spec) != 1:
        _fail(path, "give exactly one of constant, table, sine")
    (kind, body), = spec.items()
    where = f"{path}.{kind}"
    if kind == "constant":
        return ConstantBound(math.radians(_number(body, where)))
    if kind == "table":
        if not isinstance(body, list) or not all(isinstance(p, list) and len(p) == 2 for p in body):
            _fail(where, "expected a list of [phi, psi] pairs in degrees")
        phis = [math.radians(_number(p[0], f"{where}[{i}][0]")) for i, p in enumerate(body)]
        vals = [math.radians(_number(p[1], f"{where}[{i}][1]")) for i, p in enumerate(body)]
        try:
            return TableBound(tuple(phis), tuple(vals))
        except InvalidScenarioError as exc:
            _fail(where, str(exc))
    _check_keys(body, {"a", "b", "c", "absolute"}, where)
    coeffs = {k: math.radians(_number(body.get(k, 0.0), f"{where}.{k}")) for k in "abc"}
    return SineBound(coeffs["a"], coeffs["b"], coeffs["c"], bool(body.get("absolute", True)))


def _cone(spec, path: str, name: str) -> VisibilityCone:
    if isinstance(spec, str):
        if spec not in BUILTIN_CONES:
            _fail(path, f"unknown builtin cone {spec!r}; expected one of {', '.join(BUILTIN_CONES)}")
        return BUILTIN_CONES[spec]()
    _check_keys(spec, {"theta1", "theta2", "g1", "g2", "lip_g1", "lip_g2"}, path)
    for key in ("g1", "g2"):
        if key not in spec:
            _fail(path, f"missing field {key}")
    theta1 = math.radians(_number(spec.get("theta1", 0.0), f"{path}.theta1"))
    theta2 = math.radians(_number(spec.get("theta2", 360.0), f"{path}.theta2"))
    lips = {}
    for key in ("lip_g1", "lip_g2"):
        if key in spec:
            # dimensionless: radians of elevation per radian of azimuth
            lips[key] = _number(spec[key], f"{path}.{key}")
    try:
        return VisibilityCone(theta1, theta2, _bound(spec["g1"], f"{path}.g1"), _bound(spec["g2"], f"{path}.g2"), name=name, **lips)
    except InvalidScenarioError as exc:
        _fail(path, str(exc))


def _terrain(spec, path: str) -> TerrainField:
    if spec == "box":
        return box_terrain()
    if isinstance(spec, dict) and "tree" in spec:
        _check_keys(spec, {"tree", "lip_h"}, path)
        lip = _number(spec["lip_h"], f"{path}.lip_h") if "lip_h" in spec else None
        return TerrainField.from_spec(spec["tree"], lip_h=lip)
    return TerrainField.from_spec(spec)


def reduce_multitarget(points) -> tuple:
    """Replace a set of planar targets by the centre of their smallest enclosing circle."""
    return chebyshev_center([(p[0], p[1]) for p in points])


def _target(value, path: str, task: Task, chebyshev: bool) -> tuple:
    if not isinstance(value, list) or not value:
        _fail(path, "expected a coordinate list")
    if isinstance(value[0], list):
        pts = [[_number(c, f"{path}[{i}][{k}]") for k, c in enumerate(p)] for i, p in enumerate(value)]
        if len(pts) == 1:
            value = pts[0]
        elif not chebyshev:
            _fail(path, "several target points given; pass --chebyshev to replace them by their Chebyshev centre")
        elif task is not Task.PLANAR:
            _fail(path, "multi-point targets are only reduced for task I")
        else:
            return tuple(reduce_multitarget(pts))
    coords = [_number(c, f"{path}[{i}]") for i, c in enumerate(value)]
    if task is Task.PLANAR:
        if len(coords) == 3:
            warnings.warn(f"{path}: task I target has a z coordinate; it is ignored", stacklevel=3)
            coords = coords[:2]
        if len(coords) != 2:
            _fail(path, "task I targets need 2 coordinates")
    elif len(coords) != 3:
        _fail(path, f"task {task.value} targets need 3 coordinates")
    return tuple(coords)


def _solver_options(solver, path: str) -> dict:
    _check_keys(solver, _SOLVER_KEYS, path)
    out = {}
    for key, value in solver.items():
        where = f"{path}.{key}"
        if key == "sphere_grid":
            if not isinstance(value, list) or len(value) != 2:
                _fail(where, "expected [n_polar, n_azimuth]")
            out["sphere_grid"] = tuple(int(_number(v, where)) for v in value)
        elif key == "stop_rule":
            if not isinstance(value, str):
                _fail(where, "expected a string")
            out["stop_rule"] = value
        elif key in ("max_iter", "circle_grid", "seeds", "max_refine"):
            out[_SOLVER_KEYS[key]] = int(_number(value, where))
        else:
            out[_SOLVER_KEYS[key]] = _number(value, where)
    return out


def parse_scenario(data: Any, chebyshev: bool = False, source: str = "<scenario>") -> ScenarioFile:
    """Validate a decoded scenario document and build the runs it lists."""
    _check_keys(data, _TOP_KEYS, source)
    if "task" not in data:
        _fail(source, "missing field task")
    try:
        task = Task.parse(data["task"])
    except InvalidScenarioError as exc:
        _fail(f"{source}.task", str(exc))
    physics = {k: _number(data[k], f"{source}.{k}") for k in ("v0", "g", "kappa", "z_min") if k in data}

    weights = None
    if "weights" in data:
        w = data["weights"]
        if not isinstance(w, list):
            _fail(f"{source}.weights", "expected a list of numbers")
        weights = WeightSet(tuple(_number(v, f"{source}.weights[{i}]") for i, v in enumerate(w)))

    terrain = None
    if "terrain" in data:
        if task is not Task.TERRAIN:
            _fail(f"{source}.terrain", f"task {task.value} does not use a terrain")
        try:
            terrain = _terrain(data["terrain"], f"{source}.terrain")
        except InvalidScenarioError as exc:
            _fail(f"{source}.terrain", str(exc))

    clearance = ClearanceGrid()
    if "clearance" in data:
        spec = data["clearance"]
        _check_keys(spec, {"n_lambda", "n_mu", "refine_iters"}, f"{source}.clearance")
        try:
            clearance = ClearanceGrid(**{k: int(_number(v, f"{source}.clearance.{k}")) for k, v in spec.items()})
        except InvalidScenarioError as exc:
            _fail(f"{source}.clearance", str(exc))

    try:
        base = Scenario.build(task, weights=weights, terrain=terrain, clearance=clearance, **physics)
    except InvalidScenarioError as exc:
        _fail(source, str(exc))
    if isinstance(data.get("terrain"), dict) and "lip_h" in data["terrain"]:
        try:
            validate_declared_lipschitz(base)
        except BallisticsError as exc:
            _fail(f"{source}.terrain.lip_h", str(exc))

    solver_kw = _solver_options(data.get("solver", {}), f"{source}.solver")
    try:
        SolverParams(**solver_kw)
    except InvalidScenarioError as exc:
        _fail(f"{source}.solver", str(exc))

    cones = {}
    cone_specs = data.get("cones", {})
    if not isinstance(cone_specs, dict):
        _fail(f"{source}.cones", "expected an object")
    for name, spec in cone_specs.items():
        cones[name] = _cone(spec, f"{source}.cones.{name}", name)
        if cones[name].lip_g1 != cones[name].g1.lip or cones[name].lip_g2 != cones[name].g2.lip:
            try:
                validate_declared_lipschitz(_with_cone(base, cones[name]))
            except BallisticsError as exc:
                _fail(f"{source}.cones.{name}", str(exc))

    targets_spec = data.get("targets", {})
    if not isinstance(targets_spec, dict):
        _fail(f"{source}.targets", "expected an object")
    targets = {name: _target(v, f"{source}.targets.{name}", task, chebyshev) for name, v in targets_spec.items()}

    runs_spec = data.get("runs", [])
    if not isinstance(runs_spec, list):
        _fail(f"{source}.runs", "expected a list")
    runs = []
    for i, run in enumerate(runs_spec):
        where = f"{source}.runs[{i}]"
        _check_keys(run, _RUN_KEYS, where)
        for key in ("target", "cone", "eps"):
            if key not in run:
                _fail(where, f"missing field {key}")
        tgt = run["target"]
        if isinstance(tgt, str):
            if tgt not in targets:
                _fail(f"{where}.target", f"unknown target {tgt!r}")
            target_name, target = tgt, targets[tgt]
        else:
            target = _target(tgt, f"{where}.target", task, chebyshev)
            target_name = "(" + ", ".join(f"{c:g}" for c in target) + ")"
        cone_name = run["cone"]
        if not isinstance(cone_name, str):
            _fail(f"{where}.cone", "expected a cone name")
        if cone_name in cones:
            cone = cones[cone_name]
        else:
            cone = _cone(cone_name, f"{where}.cone", cone_name)
        eps = _number(run["eps"], f"{where}.eps")
        try:
            overrides = _solver_options(run.get("solver", {}), f"{where}.solver")
            params = SolverParams(eps0=eps, **{**solver_kw, **overrides})
        except InvalidScenarioError as exc:
            _fail(where, str(exc))
        reference = run.get("reference")
        if reference is not None and not isinstance(reference, dict):
            _fail(f"{where}.reference", "expected an object")
        label = str(run.get("label", f"{target_name} {cone_name} {eps:g}"))
        runs.append(RunSpec(label, target_name, target, cone, params, reference))
    return ScenarioFile(str(data.get("name", source)), base, tuple(runs))


def load_scenario(path, chebyshev: bool = False) -> ScenarioFile:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"{path}: cannot read scenario file ({exc.strerror})") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_scenario(data, chebyshev=chebyshev, source=path.name)
