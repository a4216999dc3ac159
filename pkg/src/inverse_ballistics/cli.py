"""Command line front end: ``inverse-ballistics solve scenario.json``."""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import BallisticsError, DomainError, InvalidScenarioError
from .geometry import GravityContext, trajectory_point
from .scenario import RunSpec, ScenarioFile, load_scenario
from .solver import SolveResult, solve

__all__ = ["ResultRow", "run_scenario", "export_polyline", "write_csv", "format_table", "main", "THREADS_ENV"]

THREADS_ENV = "INVERSE_BALLISTICS_THREADS"

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_CONFIG = 0, 1, 2

CSV_COLUMNS = (
    "row", "label", "task", "target", "cone", "eps", "x_N", "y_N", "z_N", "phi_deg", "psi_deg",
    "residual", "distance", "branch", "k_total", "t_s", "status", "grazing",
)

log = logging.getLogger("inverse_ballistics")


@dataclass(frozen=True)
class ResultRow:
    index: int
    run: RunSpec
    result: SolveResult

    @property
    def phi_deg(self) -> float:
        return math.degrees(self.result.angles.phi) if self.result.angles else math.nan

    @property
    def psi_deg(self) -> float:
        return math.degrees(self.result.angles.psi) if self.result.angles else math.nan

    def as_dict(self) -> dict:
        r = self.result
        z = r.point[2] if len(r.point) > 2 else None
        return {
            "row": self.index,
            "label": self.run.label,
            "task": r.task.value,
            "target": self.run.target_name,
            "cone": self.run.cone.name,
            "eps": repr(self.run.eps),
            "x_N": repr(r.point[0]),
            "y_N": repr(r.point[1]),
            "z_N": "" if z is None else repr(z),
            "phi_deg": repr(self.phi_deg),
            "psi_deg": repr(self.psi_deg),
            "residual": repr(r.residual),
            "distance": repr(r.distance),
            "branch": int(r.branch),
            "k_total": r.iterations,
            "t_s": f"{r.wall_time:.3f}",
            "status": r.status.value,
            "grazing": int(r.grazing),
        }


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise InvalidScenarioError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def run_scenario(scen: ScenarioFile | str | os.PathLike, chebyshev: bool = False, keep_trace: bool = False,
                 threads: Optional[int] = None) -> list[ResultRow]:
    """Solve every run of a scenario; rows come back in file order whatever the thread count."""
    if not isinstance(scen, ScenarioFile):
        scen = load_scenario(resolve_path(scen), chebyshev=chebyshev)
    threads = _thread_count() if threads is None else max(1, int(threads))

    def one(run: RunSpec) -> SolveResult:
        return solve(scen.scenario_for(run), run.target, run.params, keep_trace=keep_trace)

    if threads == 1 or len(scen.runs) < 2:
        results = [one(run) for run in scen.runs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, scen.runs))
    return [ResultRow(i, run, res) for i, (run, res) in enumerate(zip(scen.runs, results))]


def export_polyline(result: SolveResult, n_samples: int, ctx: Optional[GravityContext] = None) -> np.ndarray:
    """``n_samples`` points of the solution arc from the muzzle to ``N*`` as an ``(n, 3)`` array."""
    if not result.converged or result.angles is None:
        raise DomainError(f"cannot export the arc of a {result.status.value} result")
    if n_samples < 2:
        raise DomainError("a polyline needs at least two samples")
    v2 = ctx.v2 if ctx is not None else result.v2
    if not math.isfinite(v2):
        raise DomainError("the result does not carry v^2; pass the gravity context")
    ctx = ctx or GravityContext(math.sqrt(v2), 1.0)
    mu = np.linspace(0.0, 1.0, int(n_samples))
    x, y, z = trajectory_point(ctx, result.angles.phi, result.angles.psi, mu * result.ground_distance)
    return np.column_stack([x, y, z])


def write_csv(rows: Sequence[ResultRow], stream) -> None:
    writer = csv.DictWriter(stream, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row.as_dict())


def format_table(rows: Sequence[ResultRow]) -> str:
    head = f"{'M':<8}{'E':<5}{'eps':>6}{'x_N':>10}{'y_N':>9}{'z_N':>9}{'phi':>7}{'psi':>7}{'k':>9}{'t, s':>9}  status"
    lines = [head]
    for row in rows:
        r = row.result
        z = f"{r.point[2]:9.1f}" if len(r.point) > 2 else f"{'':>9}"
        lines.append(
            f"{row.run.target_name:<8}{row.run.cone.name:<5}{row.run.eps:6g}{r.point[0]:10.1f}{r.point[1]:9.1f}{z}"
            f"{row.phi_deg:7.1f}{row.psi_deg:7.1f}{r.iterations:9d}{r.wall_time:9.3f}  {r.status.value}"
        )
    return "\n".join(lines)


def _write_trace(row: ResultRow, folder: Path) -> None:
    for j, res in sorted(row.result.branches.items()):
        if res.trace is None:
            continue
        q = set(res.trace.q_index)
        with open(folder / f"row{row.index:03d}_branch{int(j)}.trace", "w", encoding="utf-8") as fh:
            for i, rec in enumerate(res.trace.records()):
                fh.write(" ".join(f"{k}={int(v) if k == 'k' else repr(v)}" for k, v in rec.items()))
                fh.write(f" q={int(i in q)}\n")


def _write_polyline(row: ResultRow, n: int, folder: Path) -> Optional[Path]:
    if not row.result.converged:
        log.warning("row %d (%s): not converged, no polyline written", row.index, row.run.label)
        return None
    pts = export_polyline(row.result, n)
    path = folder / f"row{row.index:03d}_polyline.csv"
    np.savetxt(path, pts, delimiter=",", header="x,y,z", comments="", fmt="%.17g")
    return path


def resolve_path(name) -> Path:
    """A scenario path, falling back to the scenarios bundled with the package."""
    path = Path(name)
    if path.exists():
        return path
    bundled = resources.files("inverse_ballistics") / "data" / path.name
    if bundled.is_file():
        return Path(str(bundled))
    return path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="inverse-ballistics", description="Barrel direction selection under a visibility cone.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log progress (repeat for debug output)")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="solve every run listed in a scenario file")
    p.add_argument("scenario", help="scenario JSON file, or the name of a bundled one (table1.json, ...)")
    p.add_argument("--out", type=Path, help="write the CSV results here (default: CSV on stdout)")
    p.add_argument("--trace", type=Path, metavar="DIR", help="write a key=value iteration dump per row and branch")
    p.add_argument("--polyline", type=int, metavar="N", help="write N samples of each solution arc as CSV")
    p.add_argument("--polyline-dir", type=Path, default=None, metavar="DIR",
                   help="folder for polylines (default: next to --out, else the current folder)")
    p.add_argument("--chebyshev", action="store_true",
                   help="replace multi-point task I targets by their Chebyshev centre")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.polyline is not None and args.polyline < 2:
        print("error: --polyline needs at least 2 samples", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            scen = load_scenario(resolve_path(args.scenario), chebyshev=args.chebyshev)
        for w in caught:
            log.warning("%s", w.message)
        rows = run_scenario(scen, keep_trace=args.trace is not None)
    except (InvalidScenarioError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BallisticsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED

    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            write_csv(rows, fh)
        print(format_table(rows))
    else:
        buf = io.StringIO()
        write_csv(rows, buf)
        sys.stdout.write(buf.getvalue())
    if args.trace is not None:
        args.trace.mkdir(parents=True, exist_ok=True)
        for row in rows:
            _write_trace(row, args.trace)
    if args.polyline is not None:
        folder = args.polyline_dir or (args.out.parent if args.out is not None else Path("."))
        folder.mkdir(parents=True, exist_ok=True)
        for row in rows:
            _write_polyline(row, args.polyline, folder)
    return EXIT_OK if all(r.result.converged for r in rows) else EXIT_NOT_CONVERGED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
