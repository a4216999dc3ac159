"""Smallest enclosing circle of a planar point set (Welzl, iterative form)."""
from __future__ import annotations

import math
import random
from typing import NamedTuple, Sequence

from .errors import DomainError

__all__ = ["Circle", "smallest_enclosing_circle", "chebyshev_center"]

_REL_TOL = 1e-12


class Circle(NamedTuple):
    x: float
    y: float
    r: float

    def contains(self, p, tol: float = _REL_TOL) -> bool:
        return math.hypot(p[0] - self.x, p[1] - self.y) <= self.r * (1.0 + tol) + tol


def _two(a, b) -> Circle:
    cx, cy = 0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])
    return Circle(cx, cy, max(math.hypot(a[0] - cx, a[1] - cy), math.hypot(b[0] - cx, b[1] - cy)))


def _three(a, b, c) -> Circle | None:
    ox = (min(a[0], b[0], c[0]) + max(a[0], b[0], c[0])) / 2
    oy = (min(a[1], b[1], c[1]) + max(a[1], b[1], c[1])) / 2
    ax, ay = a[0] - ox, a[1] - oy
    bx, by = b[0] - ox, b[1] - oy
    cx, cy = c[0] - ox, c[1] - oy
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if d == 0.0:
        return None
    a2, b2, c2 = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    x = ox + (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    y = oy + (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    r = max(math.hypot(p[0] - x, p[1] - y) for p in (a, b, c))
    return Circle(x, y, r)


def _with_two(points, p, q) -> Circle:
    circ = _two(p, q)
    left = right = None
    px, py, qx, qy = p[0], p[1], q[0], q[1]
    for r in points:
        if circ.contains(r):
            continue
        cross = (qx - px) * (r[1] - py) - (qy - py) * (r[0] - px)
        c = _three(p, q, r)
        if c is None:
            continue
        side = (qx - px) * (c.y - py) - (qy - py) * (c.x - px)
        if cross > 0 and (left is None or side > (qx - px) * (left.y - py) - (qy - py) * (left.x - px)):
            left = c
        elif cross < 0 and (right is None or side < (qx - px) * (right.y - py) - (qy - py) * (right.x - px)):
            right = c
    if left is None and right is None:
        return circ
    if left is None:
        return right
    if right is None:
        return left
    return left if left.r <= right.r else right


def _with_one(points, p) -> Circle:
    circ = Circle(p[0], p[1], 0.0)
    for i, q in enumerate(points):
        if not circ.contains(q):
            circ = _two(p, q) if circ.r == 0.0 else _with_two(points[: i + 1], p, q)
    return circ


def smallest_enclosing_circle(points: Sequence, seed: int = 0) -> Circle:
    """Minimal circle containing every point; the shuffle is seeded so the result is reproducible."""
    pts = [(float(p[0]), float(p[1])) for p in points]
    if not pts:
        raise DomainError("the enclosing circle of an empty set is undefined")
    if any(not (math.isfinite(x) and math.isfinite(y)) for x, y in pts):
        raise DomainError("points must be finite")
    random.Random(seed).shuffle(pts)
    circ = None
    for i, p in enumerate(pts):
        if circ is None or not circ.contains(p):
            circ = _with_one(pts[: i + 1], p)
    return circ


def chebyshev_center(points: Sequence) -> tuple[float, float]:
    """Centre of the smallest enclosing circle: the point minimising the largest distance to the set."""
    c = smallest_enclosing_circle(points)
    return (c.x, c.y)
