"""Spatial primitives: ENU vectors, axis-aligned boxes, convex polygons.

All coordinates are meters in a local east-north-up frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for c in (self.x, self.y, self.z):
            if not math.isfinite(c):
                raise ValueError(f"non-finite Vec3 component: {self!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @staticmethod
    def from_seq(seq: Sequence[float]) -> "Vec3":
        if len(seq) != 3:
            raise ValueError(f"Vec3 needs 3 components, got {len(seq)}")
        return Vec3(float(seq[0]), float(seq[1]), float(seq[2]))

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scale(self, k: float) -> "Vec3":
        return Vec3(self.x * k, self.y * k, self.z * k)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def dist(self, other: "Vec3") -> float:
        return (self - other).norm()

    def to_list(self) -> list:
        return [self.x, self.y, self.z]


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box given by min and max corners (min < max per axis)."""

    lo: Vec3
    hi: Vec3

    def __post_init__(self):
        if not (self.lo.x < self.hi.x and self.lo.y < self.hi.y and self.lo.z < self.hi.z):
            raise ValueError(f"degenerate box: min corner must be < max corner, got {self.lo} / {self.hi}")

    def contains_open(self, p: Vec3) -> bool:
        return (self.lo.x < p.x < self.hi.x
                and self.lo.y < p.y < self.hi.y
                and self.lo.z < p.z < self.hi.z)


def segment_hits_box(a: Vec3, b: Vec3, box: Aabb) -> bool:
    """Slab test: does the open segment a-b enter the open interior of the box?

    Strict inequalities throughout, so a segment that merely grazes a face or
    edge does NOT count as a hit (shared faces never occlude).
    """
    lo = (box.lo.x, box.lo.y, box.lo.z)
    hi = (box.hi.x, box.hi.y, box.hi.z)
    av = (a.x, a.y, a.z)
    bv = (b.x, b.y, b.z)
    t_enter, t_exit = 0.0, 1.0
    for i in range(3):
        d = bv[i] - av[i]
        if d == 0.0:
            # Parallel to this slab: must lie strictly inside it.
            if not (lo[i] < av[i] < hi[i]):
                return False
        else:
            t0 = (lo[i] - av[i]) / d
            t1 = (hi[i] - av[i]) / d
            if t0 > t1:
                t0, t1 = t1, t0
            t_enter = max(t_enter, t0)
            t_exit = min(t_exit, t1)
            if t_enter >= t_exit:
                return False
    # Non-empty open overlap with (0, 1) means the segment passes through
    # the interior, not just a boundary point.
    return t_enter < t_exit


class Polygon2D:
    """Convex 2D polygon (vertex list, no repeated closing vertex)."""

    def __init__(self, vertices: Sequence[Sequence[float]]):
        if len(vertices) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        self.vertices = [(float(v[0]), float(v[1])) for v in vertices]
        if abs(self.signed_area()) < 1e-9:
            raise ValueError("degenerate polygon: zero area")
        if not self._is_convex():
            raise ValueError("polygon footprint must be convex")

    def signed_area(self) -> float:
        s = 0.0
        n = len(self.vertices)
        for i in range(n):
            x0, y0 = self.vertices[i]
            x1, y1 = self.vertices[(i + 1) % n]
            s += x0 * y1 - x1 * y0
        return 0.5 * s

    def _is_convex(self) -> bool:
        n = len(self.vertices)
        sign = 0
        for i in range(n):
            x0, y0 = self.vertices[i]
            x1, y1 = self.vertices[(i + 1) % n]
            x2, y2 = self.vertices[(i + 2) % n]
            cross = (x1 - x0) * (y2 - y1) - (y1 - y0) * (x2 - x1)
            if abs(cross) < 1e-12:
                continue  # collinear run is fine
            s = 1 if cross > 0 else -1
            if sign == 0:
                sign = s
            elif s != sign:
                return False
        return True

    def contains(self, x: float, y: float) -> bool:
        """Ray-cast point-in-polygon; boundary points count as inside."""
        n = len(self.vertices)
        inside = False
        for i in range(n):
            x0, y0 = self.vertices[i]
            x1, y1 = self.vertices[(i + 1) % n]
            # On-edge check (within tolerance) -> inside.
            dx, dy = x1 - x0, y1 - y0
            seg_len2 = dx * dx + dy * dy
            if seg_len2 > 0:
                t = ((x - x0) * dx + (y - y0) * dy) / seg_len2
                if 0.0 <= t <= 1.0:
                    px, py = x0 + t * dx, y0 + t * dy
                    if (x - px) ** 2 + (y - py) ** 2 < 1e-18:
                        return True
            if (y0 > y) != (y1 > y):
                xi = x0 + (y - y0) * dx / dy
                if x < xi:
                    inside = not inside
        return inside

    def to_list(self) -> list:
        return [[x, y] for x, y in self.vertices]
