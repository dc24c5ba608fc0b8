"""Planar geometry helpers shared by the simulator and the mapper."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator


@dataclass(frozen=True)
class Segment:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.x1, self.y1, self.x2, self.y2)):
            raise ValueError("segment endpoints must be finite")

    @property
    def length(self) -> float:
        return math.hypot(self.x2 - self.x1, self.y2 - self.y1)

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]


def box_segments(xmin: float, ymin: float, xmax: float, ymax: float) -> list[Segment]:
    """The four sides of an axis-aligned rectangle, counter-clockwise."""
    return [
        Segment(xmin, ymin, xmax, ymin),
        Segment(xmax, ymin, xmax, ymax),
        Segment(xmax, ymax, xmin, ymax),
        Segment(xmin, ymax, xmin, ymin),
    ]


def point_segment_distance(px: float, py: float, s: Segment) -> float:
    dx, dy = s.x2 - s.x1, s.y2 - s.y1
    denom = dx * dx + dy * dy
    if denom == 0.0:
        return math.hypot(px - s.x1, py - s.y1)
    t = ((px - s.x1) * dx + (py - s.y1) * dy) / denom
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (s.x1 + t * dx), py - (s.y1 + t * dy))


def ray_segment(ox: float, oy: float, dx: float, dy: float, s: Segment) -> tuple[float, float] | None:
    """Ray ``o + t*d`` (unit ``d``) against a segment.

    Returns ``(t, cos_incidence)`` for the hit, or ``None`` for a miss or a
    ray parallel to the segment.
    """
    ex, ey = s.x2 - s.x1, s.y2 - s.y1
    denom = dx * ey - dy * ex
    if abs(denom) < 1e-15:
        return None
    wx, wy = s.x1 - ox, s.y1 - oy
    t = (wx * ey - wy * ex) / denom
    u = (wx * dy - wy * dx) / denom
    if t < 0.0 or u < 0.0 or u > 1.0:
        return None
    # |d x e| / |e| = |cos| of the angle between d and the segment normal
    return t, abs(denom) / math.hypot(ex, ey)


def ray_circle(ox: float, oy: float, dx: float, dy: float, cx: float, cy: float, radius: float) -> tuple[float, float] | None:
    """Nearest forward hit of a unit ray on a circle, as ``(t, cos_incidence)``."""
    fx, fy = ox - cx, oy - cy
    b = fx * dx + fy * dy
    c = fx * fx + fy * fy - radius * radius
    disc = b * b - c
    if disc < 0.0:
        return None
    root = math.sqrt(disc)
    t = -b - root
    if t < 0.0:
        t = -b + root
        if t < 0.0 or c < 0.0:
            # origin inside the circle: no return from this body
            return None
    hx, hy = fx + t * dx, fy + t * dy
    return t, abs(hx * dx + hy * dy) / radius


def bresenham(x0: int, y0: int, x1: int, y1: int) -> Iterator[tuple[int, int]]:
    """Grid cells on the line from ``(x0, y0)`` to ``(x1, y1)``, both inclusive."""
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        yield x0, y0
        if x0 == x1 and y0 == y1:
            return
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy
