"""Swarm application controllers and the maps/metrics they maintain.

Policies are pure functions of one robot's observations. They see
max-range-sentineled IR distances, the odometry pose and, for flocking,
neighbor relative state supplied by an emulated overhead sensor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import Segment, bresenham, point_segment_distance
from .kinematics import Pose2D, Twist, angle_diff

FRONT = (7, 0, 1)
LEFT = (1, 2, 3)
RIGHT = (5, 6, 7)


@dataclass(frozen=True)
class CoverageParams:
    threshold: float = 0.08
    cruise: float = 0.1
    jitter: float = 0.3  # rad/s, uniform heading noise bound
    turn_rate: float = 1.5
    max_linear: float = 0.25


def coverage_policy(
    ranges: Sequence[float],
    rng: np.random.Generator,
    params: CoverageParams = CoverageParams(),
    turning: int = 0,
) -> tuple[Twist, int]:
    """Random walk with reactive obstacle avoidance.

    ``turning`` is the direction (+1 left, -1 right) the robot was already
    turning in; it is kept while the front stays blocked so the robot does
    not dither in corners. Returns the command and the turn direction to
    carry into the next call (0 once clear).
    """
    front = min(ranges[i] for i in FRONT)
    if front > params.threshold:
        jitter = rng.uniform(-params.jitter, params.jitter)
        return Twist(min(params.cruise, params.max_linear), jitter), 0
    if turning == 0:
        left = sum(ranges[i] for i in LEFT)
        right = sum(ranges[i] for i in RIGHT)
        if left < right:
            turning = -1
        elif right < left:
            turning = 1
        else:
            turning = 1 if rng.random() < 0.5 else -1
    return Twist(0.0, turning * params.turn_rate), turning


@dataclass(frozen=True)
class NeighborState:
    """Neighbor position and velocity relative to the observer, observer frame."""

    relative_position: tuple[float, float]
    relative_velocity: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class FlockingParams:
    w_sep: float = 0.12
    w_coh: float = 0.08
    w_align: float = 0.5
    desired_dist: float = 0.15
    cruise: float = 0.06
    turn_gain: float = 2.0
    max_linear: float = 0.15
    max_angular: float = 2.0


def flocking_steering(neighbors: Sequence[NeighborState], params: FlockingParams = FlockingParams()) -> tuple[float, float]:
    """Body-frame steering vector (m/s) from separation, cohesion and alignment."""
    sx, sy = params.cruise, 0.0
    if not neighbors:
        return sx, sy
    d0 = params.desired_dist
    sep_x = sep_y = 0.0
    for n in neighbors:
        px, py = n.relative_position
        dist = math.hypot(px, py)
        if 0.0 < dist < d0:
            push = (d0 - dist) / d0
            sep_x -= px / dist * push
            sep_y -= py / dist * push
    count = len(neighbors)
    cx = sum(n.relative_position[0] for n in neighbors) / count
    cy = sum(n.relative_position[1] for n in neighbors) / count
    coh_x = coh_y = 0.0
    cdist = math.hypot(cx, cy)
    if cdist > d0:
        pull = (cdist - d0) / d0
        coh_x, coh_y = cx / cdist * pull, cy / cdist * pull
    ax = sum(n.relative_velocity[0] for n in neighbors) / count
    ay = sum(n.relative_velocity[1] for n in neighbors) / count
    sx += params.w_sep * sep_x + params.w_coh * coh_x + params.w_align * ax
    sy += params.w_sep * sep_y + params.w_coh * coh_y + params.w_align * ay
    return sx, sy


def flocking_policy(neighbors: Sequence[NeighborState], params: FlockingParams = FlockingParams()) -> Twist:
    sx, sy = flocking_steering(neighbors, params)
    linear = min(max(sx, 0.0), params.max_linear)
    if sy == 0.0:
        angular = 0.0
    else:
        angular = params.turn_gain * math.atan2(sy, sx)
        angular = max(-params.max_angular, min(params.max_angular, angular))
    return Twist(linear, angular)


@dataclass(frozen=True)
class WaypointParams:
    cruise: float = 0.1
    tolerance: float = 0.01
    align_threshold: float = 0.1
    heading_gain: float = 3.0
    max_angular: float = 2.0
    slow_radius: float = 0.05


def waypoint_command(pose: Pose2D, target: tuple[float, float], params: WaypointParams = WaypointParams()) -> tuple[Twist, bool]:
    """Turn-then-drive command toward ``target``; second value is True once reached."""
    dx, dy = target[0] - pose.x, target[1] - pose.y
    dist = math.hypot(dx, dy)
    if dist <= params.tolerance:
        return Twist(0.0, 0.0), True
    err = angle_diff(math.atan2(dy, dx), pose.heading)
    angular = max(-params.max_angular, min(params.max_angular, params.heading_gain * err))
    if abs(err) > params.align_threshold:
        return Twist(0.0, angular), False
    speed = params.cruise * min(1.0, max(dist / params.slow_radius, 0.2))
    return Twist(speed, angular), False


L_FREE = -0.4
L_OCC = 0.85
L_CLAMP = 4.0


@dataclass
class OccupancyGrid:
    """Log-odds occupancy grid; ``log_odds[row, col]`` with row along y."""

    width: int
    height: int
    resolution: float = 0.02
    origin: tuple[float, float] = (0.0, 0.0)
    log_odds: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.log_odds is None:
            self.log_odds = np.zeros((self.height, self.width))

    @classmethod
    def covering(
        cls,
        xmin: float,
        ymin: float,
        xmax: float,
        ymax: float,
        resolution: float = 0.02,
        margin: float = 0.04,
        centered: bool = False,
    ) -> "OccupancyGrid":
        """Grid spanning the bounds plus ``margin``.

        With ``centered`` the bounds fall on cell centers instead of cell
        edges, so walls along the bounds occupy a single line of cells.
        """
        if centered:
            margin = (math.ceil(margin / resolution - 1e-9) + 0.5) * resolution
        width = int(math.ceil((xmax - xmin + 2 * margin) / resolution - 1e-9))
        height = int(math.ceil((ymax - ymin + 2 * margin) / resolution - 1e-9))
        return cls(width, height, resolution, (xmin - margin, ymin - margin))

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (
            int(math.floor((x - self.origin[0]) / self.resolution)),
            int(math.floor((y - self.origin[1]) / self.resolution)),
        )

    def cell_center(self, col: int, row: int) -> tuple[float, float]:
        return (
            self.origin[0] + (col + 0.5) * self.resolution,
            self.origin[1] + (row + 0.5) * self.resolution,
        )

    def inside(self, col: int, row: int) -> bool:
        return 0 <= col < self.width and 0 <= row < self.height

    def probability(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.log_odds))

    def to_pgm(self, path: str | Path) -> None:
        """Write an 8-bit binary PGM (255 free, 0 occupied, 128 unknown) and a sidecar."""
        p = self.probability()
        img = np.full(p.shape, 128, dtype=np.uint8)
        img[self.log_odds > 0] = 0
        img[self.log_odds < 0] = 255
        # image rows run top-down, grid rows bottom-up
        img = img[::-1]
        path = Path(path)
        with open(path, "wb") as fh:
            fh.write(f"P5\n{self.width} {self.height}\n255\n".encode("ascii"))
            fh.write(img.tobytes())
        path.with_suffix(".txt").write_text(
            f"resolution {self.resolution!r}\norigin_x {self.origin[0]!r}\norigin_y {self.origin[1]!r}\n"
            f"width {self.width}\nheight {self.height}\n"
        )


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    width, height, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError("only 8-bit PGM is supported")
    return np.frombuffer(parts[4][: width * height], dtype=np.uint8).reshape(height, width)


def grid_update(
    grid: OccupancyGrid,
    pose: Pose2D,
    beam_bearing: float,
    measured: float | None,
    max_range: float,
    clear_fraction: float = 1.0,
) -> OccupancyGrid:
    """Integrate one range beam cast from ``pose`` at ``beam_bearing`` (body frame).

    ``measured=None`` (or a value at or beyond ``max_range``) is a no-hit
    beam and only clears cells. The grid is updated in place and returned.

    On a hit, cells whose centers lie beyond ``clear_fraction * measured``
    along the beam are left untouched (except the terminal cell). An IR
    return read as range z may come from a surface as close as
    z * sqrt(cos(max incidence)), so a cautious mapper passes that factor.
    """
    hit = measured is not None and measured < max_range
    reach = measured if hit else max_range
    angle = pose.heading + beam_bearing
    ex = pose.x + reach * math.cos(angle)
    ey = pose.y + reach * math.sin(angle)
    c0, r0 = grid.cell_of(pose.x, pose.y)
    c1, r1 = grid.cell_of(ex, ey)
    cells = list(bresenham(c0, r0, c1, r1))
    lo = grid.log_odds
    last = len(cells) - 1
    cos_a, sin_a = math.cos(angle), math.sin(angle)
    clear_to = clear_fraction * measured if hit and clear_fraction < 1.0 else math.inf
    for i, (c, r) in enumerate(cells):
        if not grid.inside(c, r):
            break
        if hit and i == last:
            delta = L_OCC
        else:
            if clear_to < math.inf:
                cx, cy = grid.cell_center(c, r)
                if (cx - pose.x) * cos_a + (cy - pose.y) * sin_a >= clear_to:
                    continue
            delta = L_FREE
        lo[r, c] = min(L_CLAMP, max(-L_CLAMP, lo[r, c] + delta))
    return grid


def map_accuracy(
    grid: OccupancyGrid,
    walls: Sequence[Segment],
    bounds: tuple[float, float, float, float],
    band: float = 0.02,
) -> dict[str, float]:
    """Classification accuracy of observed cells against true wall geometry.

    Wall cells are observed cells whose centers lie within ``band`` of a
    wall; free cells are observed cells inside ``bounds`` and farther than
    ``band`` from every wall.
    """
    observed = grid.log_odds != 0.0
    wall_hits = wall_total = free_hits = free_total = 0
    xmin, ymin, xmax, ymax = bounds
    for r, c in zip(*np.nonzero(observed)):
        x, y = grid.cell_center(int(c), int(r))
        d = min(point_segment_distance(x, y, w) for w in walls)
        value = grid.log_odds[r, c]
        if d <= band:
            wall_total += 1
            wall_hits += bool(value > 0)
        elif xmin < x < xmax and ymin < y < ymax:
            free_total += 1
            free_hits += bool(value < 0)
    return {
        "wall_cells": wall_total,
        "free_cells": free_total,
        "wall_accuracy": wall_hits / wall_total if wall_total else float("nan"),
        "free_accuracy": free_hits / free_total if free_total else float("nan"),
    }


class CoverageMetric:
    """Visited fraction of a coarse grid over the cells a robot center can reach."""

    def __init__(
        self,
        bounds: tuple[float, float, float, float],
        walls: Sequence[Segment],
        body_radius: float,
        cell: float = 0.05,
        samples: int = 11,
    ):
        self.bounds = bounds
        self.cell = cell
        xmin, ymin, xmax, ymax = bounds
        self.cols = int(math.ceil((xmax - xmin) / cell - 1e-9))
        self.rows = int(math.ceil((ymax - ymin) / cell - 1e-9))
        self.reachable: set[tuple[int, int]] = set()
        offsets = [(k + 0.5) / samples for k in range(samples)]
        for c in range(self.cols):
            for r in range(self.rows):
                for fx in offsets:
                    x = xmin + (c + fx) * cell
                    if x > xmax:
                        continue
                    if any(
                        min(point_segment_distance(x, y, w) for w in walls) >= body_radius
                        for y in (ymin + (r + fy) * cell for fy in offsets)
                        if y <= ymax
                    ):
                        self.reachable.add((c, r))
                        break
        self.visited: set[tuple[int, int]] = set()
        self.per_robot: dict[str, set[tuple[int, int]]] = {}

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        xmin, ymin, _, _ = self.bounds
        c = min(max(int(math.floor((x - xmin) / self.cell)), 0), self.cols - 1)
        r = min(max(int(math.floor((y - ymin) / self.cell)), 0), self.rows - 1)
        return c, r

    def update(self, pose: Pose2D, robot: str = "") -> float:
        cell = self.cell_of(pose.x, pose.y)
        self.visited.add(cell)
        self.per_robot.setdefault(robot, set()).add(cell)
        return self.fraction

    @property
    def fraction(self) -> float:
        return len(self.visited & self.reachable) / len(self.reachable)


def coverage_metric_update(metric: CoverageMetric, true_pose: Pose2D, robot: str = "") -> CoverageMetric:
    metric.update(true_pose, robot)
    return metric
