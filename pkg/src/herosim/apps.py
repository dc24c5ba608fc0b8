"""Host-side applications: one per robot, fed through the topic interface."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .behaviors import (
    LEFT,
    RIGHT,
    CoverageParams,
    FlockingParams,
    OccupancyGrid,
    WaypointParams,
    coverage_policy,
    flocking_policy,
    grid_update,
    waypoint_command,
)
from .kinematics import Pose2D, Twist
from .sim import Observation

GREEN = (0, 64, 0)
RED = (64, 0, 0)
BLUE = (0, 0, 64)
WHITE = (32, 32, 32)


class StepApp:
    """Straight-line speed step, for the wheel step-response experiment."""

    wants_neighbors = False

    def __init__(self, setpoint: float = 0.0675, step_time: float = 2.7):
        self.setpoint = setpoint
        self.step_time = step_time
        self.state = "idle"
        self.done = False
        self.led = WHITE

    def step(self, obs: Observation, rng: np.random.Generator) -> Twist:
        if obs.time >= self.step_time - 1e-9:
            self.state = "step"
            return Twist(self.setpoint, 0.0)
        return Twist(0.0, 0.0)


class OpenLoopApp:
    """Drives the wheel actuators directly with fixed commands in [-1, 1]."""

    wants_neighbors = False

    def __init__(self, actuation: Sequence[float] = (0.0, 0.0)):
        self.open_loop = (float(actuation[0]), float(actuation[1]))
        self.state = "open_loop"
        self.done = False
        self.led = WHITE

    def step(self, obs: Observation, rng: np.random.Generator) -> Twist:
        return Twist(0.0, 0.0)


class WaypointApp:
    """Visit waypoints in order ``loops`` times using odometry only."""

    wants_neighbors = False

    def __init__(self, waypoints: Sequence[Sequence[float]], loops: int = 1, params: WaypointParams = WaypointParams(), close_loop: bool = True):
        pts = [tuple(map(float, w)) for w in waypoints]
        self.route = pts * loops + ([pts[0]] if close_loop else [])
        self.params = params
        self.index = 0
        self.state = "driving"
        self.done = not self.route
        self.led = GREEN

    def step(self, obs: Observation, rng: np.random.Generator) -> Twist:
        while not self.done:
            cmd, reached = waypoint_command(obs.odom, self.route[self.index], self.params)
            if not reached:
                self.state = "driving" if cmd.linear else "turning"
                return cmd
            self.index += 1
            self.done = self.index >= len(self.route)
        self.state = "done"
        self.led = BLUE
        return Twist(0.0, 0.0)


class CoverageApp:
    """Random-walk coverage with a stall escape.

    The IR policy only watches the front sector, so a body touching the
    robot from the side can pin it. With no bumper, a stall shows up as
    odometry standing still under a forward command; the app then spins in
    place, away from the nearer side, for a random interval.
    """

    wants_neighbors = False

    def __init__(self, params: CoverageParams = CoverageParams(), stall_ticks: int = 3, escape_ticks: tuple[int, int] = (10, 30)):
        self.params = params
        self.stall_ticks = stall_ticks
        self.escape_ticks = escape_ticks
        self.turning = 0
        self.stalled = 0
        self.escape = 0
        self.escape_dir = 0
        self.last_odom: Pose2D | None = None
        self.last_linear = 0.0
        self.state = "explore"
        self.done = False
        self.led = GREEN

    def _progress(self, obs: Observation) -> bool:
        if self.last_odom is None or self.last_linear <= 0:
            return True
        moved = math.hypot(obs.odom.x - self.last_odom.x, obs.odom.y - self.last_odom.y)
        return moved > 0.2 * self.last_linear * obs.dt

    def step(self, obs: Observation, rng: np.random.Generator) -> Twist:
        self.stalled = 0 if self._progress(obs) else self.stalled + 1
        self.last_odom = obs.odom
        if self.escape == 0 and self.stalled >= self.stall_ticks:
            left = sum(obs.ranges[i] for i in LEFT)
            right = sum(obs.ranges[i] for i in RIGHT)
            self.escape_dir = -1 if left < right else 1 if right < left else (1 if rng.random() < 0.5 else -1)
            self.escape = int(rng.integers(self.escape_ticks[0], self.escape_ticks[1] + 1))
            self.stalled = 0
        if self.escape > 0:
            self.escape -= 1
            self.turning = 0
            self.state = "escape"
            self.led = RED
            self.last_linear = 0.0
            return Twist(0.0, self.escape_dir * self.params.turn_rate)
        cmd, self.turning = coverage_policy(obs.ranges, rng, self.params, self.turning)
        self.state = "avoid" if self.turning else "explore"
        self.led = RED if self.turning else GREEN
        self.last_linear = cmd.linear
        return cmd


class FlockingApp:
    """Flocking with reactive wall avoidance taking priority."""

    wants_neighbors = True

    def __init__(self, params: FlockingParams = FlockingParams(), avoid: CoverageParams = CoverageParams(threshold=0.06, jitter=0.0)):
        self.params = params
        self.avoid = avoid
        self.turning = 0
        self.state = "flock"
        self.done = False
        self.led = BLUE

    def step(self, obs: Observation, rng: np.random.Generator) -> Twist:
        front = min(obs.ranges[i] for i in (7, 0, 1))
        if front <= self.avoid.threshold:
            cmd, self.turning = coverage_policy(obs.ranges, rng, self.avoid, self.turning)
            self.state = "avoid"
            return cmd
        self.turning = 0
        self.state = "flock"
        return flocking_policy(obs.neighbors, self.params)


class MappingApp(WaypointApp):
    """Scripted route while integrating every IR beam into an occupancy grid."""

    def __init__(
        self,
        waypoints,
        grid: OccupancyGrid,
        loops: int = 1,
        params: WaypointParams = WaypointParams(),
        clear_fraction: float = 1.0,
    ):
        super().__init__(waypoints, loops, params)
        self.grid = grid
        self.clear_fraction = clear_fraction

    def step(self, obs: Observation, rng: np.random.Generator) -> Twist:
        integrate_scan(self.grid, obs.odom, obs.ranges, obs.bearings, obs.sensor_offset, obs.max_range, self.clear_fraction)
        return super().step(obs, rng)


def integrate_scan(
    grid: OccupancyGrid,
    pose: Pose2D,
    ranges: Sequence[float],
    bearings: Sequence[float],
    sensor_offset: float,
    max_range: float,
    clear_fraction: float = 1.0,
) -> None:
    """Apply one ring of IR ranges taken at ``pose`` to ``grid``."""
    for bearing, distance in zip(bearings, ranges):
        a = pose.heading + bearing
        origin = Pose2D(pose.x + sensor_offset * math.cos(a), pose.y + sensor_offset * math.sin(a), pose.heading)
        grid_update(grid, origin, bearing, None if distance >= max_range else distance, max_range, clear_fraction)


class SweepApp:
    """Back away from a target at constant speed for ``span`` meters."""

    wants_neighbors = False

    def __init__(self, speed: float = 0.01, span: float = 0.3):
        self.speed = speed
        self.span = span
        self.start: Pose2D | None = None
        self.state = "sweep"
        self.done = False
        self.led = WHITE

    def step(self, obs: Observation, rng: np.random.Generator) -> Twist:
        if self.start is None:
            self.start = obs.odom
        if self.done or obs.odom.distance_to(self.start) >= self.span:
            self.done = True
            self.state = "done"
            return Twist(0.0, 0.0)
        return Twist(-self.speed, 0.0)
