"""Differential-drive kinematics: inverse kinematics, wheel odometry and
exact constant-curvature pose integration.

Everything here is pure math over small immutable value types; encoder
quantization, slip and actuation lag live in :mod:`herosim.sim`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

TWO_PI = 2.0 * math.pi

#: |dTheta| at or below this is integrated with the straight-line model.
STRAIGHT_EPSILON = 1e-9


class InvalidCommandError(ValueError):
    """A velocity command contained a non-finite value."""


def normalize_angle(angle: float) -> float:
    """Wrap ``angle`` into (-pi, pi]."""
    wrapped = math.remainder(angle, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


def angle_diff(a: float, b: float) -> float:
    """Shortest signed angular difference ``a - b`` in (-pi, pi]."""
    return normalize_angle(a - b)


@dataclass(frozen=True)
class RobotGeometry:
    """Physical wheel geometry of one robot.

    Defaults describe the reference robot: 5 cm wheels, 288 encoder counts
    per wheel revolution and a 25 cm/s top speed. The axle length is not a
    published figure; 6 cm fits inside the 6.7 cm footprint.
    """

    wheel_radius_left: float = 0.025
    wheel_radius_right: float = 0.025
    axle_length: float = 0.06
    counts_per_wheel_rev: int = 288
    max_wheel_speed: float = 0.25

    def __post_init__(self) -> None:
        for name in ("wheel_radius_left", "wheel_radius_right", "axle_length", "max_wheel_speed"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")
        if int(self.counts_per_wheel_rev) != self.counts_per_wheel_rev or self.counts_per_wheel_rev < 1:
            raise ValueError(f"counts_per_wheel_rev must be an integer >= 1, got {self.counts_per_wheel_rev!r}")

    @property
    def count_angle(self) -> float:
        """Wheel rotation per encoder count, radians."""
        return TWO_PI / self.counts_per_wheel_rev

    @property
    def resolution_deg(self) -> float:
        return 360.0 / self.counts_per_wheel_rev

    @property
    def arc_step(self) -> float:
        """Rim travel per encoder count (left wheel radius), meters."""
        return self.count_angle * self.wheel_radius_left

    @property
    def wheel_radius(self) -> float:
        return 0.5 * (self.wheel_radius_left + self.wheel_radius_right)


class Pose2D(NamedTuple):
    """Planar pose; a named tuple because the simulator builds one per step."""

    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0

    def distance_to(self, other: "Pose2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.heading)


@dataclass(frozen=True)
class Twist:
    linear: float = 0.0
    angular: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.linear) and math.isfinite(self.angular)):
            raise InvalidCommandError(f"non-finite twist ({self.linear!r}, {self.angular!r})")


@dataclass(frozen=True)
class WheelDelta:
    """Signed wheel rotations over one interval, radians."""

    dtheta_left: float
    dtheta_right: float


def inverse_kinematics(cmd: Twist, geom: RobotGeometry) -> tuple[float, float]:
    """Tangential wheel speeds ``(v_left, v_right)`` for a body command."""
    v, w = cmd.linear, cmd.angular
    if not (math.isfinite(v) and math.isfinite(w)):
        raise InvalidCommandError(f"non-finite twist ({v!r}, {w!r})")
    half = geom.axle_length * w
    return ((2.0 * v - half) / 2.0, (2.0 * v + half) / 2.0)


def forward_kinematics(v_left: float, v_right: float, geom: RobotGeometry) -> Twist:
    """Body twist produced by tangential wheel speeds."""
    return Twist((v_left + v_right) / 2.0, (v_right - v_left) / geom.axle_length)


def saturate_wheels(v_left: float, v_right: float, limit: float) -> tuple[float, float]:
    """Scale both wheel speeds down together so neither exceeds ``limit``.

    Keeps the commanded curvature, unlike clipping each wheel separately.
    """
    peak = max(abs(v_left), abs(v_right))
    if peak <= limit:
        return v_left, v_right
    scale = limit / peak
    return v_left * scale, v_right * scale


def odometry_delta(d: WheelDelta, geom: RobotGeometry) -> tuple[float, float]:
    """Travelled distance and heading change for one pair of wheel rotations."""
    right = d.dtheta_right * geom.wheel_radius_right
    left = d.dtheta_left * geom.wheel_radius_left
    return (right + left) / 2.0, (right - left) / geom.axle_length


def integrate_pose(
    p: Pose2D, dL: float, dTheta: float, straight_epsilon: float = STRAIGHT_EPSILON
) -> Pose2D:
    """Advance ``p`` along a constant-curvature arc of length ``dL``.

    Near-zero heading changes use the straight-line update to avoid the
    ``dL / dTheta`` cancellation.
    """
    if straight_epsilon <= 0:
        raise ValueError("straight_epsilon must be positive")
    theta = p.heading
    if abs(dTheta) <= straight_epsilon:
        return Pose2D(p.x + dL * math.cos(theta), p.y + dL * math.sin(theta), theta)
    # (dL/dTheta)(sin(t+d) - sin t) and -(dL/dTheta)(cos(t+d) - cos t),
    # rewritten with product identities so small d does not cancel.
    half = 0.5 * dTheta
    chord = dL * math.sin(half) / half
    mid = theta + half
    return Pose2D(p.x + chord * math.cos(mid), p.y + chord * math.sin(mid), normalize_angle(theta + dTheta))
