"""Wheel velocity control: PID with anti-windup, a scalar random-walk
Kalman filter on encoder velocity, and gyro/odometry heading fusion."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .kinematics import RobotGeometry, angle_diff, normalize_angle
from .sensing import InvalidIntervalError


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float = 0.0
    kd: float = 0.0
    integral_limit: float = 1.0
    output_limit: float = 1.0
    #: fraction of the integral bled off per second while the error is zero
    integral_leak: float = 0.0

    def __post_init__(self) -> None:
        for name in ("kp", "ki", "kd", "integral_leak"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not (self.integral_limit > 0 and self.output_limit > 0):
            raise ValueError("integral_limit and output_limit must be positive")


#: Shipped wheel-loop gains, tuned once against the default servo plant
#: (tau = 0.15 s) at 20 Hz for a ~1.3 s rise without overshoot.
DEFAULT_WHEEL_GAINS = PidGains(kp=3.5, ki=9.0, kd=0.2, integral_limit=1.0, output_limit=1.0)


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_error: float = 0.0
    last_output: float = 0.0


def _clamp(value: float, limit: float) -> float:
    return max(-limit, min(limit, value))


def pid_step(gains: PidGains, state: PidState, error: float, dt: float) -> tuple[float, PidState]:
    """One PID update; returns the clamped output and the new state.

    The integral is frozen while the output saturates in the direction of
    the error (conditional integration).
    """
    if not dt > 0:
        raise InvalidIntervalError(f"dt must be positive, got {dt!r}")
    integral = state.integral
    if gains.integral_leak and error == 0.0:
        integral *= math.exp(-gains.integral_leak * dt)
    derivative = (error - state.prev_error) / dt
    base = gains.kp * error + gains.kd * derivative

    candidate = _clamp(integral + error * dt, gains.integral_limit)
    raw = base + gains.ki * candidate
    if abs(raw) > gains.output_limit and raw * error > 0:
        candidate = integral
        raw = base + gains.ki * candidate
    output = _clamp(raw, gains.output_limit)
    return output, PidState(candidate, error, output)


@dataclass(frozen=True)
class ScalarKalman:
    """Random-walk scalar filter."""

    estimate: float = 0.0
    variance: float = 1e-2
    q: float = 1e-5
    r: float = 4e-4

    def __post_init__(self) -> None:
        if not (self.variance > 0 and self.q >= 0 and self.r > 0):
            raise ValueError("need variance > 0, q >= 0, r > 0")


def kalman_step(kf: ScalarKalman, measurement: float) -> ScalarKalman:
    if not math.isfinite(measurement):
        raise ValueError(f"non-finite measurement {measurement!r}")
    var = kf.variance + kf.q
    gain = var / (var + kf.r)
    estimate = kf.estimate + gain * (measurement - kf.estimate)
    return ScalarKalman(estimate, var * (1.0 - gain), kf.q, kf.r)


@dataclass(frozen=True)
class WheelControllerState:
    filter: ScalarKalman = ScalarKalman()
    pid: PidState = PidState()


def wheel_controller_update(
    target: float,
    encoder_velocity_raw: float,
    wheel_radius: float,
    gains: PidGains,
    state: WheelControllerState,
    dt: float,
) -> tuple[float, WheelControllerState]:
    """Closed-loop tangential speed control of one wheel.

    ``encoder_velocity_raw`` is the wheel rate in rad/s; the returned
    actuation command lies in [-1, 1].
    """
    measured = encoder_velocity_raw * wheel_radius
    filt = kalman_step(state.filter, measured)
    error = target - filt.estimate
    output, pid = pid_step(gains, state.pid, error, dt)
    return _clamp(output, 1.0), WheelControllerState(filt, pid)


@dataclass(frozen=True)
class HeadingFilter:
    """Heading estimate driven by a gyro and corrected by odometry heading.

    ``q`` is the per-second gyro integration variance and ``r`` the
    odometry heading measurement variance.
    """

    estimate: float = 0.0
    variance: float = 1e-6
    q: float = 1e-6
    r: float = 1e-1


def heading_fuse(
    odometry_heading: float, gyro_rate: float, dt: float, kf: HeadingFilter
) -> tuple[float, HeadingFilter]:
    if not dt > 0:
        raise InvalidIntervalError(f"dt must be positive, got {dt!r}")
    predicted = kf.estimate + gyro_rate * dt
    var = kf.variance + kf.q * dt
    gain = var / (var + kf.r)
    innovation = angle_diff(odometry_heading, predicted)
    estimate = normalize_angle(predicted + gain * innovation)
    return estimate, HeadingFilter(estimate, var * (1.0 - gain), kf.q, kf.r)


@dataclass
class WheelPair:
    """Left/right controllers of one robot, run at a fixed cadence."""

    geometry: RobotGeometry
    gains: PidGains = DEFAULT_WHEEL_GAINS
    q: float = 1e-5
    r: float = 4e-4
    left: WheelControllerState = None  # type: ignore[assignment]
    right: WheelControllerState = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        init = WheelControllerState(ScalarKalman(q=self.q, r=self.r))
        self.left = self.left or init
        self.right = self.right or init

    def update(self, targets: tuple[float, float], rates: tuple[float, float], dt: float) -> tuple[float, float]:
        g = self.geometry
        a_l, self.left = wheel_controller_update(targets[0], rates[0], g.wheel_radius_left, self.gains, self.left, dt)
        a_r, self.right = wheel_controller_update(targets[1], rates[1], g.wheel_radius_right, self.gains, self.right, dt)
        return a_l, a_r

    @property
    def estimates(self) -> tuple[float, float]:
        return self.left.filter.estimate, self.right.filter.estimate
