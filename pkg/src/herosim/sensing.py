"""Sensor and power models: IR reflectance ranging, quadrature decoding,
encoder velocity and the battery integrator."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .kinematics import TWO_PI, RobotGeometry

log = logging.getLogger(__name__)

NO_RETURN = None


class InvalidGeometryError(ValueError):
    pass


class InvalidIntervalError(ValueError):
    pass


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class IrSensorModel:
    """Reflected intensity model ``s = alpha / x**2 * cos(theta) + beta``.

    ``alpha`` is in ADC counts times square meters so the model reads out
    directly in ADC counts. The default alpha puts a 2 cm white target near
    the top of the 10-bit range and leaves ~10 counts of signal at 20 cm.
    """

    alpha: float = 0.39
    beta: float = 10.0
    max_range: float = 0.20
    adc_bits: int = 10
    min_range: float = 0.01

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        if not 0 <= self.beta < 2**self.adc_bits:
            raise ValueError(f"beta must lie in [0, {2**self.adc_bits}), got {self.beta!r}")
        if not 0 < self.min_range < self.max_range:
            raise ValueError("need 0 < min_range < max_range")

    @property
    def adc_max(self) -> int:
        return 2**self.adc_bits - 1

    def intensity(self, distance: float, incidence: float = 0.0) -> float:
        """Unquantized model output in ADC counts."""
        return self.alpha / (distance * distance) * math.cos(incidence) + self.beta

    def distance_step(self, distance: float) -> float:
        """Distance spanned by one ADC count at ``distance`` (normal incidence)."""
        return distance**3 / (2.0 * self.alpha)


@dataclass(frozen=True)
class SensorRing:
    count: int = 8
    bearings: tuple[float, ...] = tuple(k * math.pi / 4 for k in range(8))

    def __post_init__(self) -> None:
        if len(self.bearings) != self.count:
            raise ValueError("bearings must have one entry per sensor")

    #: indices of the front-left, front and front-right sensors
    @property
    def front(self) -> tuple[int, int, int]:
        return (self.count - 1, 0, 1)


def quantize(model: IrSensorModel, value: float) -> int:
    """Round an analog level to the nearest ADC code."""
    return int(min(max(round(value), 0), model.adc_max))


def ir_forward(model: IrSensorModel, distance: float, incidence: float = 0.0) -> int:
    """Quantized ADC reading for a target at ``distance`` meters."""
    if not distance > 0:
        raise InvalidGeometryError(f"distance must be positive, got {distance!r}")
    if not abs(incidence) < math.pi / 2:
        raise InvalidGeometryError(f"incidence must be within (-pi/2, pi/2), got {incidence!r}")
    if distance > model.max_range:
        return quantize(model, model.beta)
    return quantize(model, model.intensity(distance, incidence))


def ir_invert(model: IrSensorModel, reading: float, incidence: float = 0.0) -> float:
    """Distance estimate from an ADC reading.

    Readings at or below ``beta`` carry no reflection and map to
    ``max_range``. A saturated reading only bounds the distance from above,
    so it maps to ``min_range``. Other results are clamped to
    ``[min_range, max_range]``.
    """
    signal = reading - model.beta
    cos_t = math.cos(incidence)
    if signal <= 0 or cos_t <= 0:
        return model.max_range
    if reading >= model.adc_max:
        return model.min_range
    x = math.sqrt(model.alpha * cos_t / signal)
    return min(max(x, model.min_range), model.max_range)


@dataclass(frozen=True)
class IrCalibration:
    model: IrSensorModel
    residual_rms: float
    n_samples: int

    @property
    def alpha(self) -> float:
        return self.model.alpha

    @property
    def beta(self) -> float:
        return self.model.beta


def ir_calibrate(
    samples: Iterable[tuple[float, float]],
    max_range: float = 0.20,
    adc_bits: int = 10,
) -> IrCalibration:
    """Least-squares fit of ``reading = alpha / x**2 + beta`` at normal incidence.

    Rows with non-positive distance are skipped with a warning.
    """
    rows = []
    for distance, reading in samples:
        if distance <= 0:
            log.warning("skipping calibration sample at distance %r", distance)
            continue
        rows.append((float(distance), float(reading)))
    if len({d for d, _ in rows}) < 2:
        raise CalibrationError("calibration needs samples at two or more distinct distances")
    x = np.array([d for d, _ in rows])
    s = np.array([r for _, r in rows])
    design = np.column_stack([1.0 / x**2, np.ones_like(x)])
    coef, _, rank, _ = np.linalg.lstsq(design, s, rcond=None)
    if rank < 2:
        raise CalibrationError("calibration design matrix is rank deficient")
    alpha, beta = float(coef[0]), float(coef[1])
    if alpha <= 0:
        raise CalibrationError(f"fitted alpha is not positive ({alpha!r})")
    resid = s - design @ coef
    rms = float(np.sqrt(np.mean(resid**2)))
    beta_clamped = min(max(beta, 0.0), 2**adc_bits - 1.0)
    model = IrSensorModel(alpha=alpha, beta=beta_clamped, max_range=max_range, adc_bits=adc_bits)
    return IrCalibration(model, rms, len(rows))


def load_calibration_samples(path: str | Path) -> list[tuple[float, float]]:
    """Read ``distance_m adc_counts`` pairs, one per line; ``#`` starts a comment."""
    samples = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected two columns, got {len(parts)}")
        samples.append((float(parts[0]), float(parts[1])))
    return samples


def ambient_compensate(lit: int, unlit: int) -> int:
    """Reflected intensity with the emitter-off ambient reading removed."""
    return max(lit - unlit, 0)


# Gray sequence 00 -> 01 -> 11 -> 10 -> 00, phases packed as (A << 1) | B.
_GRAY_ORDER = (0b00, 0b01, 0b11, 0b10)
_GRAY_INDEX = {phase: i for i, phase in enumerate(_GRAY_ORDER)}


def _build_transition_table() -> tuple[tuple[int | None, ...], ...]:
    table = []
    for old in range(4):
        row = []
        for new in range(4):
            step = (_GRAY_INDEX[new] - _GRAY_INDEX[old]) % 4
            row.append({0: 0, 1: 1, 3: -1, 2: None}[step])
        table.append(tuple(row))
    return tuple(table)


#: QUAD_TABLE[old][new] -> count increment, or None for an illegal double flip
QUAD_TABLE = _build_transition_table()


class QuadratureState(NamedTuple):
    """Decoder state: current 2-bit phase, net count and rejected transitions."""

    phase: int = 0b00
    count: int = 0
    invalid_transitions: int = 0


def quadrature_step(state: QuadratureState, new_phase: int) -> QuadratureState:
    if new_phase not in _GRAY_INDEX:
        raise ValueError(f"phase must be a 2-bit value, got {new_phase!r}")
    delta = QUAD_TABLE[state.phase][new_phase]
    if delta is None:
        return QuadratureState(new_phase, state.count, state.invalid_transitions + 1)
    if delta == 0:
        return state
    return QuadratureState(new_phase, state.count + delta, state.invalid_transitions)


def phase_after(phase: int, direction: int) -> int:
    """Next phase one legal step forward (+1) or backward (-1) from ``phase``."""
    return _GRAY_ORDER[(_GRAY_INDEX[phase] + direction) % 4]


def encoder_velocity(dcounts: int, dt: float, geom: RobotGeometry) -> float:
    """Wheel angular velocity in rad/s from a count difference over ``dt``."""
    if not dt > 0:
        raise InvalidIntervalError(f"dt must be positive, got {dt!r}")
    return dcounts * (TWO_PI / geom.counts_per_wheel_rev) / dt


#: Typical current draw per operating mode, mA, at 3.7 V.
POWER_TABLE_MA = {
    "sensing_comm_5hz": 161.0,
    "sensing_comm_20hz": 175.0,
    "sensing_comm_40hz": 183.0,
    "leds_50": 205.0,
    "leds_100": 247.0,
    "motors_10cms": 512.0,
    "motors_25cms": 660.0,
    "typical": 550.0,
}


def draw_for_speed(speed: float, table: dict[str, float] = POWER_TABLE_MA) -> float:
    """Current draw for a commanded wheel speed (m/s).

    Piecewise linear through idle (sensing and comms only), 10 cm/s and
    25 cm/s, held constant outside that range.
    """
    xs = (0.0, 0.10, 0.25)
    ys = (table["sensing_comm_20hz"], table["motors_10cms"], table["motors_25cms"])
    x = abs(speed)
    if x >= xs[-1]:
        return ys[-1]
    j = 0 if x < xs[1] else 1
    return (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j]) * (x - xs[j]) + ys[j]


@dataclass
class BatteryModel:
    """Coulomb-counting battery.

    Consumed charge is accumulated with Kahan compensation so long runs of
    tiny steps do not drift.
    """

    capacity: float = 1800.0
    consumed: float = 0.0
    draw_table: dict[str, float] = field(default_factory=lambda: dict(POWER_TABLE_MA))
    depleted: bool = False
    _compensation: float = 0.0

    def __post_init__(self) -> None:
        if not self.capacity > 0:
            raise ValueError("capacity must be positive")
        if not 0 <= self.consumed <= self.capacity:
            raise ValueError("consumed charge must lie in [0, capacity]")

    @property
    def charge(self) -> float:
        return self.capacity - self.consumed

    def hours_remaining(self, draw: float) -> float:
        return math.inf if draw <= 0 else self.charge / draw


def battery_step(b: BatteryModel, draw: float, dt: float) -> BatteryModel:
    """Return ``b`` after drawing ``draw`` mA for ``dt`` seconds."""
    if draw < 0 or dt < 0:
        raise ValueError("draw and dt must be non-negative")
    if b.depleted:
        return b
    amount = draw * dt / 3600.0
    if amount >= b.charge:
        return replace(b, consumed=b.capacity, _compensation=0.0, depleted=True)
    y = amount - b._compensation
    t = b.consumed + y
    comp = (t - b.consumed) - y
    return BatteryModel(b.capacity, t, b.draw_table, t >= b.capacity, comp)


def time_to_depletion(b: BatteryModel, draw: float, dt: float) -> float:
    """Simulated seconds until ``b`` empties under constant ``draw``.

    Steps the integrator and resolves the final partial step exactly.
    """
    if draw <= 0:
        return math.inf
    steps = 0
    while True:
        per_step = draw * dt / 3600.0
        if b.charge <= per_step:
            return steps * dt + b.charge / draw * 3600.0
        b = battery_step(b, draw, dt)
        steps += 1
