"""Fixed little-endian layouts of the built-in topic messages."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class Schema:
    name: str
    fmt: struct.Struct

    @property
    def size(self) -> int:
        return self.fmt.size

    def pack(self, *values) -> bytes:
        return self.fmt.pack(*values)

    def unpack(self, data: bytes) -> tuple:
        return self.fmt.unpack(data)


CMD_VEL = Schema("cmd_vel", struct.Struct("<2d"))  # linear, angular
LASER = Schema("laser", struct.Struct("<8f8H"))  # ranges (m), raw ADC intensities
ODOM = Schema("odom", struct.Struct("<6d"))  # x, y, heading, vx, vy, wz
LED = Schema("led", struct.Struct("<6B"))  # two RGB indicators
IMU = Schema("imu", struct.Struct("<6f"))  # accel xyz, gyro xyz

SCHEMAS = {s.name: s for s in (CMD_VEL, LASER, ODOM, LED, IMU)}


def pack_cmd_vel(linear: float, angular: float) -> bytes:
    return CMD_VEL.pack(linear, angular)


def unpack_cmd_vel(data: bytes) -> tuple[float, float]:
    return CMD_VEL.unpack(data)


def pack_laser(ranges: Sequence[float], intensities: Sequence[int]) -> bytes:
    return LASER.pack(*ranges, *intensities)


def unpack_laser(data: bytes) -> tuple[tuple[float, ...], tuple[int, ...]]:
    values = LASER.unpack(data)
    return values[:8], values[8:]


def pack_odom(pose: Sequence[float], velocity: Sequence[float]) -> bytes:
    return ODOM.pack(*pose, *velocity)


def unpack_odom(data: bytes) -> tuple[tuple[float, ...], tuple[float, ...]]:
    values = ODOM.unpack(data)
    return values[:3], values[3:]


def pack_led(left: Sequence[int], right: Sequence[int]) -> bytes:
    return LED.pack(*left, *right)


def pack_imu(accel: Sequence[float], gyro: Sequence[float]) -> bytes:
    return IMU.pack(*accel, *gyro)


def unpack_imu(data: bytes) -> tuple[tuple[float, ...], tuple[float, ...]]:
    values = IMU.unpack(data)
    return values[:3], values[3:]
