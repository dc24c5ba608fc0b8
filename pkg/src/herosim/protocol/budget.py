"""Topic registry and link bandwidth accounting (1 KB = 1024 bytes)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

from .framing import FRAME_OVERHEAD

KB = 1024


def mbps_to_kbps(mbps: float) -> float:
    """Megabits per second to kilobytes per second, with 1 Mb = 1024 Kb."""
    return mbps * 1024 / 8


@dataclass(frozen=True)
class TopicSpec:
    name: str
    topic_id: int
    packet_size: float  # KB per message
    direction: str = "publish"
    nominal_rate: float = 20.0  # Hz
    measured_bandwidth: float | None = None  # KBps, when a measured figure exists

    def __post_init__(self) -> None:
        if self.packet_size <= 0:
            raise ValueError(f"{self.name}: packet_size must be positive")
        if self.nominal_rate < 0:
            raise ValueError(f"{self.name}: nominal_rate must be non-negative")
        if self.direction not in ("publish", "subscribe"):
            raise ValueError(f"{self.name}: direction must be 'publish' or 'subscribe'")


@dataclass(frozen=True)
class BandwidthBudget:
    transport_overhead: int = 20  # bytes per packet
    framing_overhead: int = FRAME_OVERHEAD
    link_capacity: float = mbps_to_kbps(150.0)  # KBps

    def __post_init__(self) -> None:
        if self.transport_overhead < 0 or self.framing_overhead < 0:
            raise ValueError("overheads must be non-negative")
        if not self.link_capacity > 0:
            raise ValueError("link_capacity must be positive")

    def packet_size_kb(self, payload_bytes: int) -> float:
        """On-wire size of one message carrying ``payload_bytes`` of data."""
        return (payload_bytes + self.framing_overhead + self.transport_overhead) / KB


def topic_bandwidth(spec: TopicSpec) -> float:
    """Nominal bandwidth of one topic, KBps."""
    return spec.packet_size * spec.nominal_rate


def topic_load(spec: TopicSpec) -> float:
    """Measured bandwidth when recorded, otherwise the nominal formula."""
    return spec.measured_bandwidth if spec.measured_bandwidth is not None else topic_bandwidth(spec)


def per_robot_total(specs: Iterable[TopicSpec]) -> float:
    return math.fsum(topic_load(s) for s in specs)


def fleet_capacity(per_robot_total: float, budget: BandwidthBudget = BandwidthBudget()) -> int:
    """Number of robots whose combined traffic fits the link."""
    if not per_robot_total > 0:
        raise ValueError("per_robot_total must be positive")
    return math.floor(budget.link_capacity / per_robot_total)


#: Topics of the reference robot: packet sizes and bandwidths measured at 20 Hz.
REFERENCE_TOPICS = (
    TopicSpec("/imu", 1, 0.320, "publish", 20.0, 5.45),
    TopicSpec("/laser", 2, 0.130, "publish", 20.0, 2.53),
    TopicSpec("/odom", 3, 0.730, "publish", 20.0, 14.18),
    TopicSpec("/led", 4, 0.016, "subscribe", 20.0, 0.32),
    TopicSpec("/cmd_vel", 5, 0.048, "subscribe", 20.0, 0.96),
)


class RegistryError(ValueError):
    pass


def registry_from_config(entries: Iterable[Mapping[str, Any]]) -> list[TopicSpec]:
    """Build and validate a registry from ``[[topic]]`` config tables."""
    specs = []
    seen: set[int] = set()
    for i, entry in enumerate(entries):
        try:
            spec = TopicSpec(
                name=str(entry["name"]),
                topic_id=int(entry["topic_id"]),
                packet_size=float(entry["packet_size_kb"]),
                direction=str(entry.get("direction", "publish")),
                nominal_rate=float(entry.get("rate_hz", 20.0)),
                measured_bandwidth=(
                    float(entry["bandwidth_kbps"]) if entry.get("bandwidth_kbps") is not None else None
                ),
            )
        except KeyError as exc:
            raise RegistryError(f"topic[{i}]: missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise RegistryError(f"topic[{i}]: {exc}") from None
        if spec.topic_id in seen:
            raise RegistryError(f"topic[{i}]: duplicate topic_id {spec.topic_id}")
        seen.add(spec.topic_id)
        specs.append(spec)
    return specs


def load_registry(path: str | Path) -> list[TopicSpec]:
    from ..config import load_toml

    data = load_toml(path)
    entries = data.get("topic", [])
    if not isinstance(entries, list):
        raise RegistryError("'topic' must be an array of tables")
    return registry_from_config(entries)
