"""Scenario files: TOML describing arena, robots, behavior, rates and noise.

Top-level keys::

    name, seed, duration, stop_when_done
    [rates]      physics_hz, control_hz
    [arena]      bounds = [xmin, ymin, xmax, ymax], obstacles = [[x1, y1, x2, y2], ...]
    [robot]      defaults for every robot (body_radius, plant_tau, gyro_fusion,
                 [robot.noise], [robot.control], [robot.ir])
    [behavior]   type = step | open_loop | waypoints | coverage | flocking | mapping | sweep
    [[robots]]   label, pose = [x, y, heading], optional per-robot overrides
    [spawn]      count, margin: seeded random non-overlapping spawns instead of [[robots]]
    [metrics]    coverage_cell, map_resolution, map_band, map_centered
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .behaviors import CoverageParams, FlockingParams, OccupancyGrid, WaypointParams
from .control import PidGains
from .geometry import Segment
from .kinematics import Pose2D, RobotGeometry
from .sensing import IrSensorModel
from .sim import NoiseConfig, RobotConfig, Simulation

BEHAVIORS = ("step", "open_loop", "waypoints", "coverage", "flocking", "mapping", "sweep")


class ScenarioError(ValueError):
    """Invalid scenario; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _number(section: dict, key: str, where: str, default=None, positive: bool = False, minimum: float | None = None) -> float:
    value = section.get(key, default)
    if value is None:
        raise ScenarioError(f"{where}.{key}", "is required")
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(f"{where}.{key}", f"expected a finite number, got {value!r}")
    if positive and value <= 0:
        raise ScenarioError(f"{where}.{key}", f"must be positive, got {value!r}")
    if minimum is not None and value < minimum:
        raise ScenarioError(f"{where}.{key}", f"must be >= {minimum}, got {value!r}")
    return float(value)


def _vector(value: Any, n: int, where: str) -> list[float]:
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise ScenarioError(where, f"expected a list of {n} numbers, got {value!r}")
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ScenarioError(where, f"expected numbers, got {value!r}") from None
    if not all(math.isfinite(v) for v in out):
        raise ScenarioError(where, "values must be finite")
    return out


@dataclass
class Scenario:
    name: str
    raw: dict
    seed: int
    duration: float
    physics_hz: int
    control_hz: int
    bounds: tuple[float, float, float, float]
    obstacles: list[Segment]
    robots: list[dict] = field(default_factory=list)  # resolved per-robot tables
    stop_when_done: bool = False
    source: str = ""

    @property
    def behavior_types(self) -> list[str]:
        return [r["behavior"]["type"] for r in self.robots]


def bundled_scenarios() -> list[str]:
    root = resources.files("herosim") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml") and not p.name.startswith("topics"))


def resolve_path(name_or_path: str | Path) -> Path:
    path = Path(name_or_path)
    if path.exists():
        return path
    candidate = resources.files("herosim") / "scenarios" / f"{name_or_path}.toml"
    if candidate.is_file():
        return Path(str(candidate))
    raise ScenarioError("file", f"no scenario file or bundled scenario named {str(name_or_path)!r}")


def load_scenario(name_or_path: str | Path, seed: int | None = None, duration: float | None = None) -> Scenario:
    from .config import load_toml

    path = resolve_path(name_or_path)
    try:
        raw = load_toml(path)
    except Exception as exc:  # tomllib.TOMLDecodeError and I/O errors
        raise ScenarioError("file", f"cannot parse {path}: {exc}") from None
    scenario = parse_scenario(raw, seed=seed, duration=duration)
    scenario.source = str(path)
    return scenario


def parse_scenario(raw: dict, seed: int | None = None, duration: float | None = None) -> Scenario:
    name = str(raw.get("name", "scenario"))
    seed_value = raw.get("seed", 0) if seed is None else seed
    if isinstance(seed_value, bool) or not isinstance(seed_value, int) or seed_value < 0:
        raise ScenarioError("seed", f"expected a non-negative integer, got {seed_value!r}")
    dur = _number(raw, "duration", "scenario", positive=True) if duration is None else float(duration)
    if not dur > 0:
        raise ScenarioError("duration", "must be positive")

    rates = raw.get("rates", {})
    physics_hz = rates.get("physics_hz", 100)
    control_hz = rates.get("control_hz", 20)
    for key, value in (("physics_hz", physics_hz), ("control_hz", control_hz)):
        if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
            raise ScenarioError(f"rates.{key}", f"expected a positive integer, got {value!r}")
    if physics_hz % control_hz:
        raise ScenarioError("rates", f"physics_hz ({physics_hz}) must be a multiple of control_hz ({control_hz})")

    arena = raw.get("arena")
    if not isinstance(arena, dict):
        raise ScenarioError("arena", "section is required")
    bounds = _vector(arena.get("bounds"), 4, "arena.bounds")
    if not (bounds[0] < bounds[2] and bounds[1] < bounds[3]):
        raise ScenarioError("arena.bounds", "need xmin < xmax and ymin < ymax")
    obstacles = []
    for i, seg in enumerate(arena.get("obstacles", [])):
        obstacles.append(Segment(*_vector(seg, 4, f"arena.obstacles[{i}]")))

    defaults = raw.get("robot", {})
    behavior = raw.get("behavior", {})
    base = _deep_merge(defaults, {"behavior": behavior})

    robots: list[dict] = []
    if "robots" in raw and "spawn" in raw:
        raise ScenarioError("spawn", "use either [[robots]] or [spawn], not both")
    if "robots" in raw:
        for i, entry in enumerate(raw["robots"]):
            if not isinstance(entry, dict):
                raise ScenarioError(f"robots[{i}]", "must be a table")
            merged = _deep_merge(base, entry)
            merged.setdefault("label", f"r{i}")
            merged["pose"] = _vector(entry.get("pose"), 3, f"robots[{i}].pose")
            robots.append(merged)
    elif "spawn" in raw:
        robots = _random_spawns(raw["spawn"], base, bounds, obstacles, seed_value)
    else:
        raise ScenarioError("robots", "scenario defines no robots")

    for i, r in enumerate(robots):
        btype = r.get("behavior", {}).get("type")
        if btype not in BEHAVIORS:
            raise ScenarioError(f"robots[{i}].behavior.type", f"expected one of {BEHAVIORS}, got {btype!r}")

    scenario = Scenario(
        name=name,
        raw=raw,
        seed=seed_value,
        duration=dur,
        physics_hz=physics_hz,
        control_hz=control_hz,
        bounds=tuple(bounds),
        obstacles=obstacles,
        robots=robots,
        stop_when_done=bool(raw.get("stop_when_done", False)),
    )
    # building the robot configs validates every numeric field
    for i, r in enumerate(robots):
        robot_config(r, f"robots[{i}]")
    return scenario


def _random_spawns(spawn: dict, base: dict, bounds, obstacles, seed: int) -> list[dict]:
    from .geometry import box_segments, point_segment_distance

    count = spawn.get("count")
    if isinstance(count, bool) or not isinstance(count, int) or count < 1:
        raise ScenarioError("spawn.count", f"expected a positive integer, got {count!r}")
    margin = _number(spawn, "margin", "spawn", default=0.01, minimum=0.0)
    radius = float(base.get("body_radius", 0.0335))
    walls = box_segments(*bounds) + list(obstacles)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    poses: list[list[float]] = []
    for _ in range(10000):
        if len(poses) == count:
            break
        x = rng.uniform(bounds[0], bounds[2])
        y = rng.uniform(bounds[1], bounds[3])
        heading = rng.uniform(-math.pi, math.pi)
        if any(point_segment_distance(x, y, w) < radius + margin for w in walls):
            continue
        if any(math.hypot(x - p[0], y - p[1]) < 2 * radius + margin for p in poses):
            continue
        poses.append([x, y, heading])
    if len(poses) < count:
        raise ScenarioError("spawn.count", f"could not place {count} robots without overlap")
    out = []
    for i, pose in enumerate(poses):
        r = copy.deepcopy(base)
        r["label"] = f"r{i}"
        r["pose"] = pose
        out.append(r)
    return out


def robot_config(r: dict, where: str = "robot") -> RobotConfig:
    geom_t = r.get("geometry", {})
    noise_t = r.get("noise", {})
    ctrl_t = r.get("control", {})
    ir_t = r.get("ir", {})
    try:
        geometry = RobotGeometry(
            wheel_radius_left=_number(geom_t, "wheel_radius_left", f"{where}.geometry", 0.025, positive=True),
            wheel_radius_right=_number(geom_t, "wheel_radius_right", f"{where}.geometry", 0.025, positive=True),
            axle_length=_number(geom_t, "axle_length", f"{where}.geometry", 0.06, positive=True),
            counts_per_wheel_rev=int(_number(geom_t, "counts_per_wheel_rev", f"{where}.geometry", 288, positive=True)),
            max_wheel_speed=_number(geom_t, "max_wheel_speed", f"{where}.geometry", 0.25, positive=True),
        )
        ir_model = IrSensorModel(
            alpha=_number(ir_t, "alpha", f"{where}.ir", 0.39, positive=True),
            beta=_number(ir_t, "beta", f"{where}.ir", 10.0, minimum=0.0),
            max_range=_number(ir_t, "max_range", f"{where}.ir", 0.20, positive=True),
        )
        gains = PidGains(
            kp=_number(ctrl_t, "kp", f"{where}.control", 3.5, minimum=0.0),
            ki=_number(ctrl_t, "ki", f"{where}.control", 9.0, minimum=0.0),
            kd=_number(ctrl_t, "kd", f"{where}.control", 0.2, minimum=0.0),
            integral_limit=_number(ctrl_t, "integral_limit", f"{where}.control", 1.0, positive=True),
            output_limit=_number(ctrl_t, "output_limit", f"{where}.control", 1.0, positive=True),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(where, str(exc)) from None
    return RobotConfig(
        label=str(r.get("label", "r0")),
        pose=Pose2D(*r["pose"]),
        geometry=geometry,
        ir_model=ir_model,
        body_radius=_number(r, "body_radius", where, 0.0335, positive=True),
        plant_tau=_number(r, "plant_tau", where, 0.15, positive=True),
        noise=NoiseConfig(
            slip_sigma=_number(noise_t, "slip_sigma", f"{where}.noise", 0.0, minimum=0.0),
            ir_sigma=_number(noise_t, "ir_sigma", f"{where}.noise", 0.0, minimum=0.0),
            gyro_sigma=_number(noise_t, "gyro_sigma", f"{where}.noise", 0.0, minimum=0.0),
            gyro_bias=_number(noise_t, "gyro_bias", f"{where}.noise", 0.0),
        ),
        gyro_fusion=bool(r.get("gyro_fusion", False)),
        heading_q=_number(ctrl_t, "heading_q", f"{where}.control", 1e-7, positive=True),
        heading_r=_number(ctrl_t, "heading_r", f"{where}.control", 2.5e-3, positive=True),
        gains=gains,
        kalman_q=_number(ctrl_t, "kalman_q", f"{where}.control", 1e-5, positive=True),
        kalman_r=_number(ctrl_t, "kalman_r", f"{where}.control", 4e-4, positive=True),
        battery_capacity=_number(r, "battery_capacity", where, 1800.0, positive=True),
    )


def _route(b: dict, pose: list[float], where: str) -> list[tuple[float, float]]:
    pts = b.get("waypoints")
    if not isinstance(pts, list) or not pts:
        raise ScenarioError(f"{where}.waypoints", "expected a non-empty list of [x, y] points")
    route = [tuple(_vector(p, 2, f"{where}.waypoints[{i}]")) for i, p in enumerate(pts)]
    if b.get("relative", False):
        route = [(pose[0] + x, pose[1] + y) for x, y in route]
    return route


def map_settings(raw: dict) -> dict:
    metrics = raw.get("metrics", {})
    return {
        "map_resolution": _number(metrics, "map_resolution", "metrics", 0.02, positive=True),
        "map_band": _number(metrics, "map_band", "metrics", 0.02, positive=True),
        "map_centered": bool(metrics.get("map_centered", False)),
        "coverage_cell": _number(metrics, "coverage_cell", "metrics", 0.05, positive=True),
    }


def map_grid(scenario: Scenario) -> OccupancyGrid:
    m = map_settings(scenario.raw)
    return OccupancyGrid.covering(*scenario.bounds, resolution=m["map_resolution"], centered=m["map_centered"])


def clear_fraction(b: dict, where: str) -> float:
    """Clearing cutoff for the mapper from the largest incidence it should expect."""
    deg = _number(b, "max_incidence_deg", where, 0.0, minimum=0.0)
    if deg >= 90:
        raise ScenarioError(f"{where}.max_incidence_deg", f"must be below 90, got {deg!r}")
    return math.sqrt(math.cos(math.radians(deg)))


def build_app(r: dict, scenario: Scenario, where: str):
    from . import apps

    b = r["behavior"]
    kind = b["type"]
    if kind == "step":
        return apps.StepApp(_number(b, "setpoint", where, 0.0675), _number(b, "step_time", where, 2.7, minimum=0.0))
    if kind == "open_loop":
        return apps.OpenLoopApp(_vector(b.get("actuation", [0.0, 0.0]), 2, f"{where}.actuation"))
    if kind in ("waypoints", "mapping"):
        params = WaypointParams(
            cruise=_number(b, "cruise", where, 0.1, positive=True),
            tolerance=_number(b, "tolerance", where, 0.01, positive=True),
        )
        loops = int(_number(b, "loops", where, 1, positive=True))
        route = _route(b, r["pose"], where)
        if kind == "mapping":
            return apps.MappingApp(route, map_grid(scenario), loops, params, clear_fraction(b, where))
        return apps.WaypointApp(route, loops, params)
    if kind == "coverage":
        return apps.CoverageApp(
            CoverageParams(
                threshold=_number(b, "threshold", where, 0.08, positive=True),
                cruise=_number(b, "cruise", where, 0.1, positive=True),
                jitter=_number(b, "jitter", where, 0.3, minimum=0.0),
                turn_rate=_number(b, "turn_rate", where, 1.5, positive=True),
            )
        )
    if kind == "flocking":
        return apps.FlockingApp(
            FlockingParams(
                w_sep=_number(b, "w_sep", where, 0.12, minimum=0.0),
                w_coh=_number(b, "w_coh", where, 0.08, minimum=0.0),
                w_align=_number(b, "w_align", where, 0.5, minimum=0.0),
                desired_dist=_number(b, "desired_dist", where, 0.15, positive=True),
                cruise=_number(b, "cruise", where, 0.06, minimum=0.0),
            )
        )
    if kind == "sweep":
        return apps.SweepApp(_number(b, "speed", where, 0.01, positive=True), _number(b, "span", where, 0.3, positive=True))
    raise ScenarioError(f"{where}.type", f"unknown behavior {kind!r}")


def build_simulation(scenario: Scenario) -> Simulation:
    configs = [robot_config(r, f"robots[{i}]") for i, r in enumerate(scenario.robots)]
    app_list = [build_app(r, scenario, f"robots[{i}].behavior") for i, r in enumerate(scenario.robots)]
    perception = float(scenario.raw.get("behavior", {}).get("perception_radius", 0.5))
    try:
        return Simulation(
            scenario.bounds,
            configs,
            app_list,
            obstacles=scenario.obstacles,
            seed=scenario.seed,
            physics_hz=scenario.physics_hz,
            control_hz=scenario.control_hz,
            perception_radius=perception,
        )
    except ValueError as exc:
        raise ScenarioError("robots", str(exc)) from None
