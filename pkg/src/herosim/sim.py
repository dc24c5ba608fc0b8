"""Deterministic fixed-step 2D world.

Physics runs at ``physics_hz`` (default 100 Hz) and advances wheel plants,
true poses and encoders. Every ``physics_hz / control_hz`` physics steps a
control tick samples the IR ring, updates odometry, exchanges topic
messages with the host applications over an in-process broker, runs the
wheel controllers and the battery, and emits one :class:`TickReport`.

All randomness comes from per-robot generators spawned from the world
seed, so a run is a pure function of its configuration and seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Protocol, Sequence

import numpy as np

from .control import DEFAULT_WHEEL_GAINS, HeadingFilter, PidGains, WheelPair, heading_fuse
from .geometry import Segment, box_segments, point_segment_distance, ray_circle, ray_segment
from .kinematics import (
    Pose2D,
    RobotGeometry,
    Twist,
    WheelDelta,
    angle_diff,
    integrate_pose,
    inverse_kinematics,
    normalize_angle,
    odometry_delta,
    saturate_wheels,
)
from .protocol import messages
from .protocol.broker import Broker, LoopbackLink
from .sensing import (
    BatteryModel,
    IrSensorModel,
    QuadratureState,
    SensorRing,
    battery_step,
    draw_for_speed,
    encoder_velocity,
    ir_invert,
    phase_after,
    quadrature_step,
    quantize,
)

WALL_CACHE_REACH = 0.05  # m a robot may travel before its collision wall list is rebuilt


class ConfigurationError(ValueError):
    pass


class InvariantViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class RayHit:
    distance: float
    incidence: float

    @property
    def cos_incidence(self) -> float:
        return math.cos(self.incidence)


@dataclass(frozen=True)
class NoiseConfig:
    slip_sigma: float = 0.0  # multiplicative, per wheel per physics step
    ir_sigma: float = 0.0  # ADC counts
    gyro_sigma: float = 0.0  # rad/s per control sample
    gyro_bias: float = 0.0  # rad/s


@dataclass(frozen=True)
class RobotConfig:
    label: str
    pose: Pose2D
    geometry: RobotGeometry = RobotGeometry()
    ir_model: IrSensorModel = IrSensorModel()
    ring: SensorRing = SensorRing()
    body_radius: float = 0.0335
    plant_tau: float = 0.15
    noise: NoiseConfig = NoiseConfig()
    gyro_fusion: bool = False
    heading_q: float = 1e-7
    heading_r: float = 2.5e-3
    gains: PidGains = DEFAULT_WHEEL_GAINS
    kalman_q: float = 1e-5
    kalman_r: float = 4e-4
    battery_capacity: float = 1800.0


@dataclass
class RobotSim:
    """Runtime state of one simulated robot."""

    config: RobotConfig
    pose: Pose2D
    controller: WheelPair
    battery: BatteryModel
    rng: np.random.Generator
    rates: list[float] = field(default_factory=lambda: [0.0, 0.0])  # true wheel rad/s
    actuation: list[float] = field(default_factory=lambda: [0.0, 0.0])
    wheel_angle: list[float] = field(default_factory=lambda: [0.0, 0.0])
    encoders: list[QuadratureState] = field(default_factory=lambda: [QuadratureState(), QuadratureState()])
    last_counts: tuple[int, int] = (0, 0)
    targets: tuple[float, float] = (0.0, 0.0)
    odom: Pose2D = Pose2D()
    odom_raw: Pose2D = Pose2D()
    heading_filter: HeadingFilter | None = None
    yaw_accum: float = 0.0
    velocity: tuple[float, float] = (0.0, 0.0)  # true world-frame m/s
    tick_pose: Pose2D = Pose2D()
    collided: bool = False
    collisions: int = 0
    led: tuple[int, int, int] = (0, 0, 0)
    open_loop: tuple[float, float] | None = None
    wire_bytes: int = 0
    wire_frames: int = 0
    near_walls: tuple = ()  # (anchor x, anchor y, walls within reach of the anchor)
    plant_decay: float | None = None  # cached exp(-dt / plant_tau)

    @property
    def label(self) -> str:
        return self.config.label

    @property
    def geometry(self) -> RobotGeometry:
        return self.config.geometry

    def wheel_speeds(self) -> tuple[float, float]:
        g = self.geometry
        return (self.rates[0] * g.wheel_radius_left, self.rates[1] * g.wheel_radius_right)


@dataclass
class World:
    bounds: tuple[float, float, float, float]
    obstacles: list[Segment] = field(default_factory=list)
    robots: list[RobotSim] = field(default_factory=list)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < xmax and ymin < ymax):
            raise ConfigurationError("bounds must satisfy xmin < xmax and ymin < ymax")
        self.walls = box_segments(*self.bounds) + list(self.obstacles)

    def inside(self, x: float, y: float) -> bool:
        xmin, ymin, xmax, ymax = self.bounds
        return xmin < x < xmax and ymin < y < ymax


def raycast(
    world: World,
    origin: Pose2D,
    bearing: float,
    max_range: float,
    ignore: RobotSim | None = None,
) -> RayHit | None:
    """Nearest wall or robot body along ``origin.heading + bearing``."""
    if not max_range > 0:
        raise ValueError("max_range must be positive")
    circles = [(r.pose.x, r.pose.y, r.config.body_radius) for r in world.robots if r is not ignore]
    return _cast(origin.x, origin.y, origin.heading + bearing, max_range, world.walls, circles)


def _cast(ox: float, oy: float, angle: float, max_range: float, walls, circles) -> RayHit | None:
    dx, dy = math.cos(angle), math.sin(angle)
    best_t, best_cos = math.inf, 1.0
    for s in walls:
        hit = ray_segment(ox, oy, dx, dy, s)
        if hit is not None and hit[0] < best_t:
            best_t, best_cos = hit
    for cx, cy, radius in circles:
        hit = ray_circle(ox, oy, dx, dy, cx, cy, radius)
        if hit is not None and hit[0] < best_t:
            best_t, best_cos = hit
    if best_t > max_range:
        return None
    return RayHit(best_t, math.acos(min(1.0, best_cos)))


def _plant_advance(
    actuation: float, current: float, tau: float, dt: float, wmax: float, decay: float | None = None
) -> tuple[float, float]:
    """First-order lag toward ``actuation * wmax``; returns new rate and exact rotation.

    ``decay`` is ``exp(-dt / tau)``, passed in by callers that step often.
    """
    target = max(-1.0, min(1.0, actuation)) * wmax
    if decay is None:
        decay = math.exp(-dt / tau)
    rate = target + (current - target) * decay
    rotation = target * dt + (current - target) * tau * (1.0 - decay)
    return max(-wmax, min(wmax, rate)), rotation


def plant_step(actuation: float, current: float, tau: float, dt: float, geom: RobotGeometry) -> float:
    """Servo wheel rate after ``dt`` seconds of first-order lag, rad/s."""
    if not (dt > 0 and tau > 0):
        raise ValueError("dt and tau must be positive")
    return _plant_advance(actuation, current, tau, dt, geom.max_wheel_speed / geom.wheel_radius_left)[0]


def _advance_encoder(state: QuadratureState, target: int) -> QuadratureState:
    while state.count != target:
        direction = 1 if target > state.count else -1
        state = quadrature_step(state, phase_after(state.phase, direction))
    return state


@dataclass
class Observation:
    """What a host application receives for one robot in one tick."""

    time: float
    dt: float
    ranges: tuple[float, ...]
    odom: Pose2D
    gyro_rate: float
    neighbors: list = field(default_factory=list)
    max_range: float = 0.2
    sensor_offset: float = 0.0335
    bearings: tuple[float, ...] = ()


class Application(Protocol):
    state: str
    done: bool
    wants_neighbors: bool

    def step(self, obs: Observation, rng: np.random.Generator) -> Twist: ...


@dataclass
class RobotReport:
    label: str
    true_pose: tuple[float, float, float]
    odom_pose: tuple[float, float, float]
    ir: tuple[float, ...]
    ir_raw: tuple[int, ...]
    ir_true: tuple[float | None, ...]
    wheel_speeds: tuple[float, float]
    wheel_estimates: tuple[float, float]
    wheel_targets: tuple[float, float]
    battery_mah: float
    behavior_state: str
    led: tuple[int, int, int]
    collision: bool
    tx_bytes: int
    tx_frames: int

    def to_dict(self) -> dict:
        return {
            "id": self.label,
            "true_pose": _r(self.true_pose),
            "odom_pose": _r(self.odom_pose),
            "ir": _r(self.ir),
            "ir_raw": list(self.ir_raw),
            "ir_true": [None if v is None else float(v) for v in self.ir_true],
            "wheel_speeds": _r(self.wheel_speeds),
            "wheel_estimates": _r(self.wheel_estimates),
            "wheel_targets": _r(self.wheel_targets),
            "battery_mah": float(self.battery_mah),
            "behavior_state": self.behavior_state,
            "led": list(self.led),
            "collision": self.collision,
            "tx_bytes": self.tx_bytes,
            "tx_frames": self.tx_frames,
        }


def _r(values: Sequence[float]) -> list[float]:
    return [float(v) for v in values]


@dataclass
class TickReport:
    time: float
    robots: list[RobotReport]

    def to_dict(self) -> dict:
        return {"type": "tick", "time": self.time, "robots": [r.to_dict() for r in self.robots]}


class Simulation:
    def __init__(
        self,
        bounds: tuple[float, float, float, float],
        robots: Sequence[RobotConfig],
        apps: Sequence[Application],
        obstacles: Sequence[Segment] = (),
        seed: int = 0,
        physics_hz: int = 100,
        control_hz: int = 20,
        perception_radius: float = 0.5,
    ):
        if len(apps) != len(robots):
            raise ConfigurationError("need exactly one application per robot")
        if physics_hz <= 0 or control_hz <= 0:
            raise ConfigurationError("rates must be positive")
        if physics_hz % control_hz:
            raise ConfigurationError(f"physics_hz ({physics_hz}) must be a multiple of control_hz ({control_hz})")
        self.physics_hz = physics_hz
        self.control_hz = control_hz
        self.substeps = physics_hz // control_hz
        self.dt = 1.0 / physics_hz
        self.dt_control = 1.0 / control_hz
        self.perception_radius = perception_radius
        self.apps = list(apps)
        self.world = World(tuple(bounds), list(obstacles), rng_seed=seed)
        self.time = 0.0
        self.ticks = 0
        self._steps = 0

        labels = [r.label for r in robots]
        if len(set(labels)) != len(labels):
            raise ConfigurationError("robot labels must be unique")
        streams = np.random.SeedSequence(seed).spawn(len(robots) * 2)
        self.app_rngs = []
        for i, cfg in enumerate(robots):
            g = cfg.geometry
            if g.max_wheel_speed * self.dt >= cfg.body_radius / 2:
                raise ConfigurationError(f"{cfg.label}: max speed x physics dt must stay below half the body radius")
            if not self.world.inside(cfg.pose.x, cfg.pose.y) or any(
                point_segment_distance(cfg.pose.x, cfg.pose.y, w) < cfg.body_radius for w in self.world.walls
            ):
                raise ConfigurationError(f"{cfg.label}: spawn pose overlaps the arena walls or lies outside")
            for other in self.world.robots:
                if cfg.pose.distance_to(other.pose) < cfg.body_radius + other.config.body_radius:
                    raise ConfigurationError(f"{cfg.label}: spawn overlaps {other.label}")
            robot = RobotSim(
                config=cfg,
                pose=cfg.pose,
                controller=WheelPair(g, cfg.gains, cfg.kalman_q, cfg.kalman_r),
                battery=BatteryModel(capacity=cfg.battery_capacity),
                rng=np.random.default_rng(streams[2 * i]),
                odom=cfg.pose,
                odom_raw=cfg.pose,
                tick_pose=cfg.pose,
            )
            if cfg.gyro_fusion:
                robot.heading_filter = HeadingFilter(cfg.pose.heading, cfg.heading_q * self.dt_control, cfg.heading_q, cfg.heading_r)
            self.world.robots.append(robot)
            self.app_rngs.append(np.random.default_rng(streams[2 * i + 1]))

        self.broker = Broker()
        self.robot_links: list[LoopbackLink] = []
        self.app_links: list[LoopbackLink] = []
        self.topic_names: list[dict[str, str]] = []
        for i, robot in enumerate(self.world.robots):
            base = 1 + 8 * i
            ns = f"/{robot.label}"
            ids = {t: base + k for k, t in enumerate(("laser", "odom", "imu", "cmd_vel", "led"))}
            self.topic_names.append({t: f"{ns}/{t}" for t in ids})
            rl, al = LoopbackLink(self.broker), LoopbackLink(self.broker)
            for topic in ("laser", "odom", "imu"):
                rl.client.advertise(f"{ns}/{topic}", ids[topic])
                al.client.subscribe(f"{ns}/{topic}", ids[topic])
            for topic in ("cmd_vel", "led"):
                al.client.advertise(f"{ns}/{topic}", ids[topic])
                rl.client.subscribe(f"{ns}/{topic}", ids[topic])
            rl.poll()
            al.poll()
            robot.wire_bytes = rl.client.bytes_sent + rl.client.bytes_received
            robot.wire_frames = rl.client.frames_sent + rl.client.frames_received
            self.robot_links.append(rl)
            self.app_links.append(al)

    @property
    def robots(self) -> list[RobotSim]:
        return self.world.robots

    # -- physics ---------------------------------------------------------

    def step_physics(self) -> None:
        dt = self.dt
        for robot in self.world.robots:
            cfg = robot.config
            g = cfg.geometry
            decay = math.exp(-dt / cfg.plant_tau) if robot.plant_decay is None else robot.plant_decay
            robot.plant_decay = decay
            rotations = [0.0, 0.0]
            for w, radius in enumerate((g.wheel_radius_left, g.wheel_radius_right)):
                robot.rates[w], rotations[w] = _plant_advance(
                    robot.actuation[w], robot.rates[w], cfg.plant_tau, dt, g.max_wheel_speed / radius, decay
                )
            ground = rotations
            if cfg.noise.slip_sigma > 0:
                n = robot.rng.standard_normal(2)
                ground = [rotations[0] * (1.0 + cfg.noise.slip_sigma * n[0]), rotations[1] * (1.0 + cfg.noise.slip_sigma * n[1])]
            dL, dTheta = odometry_delta(WheelDelta(ground[0], ground[1]), g)
            candidate = integrate_pose(robot.pose, dL, dTheta)
            if self._blocked(robot, candidate):
                # translation stops; the in-place turn goes on, since a round
                # body cannot interpenetrate anything by turning
                robot.collided = True
                robot.collisions += 1
                rl, rr, half = g.wheel_radius_left, g.wheel_radius_right, 0.5 * g.axle_length
                rotations = [-half * dTheta / rl, half * dTheta / rr]
                mean = 0.5 * (robot.rates[0] * rl + robot.rates[1] * rr)
                robot.rates = [robot.rates[0] - mean / rl, robot.rates[1] - mean / rr]
                candidate = Pose2D(robot.pose.x, robot.pose.y, normalize_angle(robot.pose.heading + dTheta))
            robot.pose = candidate
            robot.yaw_accum += dTheta
            step = g.count_angle
            for w in (0, 1):
                robot.wheel_angle[w] += rotations[w]
                robot.encoders[w] = _advance_encoder(robot.encoders[w], math.floor(robot.wheel_angle[w] / step))
        self._steps += 1
        self.time = self._steps * dt

    def _blocked(self, robot: RobotSim, candidate: Pose2D) -> bool:
        if candidate.x == robot.pose.x and candidate.y == robot.pose.y:
            return False
        radius = robot.config.body_radius
        # walls are pre-filtered around an anchor and refreshed once the robot leaves it
        if not robot.near_walls or math.hypot(candidate.x - robot.near_walls[0], candidate.y - robot.near_walls[1]) > WALL_CACHE_REACH:
            reach = radius + 2 * WALL_CACHE_REACH
            near = tuple(w for w in self.world.walls if point_segment_distance(candidate.x, candidate.y, w) < reach)
            robot.near_walls = (candidate.x, candidate.y, near)
        for w in robot.near_walls[2]:
            if point_segment_distance(candidate.x, candidate.y, w) < radius:
                return True
        for other in self.world.robots:
            if other is robot:
                continue
            if math.hypot(candidate.x - other.pose.x, candidate.y - other.pose.y) < radius + other.config.body_radius:
                return True
        return False

    def overlaps(self) -> int:
        """Count of body/wall and body/body interpenetrations right now."""
        count = 0
        robots = self.world.robots
        for i, a in enumerate(robots):
            r = a.config.body_radius
            count += sum(point_segment_distance(a.pose.x, a.pose.y, w) < r - 1e-12 for w in self.world.walls)
            for b in robots[i + 1 :]:
                if a.pose.distance_to(b.pose) < r + b.config.body_radius - 1e-12:
                    count += 1
        return count

    # -- sensing ---------------------------------------------------------

    def _sense(self, robot: RobotSim) -> tuple[list[float], list[int], list[float | None]]:
        cfg = robot.config
        model = cfg.ir_model
        ranges, raw, truth = [], [], []
        p = robot.pose
        # anything farther than this from the body center is out of range of every sensor
        reach = cfg.body_radius + model.max_range
        walls = [w for w in self.world.walls if point_segment_distance(p.x, p.y, w) <= reach]
        circles = [
            (o.pose.x, o.pose.y, o.config.body_radius)
            for o in self.world.robots
            if o is not robot and math.hypot(o.pose.x - p.x, o.pose.y - p.y) <= reach + o.config.body_radius
        ]
        for bearing in cfg.ring.bearings:
            a = p.heading + bearing
            hit = _cast(p.x + cfg.body_radius * math.cos(a), p.y + cfg.body_radius * math.sin(a), a, model.max_range, walls, circles)
            if hit is None:
                level = model.beta
                truth.append(None)
            else:
                d = max(hit.distance, 1e-4)
                level = model.alpha / (d * d) * math.cos(hit.incidence) + model.beta
                truth.append(hit.distance)
            if cfg.noise.ir_sigma > 0:
                level += cfg.noise.ir_sigma * robot.rng.standard_normal()
            reading = quantize(model, level)
            raw.append(reading)
            ranges.append(ir_invert(model, reading))
        return ranges, raw, truth

    def neighbors_of(self, robot: RobotSim) -> list:
        from .behaviors import NeighborState

        out = []
        p = robot.pose
        c, s = math.cos(p.heading), math.sin(p.heading)
        for other in self.world.robots:
            if other is robot:
                continue
            dx, dy = other.pose.x - p.x, other.pose.y - p.y
            if math.hypot(dx, dy) > self.perception_radius:
                continue
            vx = other.velocity[0] - robot.velocity[0]
            vy = other.velocity[1] - robot.velocity[1]
            out.append(NeighborState((c * dx + s * dy, -s * dx + c * dy), (c * vx + s * vy, -s * vx + c * vy)))
        return out

    # -- control ---------------------------------------------------------

    def control_tick(self) -> TickReport:
        dt = self.dt_control
        sensed = []
        for i, robot in enumerate(self.world.robots):
            cfg = robot.config
            g = cfg.geometry
            counts = (robot.encoders[0].count, robot.encoders[1].count)
            dc = (counts[0] - robot.last_counts[0], counts[1] - robot.last_counts[1])
            robot.last_counts = counts
            rates = (encoder_velocity(dc[0], dt, g), encoder_velocity(dc[1], dt, g))
            dL, dTheta = odometry_delta(WheelDelta(dc[0] * g.count_angle, dc[1] * g.count_angle), g)
            robot.odom_raw = integrate_pose(robot.odom_raw, dL, dTheta)
            gyro = robot.yaw_accum / dt + cfg.noise.gyro_bias
            if cfg.noise.gyro_sigma > 0:
                gyro += cfg.noise.gyro_sigma * robot.rng.standard_normal()
            robot.yaw_accum = 0.0
            if robot.heading_filter is not None:
                fused, robot.heading_filter = heading_fuse(robot.odom_raw.heading, gyro, dt, robot.heading_filter)
                robot.odom = integrate_pose(robot.odom, dL, angle_diff(fused, robot.odom.heading))
            else:
                robot.odom = robot.odom_raw
            robot.velocity = ((robot.pose.x - robot.tick_pose.x) / dt, (robot.pose.y - robot.tick_pose.y) / dt)
            robot.tick_pose = robot.pose

            ranges, raw, truth = self._sense(robot)
            sensed.append((ranges, raw, truth, rates, gyro, dL / dt, dTheta / dt))
            link = self.robot_links[i]
            names = self.topic_names[i]
            link.client.publish(names["laser"], messages.pack_laser(ranges, raw))
            o = robot.odom
            link.client.publish(
                names["odom"], messages.pack_odom((o.x, o.y, o.heading), (dL / dt * math.cos(o.heading), dL / dt * math.sin(o.heading), dTheta / dt))
            )
            link.client.publish(names["imu"], messages.pack_imu((0.0, 0.0, 9.81), (0.0, 0.0, gyro)))

        for i, (robot, app) in enumerate(zip(self.world.robots, self.apps)):
            link = self.app_links[i]
            names = self.topic_names[i]
            inbox = dict(link.poll())
            ranges, _ = messages.unpack_laser(inbox[names["laser"]])
            pose, _ = messages.unpack_odom(inbox[names["odom"]])
            _, gyro_xyz = messages.unpack_imu(inbox[names["imu"]])
            cfg = robot.config
            obs = Observation(
                time=self.time,
                dt=dt,
                ranges=tuple(ranges),
                odom=Pose2D(*pose),
                gyro_rate=gyro_xyz[2],
                neighbors=self.neighbors_of(robot) if getattr(app, "wants_neighbors", False) else [],
                max_range=cfg.ir_model.max_range,
                sensor_offset=cfg.body_radius,
                bearings=cfg.ring.bearings,
            )
            cmd = app.step(obs, self.app_rngs[i])
            link.client.publish(names["cmd_vel"], messages.pack_cmd_vel(cmd.linear, cmd.angular))
            link.client.publish(names["led"], messages.pack_led(getattr(app, "led", (0, 0, 0)), getattr(app, "led", (0, 0, 0))))
            robot.open_loop = getattr(app, "open_loop", None)

        reports = []
        for i, robot in enumerate(self.world.robots):
            cfg = robot.config
            g = cfg.geometry
            link = self.robot_links[i]
            names = self.topic_names[i]
            for topic, payload in link.poll():
                if topic == names["cmd_vel"]:
                    v, w = messages.unpack_cmd_vel(payload)
                    robot.targets = saturate_wheels(*inverse_kinematics(Twist(v, w), g), g.max_wheel_speed)
                elif topic == names["led"]:
                    robot.led = tuple(payload[:3])
            ranges, raw, truth, rates, *_ = sensed[i]
            if robot.open_loop is not None:
                robot.actuation = list(robot.open_loop)
            else:
                robot.actuation = list(robot.controller.update(robot.targets, rates, dt))
            draw = draw_for_speed(0.5 * (abs(robot.targets[0]) + abs(robot.targets[1])))
            robot.battery = battery_step(robot.battery, draw, dt)
            wire = link.client
            total_bytes = wire.bytes_sent + wire.bytes_received
            total_frames = wire.frames_sent + wire.frames_received
            tx_bytes, tx_frames = total_bytes - robot.wire_bytes, total_frames - robot.wire_frames
            robot.wire_bytes, robot.wire_frames = total_bytes, total_frames
            reports.append(
                RobotReport(
                    label=robot.label,
                    true_pose=robot.pose.as_tuple(),
                    odom_pose=robot.odom.as_tuple(),
                    ir=tuple(ranges),
                    ir_raw=tuple(raw),
                    ir_true=tuple(truth),
                    wheel_speeds=robot.wheel_speeds(),
                    wheel_estimates=robot.controller.estimates,
                    wheel_targets=robot.targets,
                    battery_mah=robot.battery.charge,
                    behavior_state=self.apps[i].state,
                    led=robot.led,
                    collision=robot.collided,
                    tx_bytes=tx_bytes,
                    tx_frames=tx_frames,
                )
            )
            robot.collided = False
        self.ticks += 1
        return TickReport(self.time, reports)

    def run(self, duration: float, stop_when_done: bool = False) -> Iterator[TickReport]:
        """Advance for ``duration`` seconds, yielding one report per control tick."""
        n_ticks = int(round(duration * self.control_hz))
        for _ in range(n_ticks):
            for _ in range(self.substeps):
                self.step_physics()
            report = self.control_tick()
            if self.overlaps():
                raise InvariantViolation(f"bodies interpenetrate at t={self.time:.3f}s")
            yield report
            if stop_when_done and all(getattr(a, "done", False) for a in self.apps):
                return
