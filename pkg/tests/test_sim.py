import math

import numpy as np
import pytest

from herosim.apps import OpenLoopApp, StepApp, WaypointApp
from herosim.geometry import Segment
from herosim.kinematics import Pose2D, RobotGeometry, Twist
from herosim.sensing import IrSensorModel, ir_forward, ir_invert
from herosim.sim import (
    ConfigurationError,
    NoiseConfig,
    RobotConfig,
    Simulation,
    World,
    plant_step,
    raycast,
)

GEOM = RobotGeometry()
WMAX = GEOM.max_wheel_speed / GEOM.wheel_radius_left
BIG = (-10.0, -10.0, 10.0, 10.0)


def _sim(robots, apps, bounds=BIG, **kw):
    return Simulation(bounds, robots, apps, **kw)


def _run(sim, duration):
    return [t.to_dict() for t in sim.run(duration)]


class Scripted:
    """Open-loop actuation schedule: list of (until_time, (left, right))."""

    wants_neighbors = False

    def __init__(self, schedule):
        self.schedule = schedule
        self.state = "scripted"
        self.done = False
        self.open_loop = schedule[0][1]

    def step(self, obs, rng):
        for until, act in self.schedule:
            if obs.time < until:
                self.open_loop = act
                break
        else:
            self.open_loop = (0.0, 0.0)
        return Twist(0.0, 0.0)


def test_raycast_examples():
    world = World(BIG, [Segment(1, -1, 1, 1)])
    hit = raycast(world, Pose2D(), 0.0, 5.0)
    assert hit.distance == pytest.approx(1.0) and hit.incidence == pytest.approx(0.0)
    assert raycast(world, Pose2D(), 0.0, 0.5) is None
    slanted = World(BIG, [Segment(0.5, -0.5, 1.5, 0.5)])
    hit = raycast(slanted, Pose2D(), 0.0, 5.0)
    assert hit.distance == pytest.approx(1.0)
    assert hit.incidence == pytest.approx(math.pi / 4)
    parallel = World(BIG, [Segment(0, 0.5, 5, 0.5)])
    assert raycast(parallel, Pose2D(), 0.0, 5.0) is None
    with pytest.raises(ValueError):
        raycast(world, Pose2D(), 0.0, 0.0)


def test_raycast_sees_other_robots_but_not_itself():
    a = RobotConfig("a", Pose2D(0, 0, 0))
    b = RobotConfig("b", Pose2D(0.5, 0, 0))
    sim = _sim([a, b], [OpenLoopApp(), OpenLoopApp()])
    hit = raycast(sim.world, a.pose, 0.0, 1.0, ignore=sim.robots[0])
    assert hit.distance == pytest.approx(0.5 - b.body_radius)
    assert raycast(sim.world, a.pose, math.pi, 1.0, ignore=sim.robots[0]) is None


def test_plant_step_lag():
    assert plant_step(0.0, 0.0, 0.15, 0.01, GEOM) == 0.0
    assert plant_step(1.0, 0.0, 0.15, 0.15, GEOM) == pytest.approx(WMAX * (1 - math.exp(-1)))
    assert plant_step(1.0, 0.0, 0.15, 0.15, GEOM) / WMAX == pytest.approx(0.632, abs=1e-3)
    assert plant_step(1.0, 0.0, 0.15, 0.75, GEOM) >= 0.99 * WMAX
    assert plant_step(3.0, WMAX, 0.15, 1.0, GEOM) == WMAX
    with pytest.raises(ValueError):
        plant_step(1.0, 0.0, 0.0, 0.01, GEOM)


def test_configuration_errors():
    r = RobotConfig("r", Pose2D(0, 0, 0))
    with pytest.raises(ConfigurationError, match="multiple"):
        _sim([r], [OpenLoopApp()], physics_hz=100, control_hz=30)
    with pytest.raises(ConfigurationError):
        _sim([r], [])
    with pytest.raises(ConfigurationError, match="unique"):
        _sim([r, RobotConfig("r", Pose2D(1, 0, 0))], [OpenLoopApp(), OpenLoopApp()])
    with pytest.raises(ConfigurationError, match="overlaps"):
        _sim([r, RobotConfig("s", Pose2D(0.05, 0, 0))], [OpenLoopApp(), OpenLoopApp()])
    with pytest.raises(ConfigurationError, match="walls"):
        _sim([RobotConfig("r", Pose2D(0.01, 0.5, 0))], [OpenLoopApp()], bounds=(0, 0, 1, 1))
    fast = RobotConfig("r", Pose2D(0, 0, 0), geometry=RobotGeometry(max_wheel_speed=2.0))
    with pytest.raises(ConfigurationError, match="half the body radius"):
        _sim([fast], [OpenLoopApp()])
    with pytest.raises(ConfigurationError):
        World((0, 0, 0, 1))


def test_straight_line_matches_lag_oracle():
    a, tau = 0.4, 0.15
    sim = _sim([RobotConfig("r", Pose2D(0, 0, 0))], [OpenLoopApp((a, a))])
    ticks = _run(sim, 1.0)
    # actuation is applied after the first control tick, at t = 0.05 s
    active = 0.95
    distance = a * GEOM.max_wheel_speed * (active - tau * (1 - math.exp(-active / tau)))
    x, y, heading = ticks[-1]["robots"][0]["true_pose"]
    assert x == pytest.approx(distance, rel=1e-9)
    assert y == 0.0 and heading == 0.0
    ox, oy, _ = ticks[-1]["robots"][0]["odom_pose"]
    assert abs(ox - x) < GEOM.arc_step and oy == 0.0


def test_opposite_wheels_rotate_in_place():
    sim = _sim([RobotConfig("r", Pose2D(0.3, -0.2, 0.1))], [OpenLoopApp((0.5, -0.5))])
    ticks = _run(sim, 1.0)
    x, y, heading = ticks[-1]["robots"][0]["true_pose"]
    assert math.hypot(x - 0.3, y + 0.2) < 1e-9
    assert heading != 0.1


def test_odometry_bounded_by_quantization_after_closed_route():
    app = WaypointApp([[0.3, 0.0], [0.3, 0.3], [0.0, 0.3], [0.0, 0.0]], close_loop=False)
    sim = _sim([RobotConfig("r", Pose2D(0, 0, 0))], [app])
    ticks = _run(sim, 40.0)
    assert app.done
    last = ticks[-1]["robots"][0]
    err = math.hypot(last["true_pose"][0] - last["odom_pose"][0], last["true_pose"][1] - last["odom_pose"][1])
    assert err < sim._steps * 0.00055
    assert err < 0.005


def test_wall_contact_stops_translation_but_allows_turning():
    cfg = RobotConfig("r", Pose2D(0.15, 0.5, math.pi))
    app = Scripted([(2.0, (1.0, 1.0)), (3.0, (0.6, -0.4))])
    sim = _sim([cfg], [app], bounds=(0, 0, 1, 1))
    ticks = _run(sim, 3.0)
    robot = ticks[-1]["robots"][0]
    pinned = [t["robots"][0] for t in ticks if 2.1 <= t["time"] < 3.0]
    assert any(t["robots"][0]["collision"] for t in ticks)
    assert min(t["robots"][0]["true_pose"][0] for t in ticks) >= cfg.body_radius
    assert abs(robot["true_pose"][2] - pinned[0]["true_pose"][2]) > 0.2
    assert sim.overlaps() == 0


def test_robots_do_not_interpenetrate():
    a = RobotConfig("a", Pose2D(0.0, 0.0, 0.0))
    b = RobotConfig("b", Pose2D(0.3, 0.0, math.pi))
    sim = _sim([a, b], [OpenLoopApp((0.8, 0.8)), OpenLoopApp((0.8, 0.8))])
    ticks = _run(sim, 3.0)
    assert any(r["collision"] for t in ticks for r in t["robots"])
    pa, pb = (r["true_pose"] for r in ticks[-1]["robots"])
    assert math.hypot(pa[0] - pb[0], pa[1] - pb[1]) >= a.body_radius + b.body_radius


def test_wall_sensing_without_noise():
    cfg = RobotConfig("r", Pose2D(0.5, 0.5, 0.0))
    sim = _sim([cfg], [OpenLoopApp()], bounds=(0, 0, 0.6, 1.0))
    robot = _run(sim, 0.05)[0]["robots"][0]
    gap = 0.6 - 0.5 - cfg.body_radius
    assert robot["ir_true"][0] == pytest.approx(gap)
    assert robot["ir_raw"][0] == ir_forward(cfg.ir_model, gap)
    assert robot["ir"][0] == pytest.approx(ir_invert(cfg.ir_model, robot["ir_raw"][0]), rel=1e-7)
    assert robot["ir_true"][4] is None and robot["ir"][4] == IrSensorModel().max_range


def test_reports_once_per_tick_with_exact_traffic():
    sim = _sim([RobotConfig("r", Pose2D(0, 0, 0))], [StepApp(0.05, 0.5)])
    ticks = _run(sim, 2.0)
    assert len(ticks) == 40
    times = [t["time"] for t in ticks]
    assert all(b > a for a, b in zip(times, times[1:]))
    # laser 48 + odom 48 + imu 24 + cmd_vel 16 + led 6 payload bytes, 8 bytes of framing each
    assert {t["robots"][0]["tx_bytes"] for t in ticks} == {182}
    assert {t["robots"][0]["tx_frames"] for t in ticks} == {5}


def test_battery_never_increases():
    sim = _sim([RobotConfig("r", Pose2D(0, 0, 0))], [StepApp(0.2, 0.0)])
    charge = [t["robots"][0]["battery_mah"] for t in _run(sim, 5.0)]
    assert all(b <= a for a, b in zip(charge, charge[1:]))
    assert charge[-1] < 1800.0


def _noisy_pair(seed):
    noise = NoiseConfig(slip_sigma=0.005, ir_sigma=2.0, gyro_sigma=0.002)
    robots = [RobotConfig("a", Pose2D(-1, 0, 0), noise=noise), RobotConfig("b", Pose2D(1, 0, 1.0), noise=noise, gyro_fusion=True)]
    return _sim(robots, [StepApp(0.1, 0.2), StepApp(0.08, 0.0)], seed=seed)


def test_same_seed_same_stream():
    assert _run(_noisy_pair(3), 3.0) == _run(_noisy_pair(3), 3.0)
    assert _run(_noisy_pair(3), 3.0) != _run(_noisy_pair(4), 3.0)


def test_slip_noise_bends_the_true_path():
    ticks = _run(_noisy_pair(5), 3.0)
    a = ticks[-1]["robots"][0]
    assert a["true_pose"][1] != 0.0
    assert np.isfinite(a["odom_pose"]).all()
