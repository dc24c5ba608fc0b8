import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from herosim.behaviors import (
    L_CLAMP,
    L_FREE,
    L_OCC,
    CoverageMetric,
    CoverageParams,
    FlockingParams,
    NeighborState,
    OccupancyGrid,
    WaypointParams,
    coverage_metric_update,
    coverage_policy,
    flocking_policy,
    grid_update,
    map_accuracy,
    read_pgm,
    waypoint_command,
)
from herosim.geometry import bresenham, box_segments
from herosim.kinematics import Pose2D, RobotGeometry, inverse_kinematics

OPEN = [0.2] * 8
ranges8 = st.lists(st.floats(0.01, 0.2), min_size=8, max_size=8)


def test_coverage_open_space_cruises():
    params = CoverageParams()
    rng = np.random.default_rng(0)
    for _ in range(100):
        cmd, turning = coverage_policy(OPEN, rng)
        assert cmd.linear == params.cruise and abs(cmd.angular) <= params.jitter and turning == 0


def test_coverage_turns_away_from_nearer_side():
    ranges = [0.05, 0.06, 0.07, 0.1, 0.2, 0.2, 0.2, 0.2]
    cmd, turning = coverage_policy(ranges, np.random.default_rng(0))
    assert cmd.linear == 0.0 and cmd.angular < 0 and turning == -1
    mirrored = [ranges[0]] + ranges[1:][::-1]
    cmd, _ = coverage_policy(mirrored, np.random.default_rng(0))
    assert cmd.angular > 0


def test_coverage_keeps_turn_direction_while_blocked():
    ranges = [0.05, 0.2, 0.2, 0.2, 0.2, 0.05, 0.05, 0.05]
    cmd, turning = coverage_policy(ranges, np.random.default_rng(0), turning=-1)
    assert turning == -1 and cmd.angular < 0


def test_coverage_tie_break_is_seeded():
    tie = [0.05] + [0.2] * 7

    def directions(seed):
        rng = np.random.default_rng(seed)
        return [coverage_policy(tie, rng)[1] for _ in range(50)]

    assert directions(11) == directions(11)
    assert set(directions(11)) == {-1, 1}


@given(ranges8, st.integers(0, 2**32 - 1), st.sampled_from([-1, 0, 1]))
def test_coverage_respects_wheel_limits(ranges, seed, turning):
    geom = RobotGeometry()
    cmd, _ = coverage_policy(ranges, np.random.default_rng(seed), turning=turning)
    assert abs(cmd.linear) <= 0.25
    assert max(map(abs, inverse_kinematics(cmd, geom))) <= geom.max_wheel_speed


def test_flocking_examples():
    params = FlockingParams()
    alone = flocking_policy([])
    assert (alone.linear, alone.angular) == (params.cruise, 0.0)
    pair = [NeighborState((0.1, 0.2)), NeighborState((0.1, -0.2))]
    assert flocking_policy(pair).angular == 0.0
    ahead = flocking_policy([NeighborState((2 * params.desired_dist, 0.0))])
    assert ahead.angular == 0.0
    assert ahead.linear == pytest.approx(0.06 + 0.08)


def test_flocking_separation_backs_off_turning():
    close = flocking_policy([NeighborState((0.0, 0.05))])
    assert close.angular < 0


neighbor = st.builds(
    NeighborState,
    st.tuples(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5)),
    st.tuples(st.floats(-0.2, 0.2), st.floats(-0.2, 0.2)),
)


@given(st.lists(neighbor, max_size=6))
def test_flocking_mirror_equivariance(neighbors):
    mirrored = [
        NeighborState((n.relative_position[0], -n.relative_position[1]), (n.relative_velocity[0], -n.relative_velocity[1]))
        for n in neighbors
    ]
    a, b = flocking_policy(neighbors), flocking_policy(mirrored)
    assert b.linear == a.linear
    assert b.angular == -a.angular


@given(st.lists(neighbor, max_size=6))
def test_flocking_saturates(neighbors):
    params = FlockingParams()
    cmd = flocking_policy(neighbors, params)
    assert 0 <= cmd.linear <= params.max_linear
    assert abs(cmd.angular) <= params.max_angular


def test_waypoint_turns_then_drives():
    cmd, reached = waypoint_command(Pose2D(0, 0, 0), (0.0, 1.0))
    assert cmd.linear == 0.0 and cmd.angular > 0 and not reached
    cmd, reached = waypoint_command(Pose2D(0, 0, math.pi / 2), (0.0, 1.0))
    assert cmd.linear == WaypointParams().cruise and cmd.angular == 0.0
    cmd, _ = waypoint_command(Pose2D(0, 0.98, math.pi / 2), (0.0, 1.0))
    assert 0 < cmd.linear < WaypointParams().cruise
    assert waypoint_command(Pose2D(0, 0.995, 0), (0.0, 1.0))[1]


def _grid():
    return OccupancyGrid.covering(0.0, 0.0, 0.5, 0.5)


def test_grid_single_hit():
    grid = _grid()
    pose = Pose2D(0.1, 0.25, 0.0)
    grid_update(grid, pose, 0.0, 0.10, 0.2)
    p = grid.probability()
    hit = grid.cell_of(0.2, 0.25)
    assert p[hit[1], hit[0]] > 0.5
    assert grid.log_odds[hit[1], hit[0]] == L_OCC
    c0, r0 = grid.cell_of(pose.x, pose.y)
    for c, r in bresenham(c0, r0, *hit):
        if (c, r) != hit:
            assert p[r, c] < 0.5 and grid.log_odds[r, c] == L_FREE


def test_grid_clamps_and_no_hit_only_clears():
    grid = _grid()
    pose = Pose2D(0.1, 0.25, 0.0)
    for _ in range(10):
        grid_update(grid, pose, 0.0, 0.10, 0.2)
    hit = grid.cell_of(0.2, 0.25)
    assert grid.log_odds[hit[1], hit[0]] == L_CLAMP
    fresh = _grid()
    grid_update(fresh, pose, math.pi / 3, None, 0.2)
    assert fresh.log_odds.max() == 0.0 and fresh.log_odds.min() == L_FREE
    grid_update(fresh, pose, math.pi / 3, 0.2, 0.2)
    assert fresh.log_odds.max() == 0.0


def test_grid_probability_bounds():
    grid = _grid()
    grid.log_odds[:] = L_CLAMP
    assert grid.probability().max() < 0.983
    grid.log_odds[:] = -L_CLAMP
    assert grid.probability().min() > 0.017


def test_grid_beam_leaving_bounds_is_truncated():
    grid = OccupancyGrid(5, 5, 0.02)
    grid_update(grid, Pose2D(0.05, 0.05, 0.0), 0.0, None, 1.0)
    assert (grid.log_odds[2] == L_FREE).sum() == 3


def test_clear_fraction_spares_cells_near_the_hit():
    full, cautious = _grid(), _grid()
    pose = Pose2D(0.1, 0.25, 0.0)
    grid_update(full, pose, 0.0, 0.15, 0.2)
    grid_update(cautious, pose, 0.0, 0.15, 0.2, clear_fraction=0.5)
    row = full.cell_of(0.1, 0.25)[1]
    cleared_full = (full.log_odds[row] < 0).sum()
    cleared_cautious = (cautious.log_odds[row] < 0).sum()
    assert cleared_cautious < cleared_full
    assert (cautious.log_odds[row] > 0).sum() == 1
    far = cautious.cell_of(0.1 + 0.08, 0.25)
    assert cautious.log_odds[far[1], far[0]] == 0.0


@given(st.lists(st.tuples(st.floats(0.05, 0.45), st.floats(0.05, 0.45), st.floats(-4, 4), st.one_of(st.none(), st.floats(0.01, 0.3))), max_size=20))
def test_untouched_cells_stay_unknown(beams):
    grid = _grid()
    touched = set()
    for x, y, angle, measured in beams:
        pose = Pose2D(x, y, 0.0)
        grid_update(grid, pose, angle, measured, 0.2)
        reach = measured if measured is not None and measured < 0.2 else 0.2
        end = grid.cell_of(x + reach * math.cos(angle), y + reach * math.sin(angle))
        touched.update(bresenham(*grid.cell_of(x, y), *end))
    mask = np.ones_like(grid.log_odds, dtype=bool)
    for c, r in touched:
        if grid.inside(c, r):
            mask[r, c] = False
    assert np.all(grid.log_odds[mask] == 0.0)


def test_centered_grid_puts_bounds_on_cell_centers():
    grid = OccupancyGrid.covering(0.0, 0.0, 1.2, 1.2, resolution=0.025, margin=0.04, centered=True)
    for x in (0.0, 1.2):
        c, _ = grid.cell_of(x, 0.5)
        assert grid.cell_center(c, 0)[0] == pytest.approx(x)


def test_pgm_export(tmp_path):
    grid = OccupancyGrid(3, 2, 0.05, (1.0, 2.0))
    grid.log_odds[0, 0] = 1.0
    grid.log_odds[1, 2] = -1.0
    path = tmp_path / "map.pgm"
    grid.to_pgm(path)
    img = read_pgm(path)
    assert img.tolist() == [[128, 128, 255], [0, 128, 128]]
    sidecar = path.with_suffix(".txt").read_text()
    assert "resolution 0.05" in sidecar and "origin_x 1.0" in sidecar and "origin_y 2.0" in sidecar
    (tmp_path / "bad.pgm").write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(ValueError):
        read_pgm(tmp_path / "bad.pgm")


def test_map_accuracy_counts_observed_cells_only():
    bounds = (0.0, 0.0, 0.5, 0.5)
    walls = box_segments(*bounds)
    grid = OccupancyGrid.covering(*bounds, resolution=0.025, centered=True)
    c, r = grid.cell_of(0.25, 0.0)
    grid.log_odds[r, c] = 1.0
    c, r = grid.cell_of(0.25, 0.25)
    grid.log_odds[r, c] = -1.0
    c, r = grid.cell_of(0.3, 0.3)
    grid.log_odds[r, c] = 0.5
    acc = map_accuracy(grid, walls, bounds)
    assert acc == {"wall_cells": 1, "free_cells": 2, "wall_accuracy": 1.0, "free_accuracy": 0.5}
    empty = map_accuracy(OccupancyGrid(2, 2), walls, bounds)
    assert math.isnan(empty["wall_accuracy"])


def test_coverage_metric_examples():
    bounds = (0.0, 0.0, 0.8, 1.2)
    metric = CoverageMetric(bounds, box_segments(*bounds), body_radius=0.0335)
    n = len(metric.reachable)
    assert n == 16 * 24
    coverage_metric_update(metric, Pose2D(0.42, 0.62, 0), "a")
    assert metric.fraction == 1 / n
    coverage_metric_update(metric, Pose2D(0.44, 0.64, 0), "b")
    assert metric.fraction == 1 / n
    assert metric.per_robot == {"a": {(8, 12)}, "b": {(8, 12)}}
    for c in range(16):
        for r in range(24):
            metric.update(Pose2D((c + 0.5) * 0.05, (r + 0.5) * 0.05, 0))
    assert metric.fraction == 1.0


def test_coverage_metric_excludes_unreachable_cells():
    bounds = (0.0, 0.0, 0.5, 0.5)
    walls = box_segments(*bounds)
    metric = CoverageMetric(bounds, walls, body_radius=0.2, cell=0.05)
    assert (0, 0) not in metric.reachable and (5, 5) in metric.reachable
