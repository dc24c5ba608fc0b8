import copy
import math

import pytest

from herosim.apps import CoverageApp, MappingApp, StepApp
from herosim.config import loads_toml
from herosim.scenario import (
    ScenarioError,
    build_simulation,
    bundled_scenarios,
    clear_fraction,
    load_scenario,
    parse_scenario,
)

BASE = loads_toml(
    """
name = "t"
seed = 3
duration = 1.0
[arena]
bounds = [0.0, 0.0, 1.0, 1.0]
[behavior]
type = "step"
[[robots]]
pose = [0.5, 0.5, 0.0]
"""
)


def _with(**changes):
    raw = copy.deepcopy(BASE)
    for key, value in changes.items():
        section, _, leaf = key.partition("__")
        if leaf:
            raw.setdefault(section, {})[leaf] = value
        else:
            raw[section] = value
    return raw


def test_bundled_scenarios_load_and_build():
    names = bundled_scenarios()
    assert names == [
        "coverage_5robots",
        "flocking_5robots",
        "ir_sweep",
        "mapping_hall",
        "rectangle_odometry",
        "step_response",
    ]
    for name in names:
        scenario = load_scenario(name)
        sim = build_simulation(scenario)
        assert len(sim.robots) == len(scenario.robots) > 0


def test_paper_shaped_scenarios():
    rect = load_scenario("rectangle_odometry")
    assert {r["label"] for r in rect.robots} == {"noise_off", "slip", "slip_gyro"}
    route = rect.robots[0]["behavior"]["waypoints"]
    assert route == [[0, 0], [1.3, 0], [1.3, 1.1], [0, 1.1]]
    assert load_scenario("coverage_5robots").bounds == (0.0, 0.0, 0.8, 1.2)
    assert load_scenario("mapping_hall").bounds == (0.0, 0.0, 1.2, 1.2)
    assert isinstance(build_simulation(load_scenario("step_response")).apps[0], StepApp)


def test_overrides():
    s = load_scenario("step_response", seed=9, duration=2.5)
    assert (s.seed, s.duration) == (9, 2.5)


@pytest.mark.parametrize(
    "raw,field",
    [
        (_with(rates={"physics_hz": 30, "control_hz": 20}), "rates"),
        (_with(rates={"control_hz": 0}), "rates.control_hz"),
        (_with(duration=-1), "scenario.duration"),
        (_with(seed=-2), "seed"),
        (_with(arena={"bounds": [0, 0, 1]}), "arena.bounds"),
        (_with(arena={"bounds": [1, 0, 0, 1]}), "arena.bounds"),
        (_with(behavior={"type": "dance"}), "robots[0].behavior.type"),
        (_with(robots=[{"pose": [0.5, 0.5]}]), "robots[0].pose"),
        (_with(robots=[{"pose": [0.5, 0.5, 0.0], "plant_tau": 0}]), "robots[0].plant_tau"),
        (_with(robots=[{"pose": [0.5, 0.5, 0.0], "noise": {"slip_sigma": "big"}}]), "robots[0].noise.slip_sigma"),
        (_with(robots=[{"pose": [0.5, 0.5, 0.0], "ir": {"beta": 5000}}]), "robots[0]"),
        (_with(spawn={"count": 2}), "spawn"),
    ],
)
def test_invalid_scenarios_name_the_field(raw, field):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(raw)
    assert info.value.field == field


def test_missing_sections():
    raw = copy.deepcopy(BASE)
    del raw["robots"]
    with pytest.raises(ScenarioError, match="no robots"):
        parse_scenario(raw)
    raw = copy.deepcopy(BASE)
    del raw["arena"]
    with pytest.raises(ScenarioError, match="arena"):
        parse_scenario(raw)
    with pytest.raises(ScenarioError, match="no scenario file"):
        load_scenario("does_not_exist")


def test_overlapping_spawns_rejected_at_build():
    raw = _with(robots=[{"pose": [0.5, 0.5, 0.0]}, {"pose": [0.52, 0.5, 0.0]}])
    with pytest.raises(ScenarioError, match="overlaps"):
        build_simulation(parse_scenario(raw))


def test_random_spawns_are_seeded_and_clear():
    raw = copy.deepcopy(BASE)
    del raw["robots"]
    raw["spawn"] = {"count": 5, "margin": 0.02}
    raw["behavior"] = {"type": "coverage"}
    a, b, c = parse_scenario(raw), parse_scenario(raw), parse_scenario(raw, seed=4)
    assert [r["pose"] for r in a.robots] == [r["pose"] for r in b.robots]
    assert [r["pose"] for r in a.robots] != [r["pose"] for r in c.robots]
    sim = build_simulation(a)
    assert all(isinstance(app, CoverageApp) for app in sim.apps)
    assert sim.overlaps() == 0
    raw["spawn"] = {"count": 400}
    with pytest.raises(ScenarioError, match="could not place"):
        parse_scenario(raw)


def test_clear_fraction():
    assert clear_fraction({}, "b") == 1.0
    assert clear_fraction({"max_incidence_deg": 60}, "b") == pytest.approx(math.sqrt(0.5))
    with pytest.raises(ScenarioError):
        clear_fraction({"max_incidence_deg": 90}, "b")


def test_mapping_app_gets_centered_grid():
    sim = build_simulation(load_scenario("mapping_hall"))
    app = sim.apps[0]
    assert isinstance(app, MappingApp)
    assert app.grid.resolution == 0.025
    assert app.clear_fraction == pytest.approx(math.sqrt(0.5))
