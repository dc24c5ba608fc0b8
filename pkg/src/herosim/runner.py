"""Headless scenario execution: telemetry, summary and map outputs."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .apps import MappingApp
from .behaviors import CoverageMetric
from .kinematics import Pose2D
from .metrics import summarize
from .protocol.budget import BandwidthBudget
from .scenario import Scenario, build_simulation, clear_fraction, map_settings
from .sim import InvariantViolation, Simulation

log = logging.getLogger(__name__)


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def make_header(scenario: Scenario, sim: Simulation) -> dict:
    budget = BandwidthBudget()
    robots = []
    for r, robot in zip(scenario.robots, sim.robots):
        cfg = robot.config
        b = r["behavior"]
        robots.append(
            {
                "id": cfg.label,
                "behavior": b["type"],
                "setpoint": float(b.get("setpoint", 0.0675)),
                "step_time": float(b.get("step_time", 2.7)),
                "body_radius": cfg.body_radius,
                "bearings": list(cfg.ring.bearings),
                "max_range": cfg.ir_model.max_range,
                "gyro_fusion": cfg.gyro_fusion,
                "noise": {k: getattr(cfg.noise, k) for k in ("slip_sigma", "ir_sigma", "gyro_sigma", "gyro_bias")},
                "battery_capacity": cfg.battery_capacity,
                "clear_fraction": clear_fraction(b, "behavior") if b["type"] == "mapping" else 1.0,
            }
        )
    return {
        "type": "header",
        "scenario": scenario.name,
        "seed": scenario.seed,
        "duration": scenario.duration,
        "physics_hz": scenario.physics_hz,
        "control_hz": scenario.control_hz,
        "bounds": list(scenario.bounds),
        "walls": [w.as_list() for w in sim.world.walls],
        "robots": robots,
        "metrics": map_settings(scenario.raw),
        "link": {"transport_overhead": budget.transport_overhead, "link_capacity_kbps": budget.link_capacity},
    }


@dataclass
class RunResult:
    summary: dict
    telemetry: Path
    summary_path: Path
    map_paths: list[Path]


def run_scenario(scenario: Scenario, out_dir: str | Path) -> RunResult:
    """Run to completion and write ``telemetry.jsonl``, ``summary.json`` and maps.

    Raises :class:`InvariantViolation` when a runtime invariant breaks.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim = build_simulation(scenario)
    header = make_header(scenario, sim)
    live = CoverageMetric(
        tuple(scenario.bounds),
        sim.world.walls,
        max(r.config.body_radius for r in sim.robots),
        header["metrics"]["coverage_cell"],
    )
    ticks: list[dict] = []
    telemetry = out / "telemetry.jsonl"
    last_fraction = 0.0
    with open(telemetry, "w") as fh:
        fh.write(_dumps(header) + "\n")
        for report in sim.run(scenario.duration, stop_when_done=scenario.stop_when_done):
            for r in report.robots:
                live.update(Pose2D(*r.true_pose), r.label)
            if live.fraction < last_fraction:
                raise InvariantViolation("coverage fraction decreased")
            last_fraction = live.fraction
            rec = report.to_dict()
            ticks.append(rec)
            fh.write(_dumps(rec) + "\n")
        summary = summarize(header, ticks)
        fh.write(_dumps(summary) + "\n")
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, allow_nan=False) + "\n")
    maps = []
    for robot, app in zip(sim.robots, sim.apps):
        if isinstance(app, MappingApp):
            path = out / f"map_{robot.label}.pgm"
            app.grid.to_pgm(path)
            maps.append(path)
    log.info("scenario %s: %d ticks written to %s", scenario.name, len(ticks), telemetry)
    return RunResult(summary, telemetry, summary_path, maps)
