"""Run summaries computed from the telemetry stream alone.

:func:`summarize` only reads the header record and tick records, so a
summary can be recomputed from a JSONL file and compared with the one the
run wrote (see :func:`replay`).
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .behaviors import CoverageMetric, OccupancyGrid, map_accuracy
from .geometry import Segment
from .kinematics import Pose2D
from .protocol import messages
from .protocol.budget import BandwidthBudget, fleet_capacity

BAND = 0.02  # +-2 % settling band for step metrics
UNRESOLVED_CONTACT_S = 2.0  # a contact lasting longer than this counts as unresolved


def step_metrics(times: Sequence[float], values: Sequence[float], setpoint: float, step_time: float) -> dict[str, float | None]:
    """Rise time into the +-2 % band, overshoot, and post-rise mean absolute error."""
    post = [(t - step_time, v) for t, v in zip(times, values) if t >= step_time - 1e-9]
    if not post or setpoint == 0:
        return {"rise_time_s": None, "overshoot": None, "steady_state_error": None, "steady_state_max_error": None}
    tol = BAND * abs(setpoint)
    rise = next((t for t, v in post if abs(v - setpoint) <= tol), None)
    peak = max(v * math.copysign(1.0, setpoint) for _, v in post)
    overshoot = peak / abs(setpoint) - 1.0
    settled = [abs(v - setpoint) for t, v in post if rise is not None and t >= rise]
    return {
        "rise_time_s": rise,
        "overshoot": overshoot,
        "steady_state_error": float(np.mean(settled)) if settled else None,
        "steady_state_max_error": float(np.max(settled)) if settled else None,
    }


def _walls(header: dict) -> list[Segment]:
    return [Segment(*w) for w in header["walls"]]


def replay_map(header: dict, ticks: Sequence[dict], label: str) -> OccupancyGrid:
    """Rebuild a robot's occupancy grid from its recorded odometry and IR ranges."""
    from .apps import integrate_scan

    meta = next(r for r in header["robots"] if r["id"] == label)
    m = header["metrics"]
    grid = OccupancyGrid.covering(*header["bounds"], resolution=m["map_resolution"], centered=m["map_centered"])
    for tick in ticks:
        rec = next(r for r in tick["robots"] if r["id"] == label)
        # the mapper sees ranges after the float32 laser message round trip
        ranges, _ = messages.unpack_laser(messages.pack_laser(rec["ir"], rec["ir_raw"]))
        integrate_scan(grid, Pose2D(*rec["odom_pose"]), ranges, meta["bearings"], meta["body_radius"], meta["max_range"], meta["clear_fraction"])
    return grid


def summarize(header: dict, ticks: Sequence[dict]) -> dict[str, Any]:
    robots_meta = header["robots"]
    labels = [r["id"] for r in robots_meta]
    sim_time = ticks[-1]["time"] if ticks else 0.0
    series: dict[str, list[dict]] = {label: [] for label in labels}
    times = [t["time"] for t in ticks]
    for tick in ticks:
        for rec in tick["robots"]:
            series[rec["id"]].append(rec)

    walls = _walls(header)
    coverage = CoverageMetric(tuple(header["bounds"]), walls, max(r["body_radius"] for r in robots_meta), header["metrics"]["coverage_cell"])
    fractions = []
    for tick in ticks:
        for rec in tick["robots"]:
            coverage.update(Pose2D(*rec["true_pose"]), rec["id"])
        fractions.append(coverage.fraction)
    monotone = all(b >= a for a, b in zip(fractions, fractions[1:]))

    link = header["link"]
    budget = BandwidthBudget(transport_overhead=link["transport_overhead"], link_capacity=link["link_capacity_kbps"])
    per_robot: dict[str, dict] = {}
    closure = {}
    bandwidths = []
    for meta in robots_meta:
        label = meta["id"]
        recs = series[label]
        errs = [math.dist(r["true_pose"][:2], r["odom_pose"][:2]) for r in recs]
        wire = sum(r["tx_bytes"] + budget.transport_overhead * r["tx_frames"] for r in recs)
        kbps = wire / 1024 / sim_time if sim_time > 0 else 0.0
        bandwidths.append(kbps)
        episodes = _contact_episodes(recs, header["control_hz"])
        entry = {
            "behavior": meta["behavior"],
            "closure_error_m": errs[-1] if errs else None,
            "odometry_rms_error_m": float(np.sqrt(np.mean(np.square(errs)))) if errs else None,
            "battery_remaining_mah": recs[-1]["battery_mah"] if recs else None,
            "collision_events": sum(bool(r["collision"]) for r in recs),
            "contact_episodes": len(episodes),
            "longest_contact_s": max(episodes, default=0.0),
            "unresolved_collisions": sum(e > UNRESOLVED_CONTACT_S for e in episodes),
            "visited_cells": len(coverage.per_robot.get(label, ())),
            "bandwidth_kbps": kbps,
            "final_state": recs[-1]["behavior_state"] if recs else None,
        }
        closure[label] = entry["closure_error_m"]
        if meta["behavior"] == "step" and recs:
            by_wheel = {}
            for w, name in enumerate(("left", "right")):
                est = step_metrics(times, [r["wheel_estimates"][w] for r in recs], meta["setpoint"], meta["step_time"])
                true = step_metrics(times, [r["wheel_speeds"][w] for r in recs], meta["setpoint"], meta["step_time"])
                by_wheel[name] = {**est, "true_overshoot": true["overshoot"], "true_steady_state_error": true["steady_state_error"]}
            entry["step_response"] = by_wheel
        if meta["behavior"] == "mapping" and recs:
            grid = replay_map(header, ticks, label)
            entry["map"] = _nan_to_none(map_accuracy(grid, walls, tuple(header["bounds"]), header["metrics"]["map_band"]))
        if meta["behavior"] == "sweep" and recs:
            entry["ir_ranging"] = _ranging_table(recs)
        per_robot[label] = entry

    summary: dict[str, Any] = {
        "type": "summary",
        "scenario": header["scenario"],
        "seed": header["seed"],
        "ticks": len(ticks),
        "sim_time_s": sim_time,
        "coverage_fraction": fractions[-1] if fractions else 0.0,
        "coverage_monotone": monotone,
        "collision_events": sum(r["collision_events"] for r in per_robot.values()),
        "unresolved_collisions": sum(r["unresolved_collisions"] for r in per_robot.values()),
        "closure_error_m": closure,
        "odometry_rms_error_m": float(np.sqrt(np.mean([r["odometry_rms_error_m"] ** 2 for r in per_robot.values()]))) if ticks else None,
        "bandwidth_kbps_per_robot": float(np.mean(bandwidths)) if bandwidths else 0.0,
        "robots": per_robot,
    }
    if bandwidths and max(bandwidths) > 0:
        summary["fleet_capacity"] = fleet_capacity(max(bandwidths), budget)
    steps = [e["step_response"] for e in per_robot.values() if "step_response" in e]
    if steps:
        wheels = [w for s in steps for w in s.values()]
        summary["rise_time_s"] = _worst(w["rise_time_s"] for w in wheels)
        summary["overshoot"] = _worst(w["overshoot"] for w in wheels)
        summary["steady_state_error"] = _worst(w["steady_state_error"] for w in wheels)
    flock = [m for m in robots_meta if m["behavior"] == "flocking"]
    if flock and ticks:
        summary["flocking"] = _flocking_stats(ticks[-1], [m["id"] for m in flock])
    return summary


def _contact_episodes(recs: Sequence[dict], control_hz: int) -> list[float]:
    """Durations (s) of runs of consecutive ticks with a blocked step.

    A run still open at the end of the stream is measured up to the last tick.
    """
    out, run = [], 0
    for r in recs:
        if r["collision"]:
            run += 1
        elif run:
            out.append(run / control_hz)
            run = 0
    if run:
        out.append(run / control_hz)
    return out


def _worst(values: Iterable[float | None]) -> float | None:
    vals = list(values)
    return None if any(v is None for v in vals) else max(vals)


def _nan_to_none(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}


def _ranging_table(recs: Sequence[dict]) -> dict:
    """Front-sensor ranging error binned by true distance (1 cm bins, 2-20 cm)."""
    bins: dict[int, list[float]] = {}
    for r in recs:
        truth = r["ir_true"][0]
        if truth is None or not 0.02 <= truth <= 0.20:
            continue
        bins.setdefault(int(round(truth * 100)), []).append(abs(r["ir"][0] - truth))
    table = {f"{cm}cm": float(np.mean(v)) for cm, v in sorted(bins.items())}
    worst = max((max(v) for v in bins.values()), default=None)
    return {"mean_abs_error_by_distance": table, "max_abs_error_m": worst}


def _flocking_stats(tick: dict, labels: Sequence[str]) -> dict:
    recs = [r for r in tick["robots"] if r["id"] in labels]
    headings = np.array([r["true_pose"][2] for r in recs])
    polarization = float(np.hypot(np.cos(headings).mean(), np.sin(headings).mean()))
    pts = np.array([r["true_pose"][:2] for r in recs])
    nn = []
    for i in range(len(pts)):
        d = np.hypot(*(pts - pts[i]).T)
        d[i] = np.inf
        nn.append(d.min())
    return {"polarization": polarization, "mean_nearest_neighbor_m": float(np.mean(nn)) if len(pts) > 1 else None}


def read_telemetry(path: str | Path) -> tuple[dict, list[dict], dict | None]:
    header, ticks, summary = None, [], None
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            kind = rec.get("type")
            if kind == "header":
                header = rec
            elif kind == "tick":
                ticks.append(rec)
            elif kind == "summary":
                summary = rec
    if header is None:
        raise ValueError(f"{path}: no header record")
    return header, ticks, summary


def replay(path: str | Path) -> tuple[dict, dict | None]:
    """Recompute the summary of a telemetry file; returns ``(recomputed, recorded)``."""
    header, ticks, recorded = read_telemetry(path)
    return summarize(header, ticks), recorded
