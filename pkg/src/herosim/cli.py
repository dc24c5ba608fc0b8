"""Command line entry point: ``herosim run | budget | calibrate``.

Exit codes: 0 success, 2 configuration or input error, 3 runtime failure
(invariant violation during a run, or a calibration that cannot be fitted).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .protocol.budget import BandwidthBudget, fleet_capacity, load_registry, per_robot_total, topic_load
from .scenario import ScenarioError, bundled_scenarios, load_scenario
from .sensing import CalibrationError, ir_calibrate, ir_invert, load_calibration_samples

log = logging.getLogger("herosim")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def cmd_run(args: argparse.Namespace) -> int:
    from .runner import run_scenario
    from .sim import InvariantViolation

    try:
        scenario = load_scenario(args.scenario, seed=args.seed, duration=args.duration)
    except ScenarioError as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else Path("runs") / scenario.name
    try:
        result = run_scenario(scenario, out)
    except ScenarioError as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"error: invariant violated: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    s = result.summary
    print(f"scenario {s['scenario']} seed {s['seed']}: {s['ticks']} ticks, {s['sim_time_s']:.2f} s simulated")
    for key in ("rise_time_s", "overshoot", "steady_state_error", "coverage_fraction", "fleet_capacity"):
        if s.get(key) is not None:
            print(f"  {key}: {s[key]:.6g}")
    for label, err in s["closure_error_m"].items():
        print(f"  closure_error_m[{label}]: {err:.6g}")
    print(f"telemetry: {result.telemetry}")
    print(f"summary:   {result.summary_path}")
    for path in result.map_paths:
        print(f"map:       {path}")
    return EXIT_OK


def cmd_budget(args: argparse.Namespace) -> int:
    try:
        topics = load_registry(args.topics)
        budget = BandwidthBudget(link_capacity=args.capacity)
    except (OSError, ValueError) as exc:  # RegistryError, TOML errors
        print(f"error: malformed topic registry: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{'topic':<16}{'id':>4}{'packet KB':>12}{'rate Hz':>10}{'KBps':>10}")
    for t in topics:
        print(f"{t.name:<16}{t.topic_id:>4}{t.packet_size:>12.4f}{t.nominal_rate:>10.3g}{topic_load(t):>10.4g}")
    total = per_robot_total(topics)
    print(f"per-robot total: {total:.2f} KBps")
    if topics and total > 0:
        print(f"link capacity:   {budget.link_capacity:.2f} KBps")
        print(f"fleet capacity:  {fleet_capacity(total, budget)} robots")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    try:
        samples = load_calibration_samples(args.samples)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read samples: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cal = ir_calibrate(samples, max_range=args.max_range)
    except CalibrationError as exc:
        print(f"error: calibration failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"alpha: {cal.alpha:.9g} ADC*m^2")
    print(f"beta:  {cal.beta:.9g} ADC")
    print(f"residual RMS: {cal.residual_rms:.6g} ADC over {cal.n_samples} samples")
    print(f"{'distance cm':>12}{'reading':>10}{'inverted cm':>13}{'error mm':>10}")
    for distance, reading in samples:
        if 0.02 - 1e-9 <= distance <= 0.20 + 1e-9:
            x = ir_invert(cal.model, reading)
            print(f"{distance * 100:>12.1f}{reading:>10.0f}{x * 100:>13.2f}{abs(x - distance) * 1000:>10.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="herosim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario headless and write telemetry")
    run.add_argument("scenario", help=f"scenario file, or a bundled name: {', '.join(bundled_scenarios())}")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--duration", type=float, default=None, help="override the simulated duration (s)")
    run.add_argument("--out", default=None, help="output directory (default runs/<name>)")
    run.set_defaults(func=cmd_run)

    budget = sub.add_parser("budget", help="bandwidth tally for a topic registry")
    budget.add_argument("topics", help="TOML file with [[topic]] tables")
    budget.add_argument("--capacity", type=float, default=BandwidthBudget().link_capacity, help="link capacity in KBps")
    budget.set_defaults(func=cmd_budget)

    cal = sub.add_parser("calibrate", help="fit the IR model to a distance/reading sweep")
    cal.add_argument("samples", help="two-column text file: distance_m reading_adc")
    cal.add_argument("--max-range", type=float, default=0.20, help="sensor range cap (m)")
    cal.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("HEROSIM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
