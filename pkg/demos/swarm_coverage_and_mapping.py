"""
Coverage and mapping
====================

Five robots wander a small arena, turning away from whatever their IR
ring sees. A second run drives one robot around a hall and builds a
log-odds occupancy grid from its ranges, drawn here as text.
"""
import tempfile

import numpy as np

from herosim.metrics import read_telemetry, replay_map
from herosim.runner import run_scenario
from herosim.scenario import load_scenario

out = tempfile.mkdtemp(prefix="herosim-swarm-")
cov = run_scenario(load_scenario("coverage_5robots"), f"{out}/coverage").summary
print(f"coverage after {cov['sim_time_s']:.0f} s: {cov['coverage_fraction'] * 100:.1f} % of reachable cells")
for label, r in cov["robots"].items():
    print(f"  {label}: {r['visited_cells']} cells, {r['contact_episodes']} wall contacts, "
          f"longest {r['longest_contact_s']:.2f} s")

res = run_scenario(load_scenario("mapping_hall"), f"{out}/mapping")
header, ticks, _ = read_telemetry(res.telemetry)
label = header["robots"][0]["id"]
grid = replay_map(header, ticks, label)
chars = np.full(grid.log_odds.shape, " ")
chars[grid.log_odds < 0] = "."
chars[grid.log_odds > 0] = "#"
print()
for row in chars[::-2]:  # every other row, top first
    print("".join(row))
acc = res.summary["robots"][label]["map"]
print(f"\nwall accuracy {acc['wall_accuracy']:.3f}, free accuracy {acc['free_accuracy']:.3f}; map at {res.map_paths[0]}")
