"""
Wheel speed control on the simulated plant
==========================================

The robot drives each wheel through a first-order motor lag. A PID loop
runs on Kalman-filtered encoder velocity at 20 Hz. This walk-through runs
the bundled step test and prints the measured response next to its
summary numbers.
"""
import tempfile

from herosim.metrics import read_telemetry
from herosim.runner import run_scenario
from herosim.scenario import load_scenario

scenario = load_scenario("step_response")
out = tempfile.mkdtemp(prefix="herosim-step-")
result = run_scenario(scenario, out)
header, ticks, summary = read_telemetry(result.telemetry)

# A coarse text plot of the left wheel estimate, one row every 0.25 s.
setpoint = header["robots"][0]["setpoint"]
print(f"left wheel estimate vs setpoint {setpoint} m/s")
for tick in ticks[::5]:
    v = tick["robots"][0]["wheel_estimates"][0]
    bar = "#" * max(0, int(round(40 * v / setpoint)))
    print(f"{tick['time']:5.2f} s {v:7.4f} |{bar}")

print()
print(f"rise time          {summary['rise_time_s']:.2f} s")
print(f"overshoot          {summary['overshoot'] * 100:.2f} %")
print(f"steady-state MAE   {summary['steady_state_error']:.5f} m/s")
print(f"telemetry written to {result.telemetry}")
