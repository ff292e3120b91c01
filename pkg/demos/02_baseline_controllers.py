"""
Pre-timed versus actuated control
=================================

Both baselines run the evening peak (three stitched hourly demand rows).  The
pre-timed plan always gives each group the full 60 s; the actuated one gaps
out when the green approaches empty and rests in green when nobody waits on
red.  We compare queues and the max-out countdown recorded at every green
termination.
"""

import numpy as np

from signalbench.demand import scenario_demand
from signalbench.experiments import ScenarioSpec, maxout_histogram, moving_average, run_scenario

demand, duration = scenario_demand("evening")
print("evening demand (veh/h per approach N, S, W, E):")
for start, rates in demand.entries:
    print(f"  from {start:5.0f} s: {rates}")

records = {c: run_scenario(ScenarioSpec("evening", demand, c, duration, seed=0))
           for c in ("pretimed", "actuated")}

for name, rec in records.items():
    print(f"\n{name}: mean queue NS {rec.queue_ns.mean():.2f}, WE {rec.queue_we.mean():.2f}")
    smooth = moving_average(rec.queue_total, 300)
    print("  5-minute average total queue, hourly:", np.round(smooth[3599::3600], 2))
    busy = [(lo, hi, n) for lo, hi, n in maxout_histogram(rec.countdowns) if n]
    print("  countdown histogram (non-empty bins):", busy)
