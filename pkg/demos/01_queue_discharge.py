"""
Queue discharge at a single approach
====================================

Nine vehicles wait at a red light.  When the light turns green they leave one
every two seconds after a two-second start-up loss, so the last one clears
the stop bar twenty seconds in.
"""

import numpy as np

from signalbench.sim import LaneState, SimConfig, Vehicle

cfg = SimConfig()

# a standing queue, bumper to bumper from the stop bar
queue = [Vehicle(i, "N", i * cfg.jam_spacing, 0.0, 0.0) for i in range(9)]
lane = LaneState("N", vehicles=queue, signal="R")

crossed = []
t = 0.0
while lane.vehicles:
    crossed += [v.stopbar_cross_time for v in lane.advance(t, cfg.sim_dt, "G", cfg)]
    t += cfg.sim_dt
print("stop-bar crossings (s):", crossed)
print("headways (s):", np.diff(crossed))

# %%
# A lone vehicle at free-flow speed covers the advance-to-stop-bar distance
# in the desired travel time used by the delay term of the reward.
veh = Vehicle(0, "W", cfg.advance_detector_pos, cfg.free_flow_speed, 0.0)
lane = LaneState("W", vehicles=[veh], signal="G")
t = 0.0
while lane.vehicles:
    lane.advance(t, cfg.sim_dt, "G", cfg)
    t += cfg.sim_dt
print(f"travel time {veh.travel_time:.2f} s, desired {cfg.desired_travel_time:.2f} s")
