"""
Rate ceilings and transmission protocols
========================================

User-side distortion caps each user's rate no matter how much power or how
many antennas are used. The second half compares simultaneous transmission
with a half-time, one-user-at-a-time protocol.
"""

from linklab import ExperimentPlan, SystemConfig, run_ergodic, ts_protocol_rate
from linklab.beamforming import scaling_helpers

cfg = SystemConfig(eps_ur=0.9, eps_ut=0.9, blocks=5, trials_per_block=400)
helpers = scaling_helpers(cfg.profile, cfg.m_ap)
print(f"ceiling per user {helpers.ue_saturation.r:.3f}, sum {helpers.sum_saturation:.3f} bits/s/Hz")

rep = run_ergodic(ExperimentPlan(cfg, "rho_dbm", (0, 20, 40, 60)), 1)
for row in rep.rows:
    print(f"rho={row.value:4.0f} dBm  sum-rate {row.sum_rate_sim:.3f}")

ideal = SystemConfig(blocks=5, trials_per_block=400)
plan = ExperimentPlan(ideal, "rho_dbm", (0, 20, 40))
ms = run_ergodic(plan, 1)
ts = ts_protocol_rate(plan, 1)
print("\nrho_dbm   simultaneous   time-shared   ratio")
for a, b in zip(ms.rows, ts.rows):
    print(f"{a.value:7.0f}   {a.sum_rate_sim:12.3f}   {b.sum_rate_sim:11.3f}   {a.sum_rate_sim / b.sum_rate_sim:5.2f}")
