"""
Combiners and rate bounds
=========================

Ergodic sum-rate of MMSE, ZF and MR combining over transmit power, with the
statistical upper bound and the closed-form loose bound alongside.
"""

from linklab import ExperimentPlan, SystemConfig, run_ergodic

cfg = SystemConfig(eps_v=0.99, eps_ur=0.95, eps_ut=0.95, blocks=5, trials_per_block=400)
powers = (0, 10, 20, 30, 40)

rates = {}
for method in ("mmse", "zf", "mr"):
    rates[method] = run_ergodic(ExperimentPlan(cfg.replace(combiner=method), "rho_dbm", powers), 1)

print("rho_dbm    mmse      zf      mr   stat.bound  loose.bound")
for i, rho in enumerate(powers):
    row = rates["mmse"].rows[i]
    ub = row.ub_thm3_r + row.ub_thm3_t
    loose = row.ub_thm5_r + row.ub_thm5_t
    cols = "  ".join(f"{rates[m].rows[i].sum_rate_sim:6.3f}" for m in ("mmse", "zf", "mr"))
    print(f"{rho:7.0f}  {cols}  {ub:10.3f}  {loose:11.3f}")

# more antennas close the gap between the simulation and the statistical bound
print("\nM     sim     bound")
for m in (16, 64, 256):
    row = run_ergodic(ExperimentPlan(cfg.replace(m_ap=m), "rho_dbm", (20,)), 1).rows[0]
    print(f"{m:<4} {row.sum_rate_sim:7.3f} {row.ub_thm3_r + row.ub_thm3_t:8.3f}")
