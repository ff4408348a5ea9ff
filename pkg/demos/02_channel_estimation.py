"""
Channel estimation under hardware impairments
=============================================

Normalized estimation error versus transmit power for two pilot lengths, and
the penalty paid by an estimator that assumes ideal hardware.
"""

from linklab import ExperimentPlan, SystemConfig, run_ergodic, run_nmse

powers = (-10, 0, 10, 20, 30, 40)
base = SystemConfig(m_ap=50, eps_v=0.99, eps_ur=0.99, eps_ut=0.99, blocks=5, trials_per_block=200)

print("rho_dbm   K=4 theory   K=16 theory   K=16 sim")
short = run_ergodic(ExperimentPlan(base.replace(k_pilots=4), "rho_dbm", powers), 1)
long_ = run_ergodic(ExperimentPlan(base, "rho_dbm", powers), 1)
for a, b in zip(short.rows, long_.rows):
    print(f"{a.value:7.0f}   {a.nmse_theory:10.4f}   {b.nmse_theory:11.4f}   {b.nmse_sim:8.4f}")

# the error floors once distortion dominates the thermal noise
impaired = base.replace(eps_v=0.95, eps_ur=0.9, eps_ut=0.9)
rep = run_nmse(ExperimentPlan(impaired, "rho_dbm", powers), 1)
print("\nrho_dbm   aware   ignores impairments")
for a, b in zip(rep.series("rho_dbm"), rep.series("rho_dbm[ignore_hwi]")):
    print(f"{a.value:7.0f}   {a.nmse_theory:.4f}  {b.nmse_theory:.4f}")
