"""Design at omega0 = 1, deploy elsewhere.

GRAPE pulses are optimal for the frequency they were designed for; a policy
network instead reacts to the state it sees, so it can adapt when the true
omega0 differs.  This sweeps omega0 over one period 2 pi / T around 1 and
prints the window average <F(T)/T> over [1 - d, 1 + d] for each method.
The policy here is briefly trained, so expect it to sit between the two.
"""
import numpy as np

from qfi_control import GrapeConfig, PulseSchedule, TrainConfig, optimize, preset, train
from qfi_control.experiments import FixedPulse, PolicyRollout, SweepSpec, average_f_over_t, default_grid, run_sweep

s = preset("dephasing-dt1")
grid = default_grid(s.total_time, points=41)

grape = optimize(s, GrapeConfig(learning_rate=0.005, iterations=150))
cfg = TrainConfig.table_defaults(s, "a3c_ppo", reduced=False, n_env=8, max_epochs=300, seed=0,
                                 deterministic=True)
policy = train(cfg).final_params

sweeps = [
    run_sweep(SweepSpec(grid, FixedPulse(PulseSchedule.zeros(s), "no control"), s)),
    run_sweep(SweepSpec(grid, FixedPulse(grape.schedule, "GRAPE"), s)),
    run_sweep(SweepSpec(grid, PolicyRollout(policy, trials=30, seed=0, label="policy"), s)),
]

print("omega0  " + "  ".join(f"{r.method:>10s}" for r in sweeps))
for i in range(0, len(grid), 5):
    print(f"{grid[i]:6.3f}  " + "  ".join(f"{r.f_over_t[i]:10.4f}" for r in sweeps))

print("\n  d     " + "  ".join(f"{r.method:>10s}" for r in sweeps))
for d in np.linspace(0.05, np.pi / s.total_time, 6):
    print(f"{d:5.3f}   " + "  ".join(f"{average_f_over_t(r, d):10.4f}" for r in sweeps))
