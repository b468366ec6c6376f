"""How much does a noisy qubit tell us about its own frequency?

Propagates the probe (|0> + |1>)/sqrt(2) under H = omega0 sigma_3 / 2 with
no control, and compares the QFI with the closed forms we know:
F = t^2 without noise and F = t^2 exp(-2 gamma t) for dephasing along z.
Then prints the no-control baseline F0(T)/T for every preset.
"""
import numpy as np

from qfi_control import Dephasing, PulseSchedule, Scenario, cramer_rao, propagate
from qfi_control.experiments import PRESETS, preset
from qfi_control.fisher import baseline, trajectory_qfi

# Unitary evolution: the QFI grows like t^2 (Heisenberg-like in time).
s = Scenario(noise=Dephasing(gamma=0.0), total_time=10.0, dt=1.0)
f = trajectory_qfi(propagate(s, PulseSchedule.zeros(s)))
print("noiseless   F(t):", np.round(f[1:], 6))
print("            t^2 :", s.times()[1:] ** 2)

# Parallel dephasing: coherence decays, and F/t = t exp(-2 gamma t) peaks at
# t = 1/(2 gamma) = 5 for gamma = 0.1.
s = Scenario(noise=Dephasing(gamma=0.1), total_time=10.0, dt=1.0)
traj = propagate(s, PulseSchedule.zeros(s))
f = trajectory_qfi(traj)[1:]
t = s.times()[1:]
print("dephasing   F(t):", np.round(f, 5))
print("  closed form   :", np.round(t**2 * np.exp(-0.2 * t), 5))
print("  F(t)/t peaks at t =", t[np.argmax(f / t)])

# Every state stays a density matrix.
worst = max(max(st.violations().values()) for st in traj)
print(f"  worst trace/hermiticity/positivity violation: {worst:.1e}")

# Precision bound from 100 repetitions at t = 5.
print(f"  Cramer-Rao bound, n=100, t=5: {cramer_rao(f[4], 100):.6f}")

print("\nno-control F0(T)/T per preset")
for name in PRESETS:
    sc = preset(name)
    print(f"  {name:24s} T={sc.total_time:4g} dt={sc.dt:g}  {baseline(sc)[-1] / sc.total_time:.5f}")
