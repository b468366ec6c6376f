"""Train the actor-critic controller for a few hundred episodes.

Eight workers share one network.  Plain A3C uses the shared RMSProp
statistics; the PPO variant replays each episode several times against the
frozen sampling policy with a per-worker Adam.  Both runs are deterministic
(round-robin scheduling), so the numbers below are reproducible.
"""
import numpy as np

from qfi_control import TrainConfig, evaluate, preset, train
from qfi_control.fisher import baseline

s = preset("dephasing-dt1")
f0 = baseline(s)[-1] / s.total_time
print(f"no control F0(T)/T = {f0:.4f}")

for algorithm, epochs in (("a3c", 800), ("a3c_ppo", 300)):
    cfg = TrainConfig.table_defaults(s, algorithm, reduced=False, n_env=8, max_epochs=epochs,
                                     seed=1, deterministic=True)
    rep = train(cfg)
    curve = rep.curve_array()
    smooth = np.convolve(curve, np.ones(50) / 50, mode="valid")
    print(f"\n{algorithm}: {rep.epochs_run} episodes, {rep.updates} updates, "
          f"largest applied gradient norm {rep.max_applied_norm:.2f}")
    print("  50-episode mean F(T)/T:", np.round(smooth[::100], 3))
    print(f"  best episode F(T)/T = {rep.best_metric:.4f}")
    sched, best = evaluate(rep.final_params, s, trials=100, seed=0)
    print(f"  best of 100 rollouts from the final network: {best:.4f}")
    print("  its first three segments:\n", np.round(sched.amplitudes[:3], 3))
