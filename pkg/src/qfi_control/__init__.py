"""Control pulses that maximize the quantum Fisher information of a noisy qubit.

Gradient (GRAPE) and reinforcement-learning (A3C, A3C+PPO) controllers for
estimating the frequency of a single qubit under dephasing or spontaneous
emission.
"""
__version__ = "0.1.0"

from .dynamics import (
    DensityState, Dephasing, Gaussian, PulseSchedule, Scenario, SpontaneousEmission, Square,
    augmented_generator, hamiltonian, liouvillian, propagate, step,
)
from .fisher import baseline, cramer_rao, qfi, sld
from .experiments import average_f_over_t, preset, run_sweep
from .grape import GrapeConfig, optimize
from .trainer import TrainConfig, evaluate, train
