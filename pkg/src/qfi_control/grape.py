"""Gradient ascent pulse engineering on the terminal QFI F(T)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dynamics import PulseSchedule, Square, from_vector, segment_propagator, state_vector
from .fisher import QfiValue, state_qfi

logger = logging.getLogger(__name__)


@dataclass
class GrapeConfig:
    learning_rate: float = 0.05
    iterations: int = 500
    fd_step: float = 1e-5
    seed: int = 0
    init_scale: float = 0.1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be > 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


@dataclass
class GrapeResult:
    schedule: PulseSchedule
    qfi_history: np.ndarray
    final_qfi: QfiValue
    best_iteration: int = 0
    config: GrapeConfig = field(default_factory=GrapeConfig)


def _final_qfi_from_props(scenario, props):
    x = state_vector(scenario.initial_state())
    for p in props:
        x = p @ x
    return state_qfi(from_vector(x, scenario.total_time)).f


def terminal_qfi(scenario, amplitudes):
    """F(T) for an N x 3 amplitude array (no bound check, used by GRAPE)."""
    return _final_qfi_from_props(scenario, segment_propagator(scenario, amplitudes))


def qfi_gradient(scenario, schedule, h=1e-5):
    """Central finite-difference gradient dF(T)/du_k^(j), shape N x 3."""
    if not h > 0:
        raise ValueError(f"finite-difference step must be > 0, got {h}")
    if not isinstance(schedule.shape, Square):
        raise ValueError("GRAPE gradients are defined for square pulses only")
    amps = np.asarray(schedule.amplitudes, dtype=float)
    n = len(amps)
    props = segment_propagator(scenario, amps)

    # prefix[j]: state vector entering segment j; suffix[j]: product of props j+1..N-1
    prefix = np.empty((n, 8), dtype=complex)
    x = state_vector(scenario.initial_state())
    for j in range(n):
        prefix[j] = x
        x = props[j] @ x
    suffix = np.empty((n, 8, 8), dtype=complex)
    acc = np.eye(8, dtype=complex)
    for j in range(n - 1, -1, -1):
        suffix[j] = acc
        acc = acc @ props[j]

    shifts = np.stack([h * np.eye(3), -h * np.eye(3)], axis=1)  # (k, sign, 3)
    perturbed = amps[:, None, None, :] + shifts[None]  # (n, k, sign, 3)
    pprops = segment_propagator(scenario, perturbed)
    finals = np.einsum("jab,jksbc,jc->jksa", suffix, pprops, prefix)

    grad = np.empty((n, 3))
    for j in range(n):
        for k in range(3):
            fp = state_qfi(from_vector(finals[j, k, 0], scenario.total_time)).f
            fm = state_qfi(from_vector(finals[j, k, 1], scenario.total_time)).f
            grad[j, k] = (fp - fm) / (2 * h)
    return grad


def optimize(scenario, config=None):
    """Fixed-step gradient ascent with amplitude clipping and best-iterate tracking."""
    config = GrapeConfig() if config is None else config
    if not isinstance(scenario.shape, Square):
        raise ValueError("GRAPE is only available for square pulses")
    rng = np.random.default_rng(config.seed)
    u_max = scenario.u_max
    amps = rng.uniform(-config.init_scale, config.init_scale, size=(scenario.n_steps, 3))
    amps = np.clip(amps, -u_max, u_max)

    f = terminal_qfi(scenario, amps)
    history = [f]
    best_f, best_amps, best_it = f, amps.copy(), 0
    for it in range(1, config.iterations + 1):
        grad = qfi_gradient(scenario, PulseSchedule(amps, scenario.dt), config.fd_step)
        amps = np.clip(amps + config.learning_rate * grad, -u_max, u_max)
        f = terminal_qfi(scenario, amps)
        history.append(f)
        if f > best_f:
            best_f, best_amps, best_it = f, amps.copy(), it
        if it % 100 == 0:
            logger.info("grape iteration %d: F(T)=%.6g best=%.6g", it, f, best_f)

    return GrapeResult(
        schedule=PulseSchedule(best_amps, scenario.dt),
        qfi_history=np.array(history),
        final_qfi=QfiValue(best_f, scenario.total_time),
        best_iteration=best_it,
        config=config,
    )
