"""Controlled single-qubit open-system dynamics.

The density matrix and its derivative with respect to the qubit frequency
``omega0`` are propagated jointly.  Every piecewise-constant segment is
advanced by the exact exponential of an 8x8 block generator acting on
``(vec rho, vec drho)``.

Vectorization is column-stacking throughout: ``vec(A @ X @ B) = kron(B.T, A) @ vec(X)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.linalg import expm

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_3 = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = np.stack([SIGMA_1, SIGMA_2, SIGMA_3])
SIGMA_PLUS = (SIGMA_1 + 1j * SIGMA_2) / 2
SIGMA_MINUS = (SIGMA_1 - 1j * SIGMA_2) / 2

U_MAX = 4.0
STATE_TOL = 1e-9


def vec(mat):
    """Column-stacking vectorization of a square matrix."""
    return np.asarray(mat).reshape(-1, order="F")


def unvec(v, dim=2):
    return np.asarray(v).reshape((dim, dim), order="F")


def plus_state():
    """Density matrix of (|0> + |1>)/sqrt(2)."""
    return 0.5 * np.ones((2, 2), dtype=complex)


# --------------------------------------------------------------------------
# noise models and pulse shapes


@dataclass(frozen=True)
class Dephasing:
    """Dephasing along the Bloch axis n(vartheta, phi) at rate gamma."""

    gamma: float = 0.1
    vartheta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError(f"dephasing rate must be >= 0, got {self.gamma}")
        if not (np.isfinite(self.vartheta) and np.isfinite(self.phi)):
            raise ValueError("dephasing angles must be finite")

    @property
    def axis(self):
        th, ph = self.vartheta, self.phi
        return np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])

    @property
    def sigma_n(self):
        return np.tensordot(self.axis, PAULIS, axes=1)


@dataclass(frozen=True)
class SpontaneousEmission:
    gamma_plus: float = 0.1
    gamma_minus: float = 0.0

    def __post_init__(self):
        if not (self.gamma_plus >= 0 and self.gamma_minus >= 0):
            raise ValueError("emission rates must be >= 0")


NoiseModel = Union[Dephasing, SpontaneousEmission]


@dataclass(frozen=True)
class Square:
    """Piecewise-constant (boxcar) pulses."""


@dataclass(frozen=True)
class Gaussian:
    """Truncated Gaussian pulse centred on each segment.

    ``width=None`` means a quarter of the segment length.  Each segment is
    resolved into ``substeps`` constant pieces sampled at their midpoints.
    """

    width: float | None = None
    substeps: int = 20

    def __post_init__(self):
        if self.width is not None and not self.width > 0:
            raise ValueError(f"gaussian width must be > 0, got {self.width}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError(f"substeps must be a positive integer, got {self.substeps}")

    def resolved_width(self, dt):
        return dt / 4 if self.width is None else self.width


PulseShape = Union[Square, Gaussian]


# --------------------------------------------------------------------------
# states, schedules, scenarios


@dataclass
class DensityState:
    rho: np.ndarray
    drho: np.ndarray
    t: float = 0.0

    def violations(self):
        """Worst deviation from the density-state invariants (0 when valid)."""
        rho, drho = self.rho, self.drho
        herm = max(np.abs(rho - rho.conj().T).max(), np.abs(drho - drho.conj().T).max())
        tr = max(abs(np.trace(rho) - 1), abs(np.trace(drho)))
        neg = max(0.0, -np.linalg.eigvalsh((rho + rho.conj().T) / 2).min())
        return {"trace": float(tr), "hermiticity": float(herm), "negativity": float(neg)}

    def is_valid(self, tol=STATE_TOL):
        return all(v <= tol for v in self.violations().values())


@dataclass
class PulseSchedule:
    """N x 3 control amplitudes applied over segments of length ``dt``."""

    amplitudes: np.ndarray
    dt: float
    shape: PulseShape = field(default_factory=Square)

    def __post_init__(self):
        self.amplitudes = np.atleast_2d(np.asarray(self.amplitudes, dtype=float))
        if self.amplitudes.ndim != 2 or self.amplitudes.shape[1] != 3 or len(self.amplitudes) < 1:
            raise ValueError(f"amplitudes must be N x 3 with N >= 1, got {self.amplitudes.shape}")

    @property
    def n_steps(self):
        return len(self.amplitudes)

    @classmethod
    def zeros(cls, scenario):
        return cls(np.zeros((scenario.n_steps, 3)), scenario.dt, scenario.shape)


@dataclass
class Scenario:
    """One estimation problem: true frequency, noise, probe and time grid."""

    noise: NoiseModel = field(default_factory=Dephasing)
    omega0: float = 1.0
    total_time: float = 5.0
    dt: float = 0.1
    shape: PulseShape = field(default_factory=Square)
    probe: np.ndarray = field(default_factory=plus_state)
    u_max: float = U_MAX

    def __post_init__(self):
        if not (self.dt > 0 and self.total_time > 0):
            raise ValueError("dt and total_time must be positive")
        n = self.total_time / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 1:
            raise ValueError(f"total_time {self.total_time} is not a multiple of dt {self.dt}")
        self.probe = np.asarray(self.probe, dtype=complex)
        if not DensityState(self.probe, np.zeros((2, 2), complex)).is_valid():
            raise ValueError("probe is not a valid density matrix")

    @property
    def n_steps(self):
        return int(round(self.total_time / self.dt))

    def times(self):
        return self.dt * np.arange(self.n_steps + 1)

    def with_omega(self, omega0):
        return Scenario(self.noise, omega0, self.total_time, self.dt, self.shape, self.probe, self.u_max)

    def initial_state(self):
        return DensityState(self.probe.copy(), np.zeros((2, 2), dtype=complex), 0.0)


# --------------------------------------------------------------------------
# generators


def hamiltonian(omega0, u):
    u = np.asarray(u, dtype=float)
    return 0.5 * omega0 * SIGMA_3 + np.tensordot(u, PAULIS, axes=1)


def commutator_super(h):
    """Superoperator of X -> -i[h, X]."""
    return -1j * (np.kron(SIGMA_0, h) - np.kron(h.T, SIGMA_0))


def _lindblad_term(c):
    cdc = c.conj().T @ c
    return np.kron(c.conj(), c) - 0.5 * (np.kron(SIGMA_0, cdc) + np.kron(cdc.T, SIGMA_0))


def dissipator(noise):
    if isinstance(noise, Dephasing):
        s = noise.sigma_n
        return 0.5 * noise.gamma * (np.kron(s.T, s) - np.eye(4))
    if isinstance(noise, SpontaneousEmission):
        # gamma_plus pairs with sigma_+ rho sigma_-, i.e. jump operator sigma_+
        return noise.gamma_plus * _lindblad_term(SIGMA_PLUS) + noise.gamma_minus * _lindblad_term(SIGMA_MINUS)
    raise TypeError(f"unknown noise model {noise!r}")


def liouvillian(h, noise):
    """4x4 generator G with d vec(rho)/dt = G vec(rho)."""
    return commutator_super(np.asarray(h, dtype=complex)) + dissipator(noise)


_SENSITIVITY_SOURCE = commutator_super(0.5 * SIGMA_3)
_CONTROL_SUPERS = np.stack([commutator_super(p) for p in PAULIS])


def augmented_generator(scenario, u):
    """8x8 generator acting on (vec rho, vec drho), block lower triangular."""
    g = liouvillian(hamiltonian(scenario.omega0, u), scenario.noise)
    out = np.zeros((8, 8), dtype=complex)
    out[:4, :4] = g
    out[4:, 4:] = g
    out[4:, :4] = _SENSITIVITY_SOURCE
    return out


def _check_amplitudes(u, u_max):
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("non-finite control amplitude")
    if np.any(np.abs(u) > u_max + 1e-12):
        raise ValueError(f"control amplitude exceeds u_max={u_max}: {u}")
    return u


def step(state, scenario, u, dt):
    """Advance (rho, drho) by ``dt`` under constant control ``u``."""
    if not (np.isfinite(dt) and dt >= 0):
        raise ValueError(f"dt must be finite and >= 0, got {dt}")
    if not (np.all(np.isfinite(state.rho)) and np.all(np.isfinite(state.drho))):
        raise ValueError("non-finite state")
    u = _check_amplitudes(u, scenario.u_max)
    x = np.concatenate([vec(state.rho), vec(state.drho)])
    x = expm(augmented_generator(scenario, u) * dt) @ x
    return DensityState(unvec(x[:4]), unvec(x[4:]), state.t + dt)


def gaussian_envelope(amplitude, center, width, segment, t):
    lo, hi = segment
    inside = (t >= lo) & (t <= hi)
    return np.where(inside, amplitude * np.exp(-(((t - center) / width) ** 2)), 0.0)


def segment_propagator(scenario, u, shape=None):
    """8x8 propagator of one control segment of length ``scenario.dt``.

    ``u`` may carry leading batch dimensions (..., 3); the result then has
    shape (..., 8, 8).
    """
    shape = scenario.shape if shape is None else shape
    u = np.asarray(u, dtype=float)
    dt = scenario.dt
    if isinstance(shape, Square):
        return expm(_batched_generator(scenario, u) * dt)
    m = shape.substeps
    h = dt / m
    mids = (np.arange(m) + 0.5) * h
    env = gaussian_envelope(1.0, dt / 2, shape.resolved_width(dt), (0.0, dt), mids)
    # (m, ..., 3) amplitudes per substep, chronological order
    us = env.reshape((m,) + (1,) * u.ndim) * u
    props = expm(_batched_generator(scenario, us) * h)
    out = props[0]
    for p in props[1:]:
        out = p @ out
    return out


def _batched_generator(scenario, u):
    u = np.asarray(u, dtype=float)
    lead = u.shape[:-1]
    flat = u.reshape(-1, 3)
    gens = np.empty((len(flat), 8, 8), dtype=complex)
    diss = dissipator(scenario.noise)
    base = commutator_super(0.5 * scenario.omega0 * SIGMA_3) + diss
    g = base + np.tensordot(flat, _CONTROL_SUPERS, axes=1)
    gens[:] = 0
    gens[:, :4, :4] = g
    gens[:, 4:, 4:] = g
    gens[:, 4:, :4] = _SENSITIVITY_SOURCE
    return gens.reshape(lead + (8, 8))


def state_vector(state):
    return np.concatenate([vec(state.rho), vec(state.drho)])


def from_vector(x, t):
    return DensityState(unvec(x[:4]), unvec(x[4:]), t)


def propagate(scenario, schedule):
    """Trajectory of DensityStates at every segment boundary (length N + 1)."""
    if schedule.n_steps != scenario.n_steps or not np.isclose(schedule.dt, scenario.dt):
        raise ValueError(
            f"schedule ({schedule.n_steps} x {schedule.dt}) does not match scenario "
            f"({scenario.n_steps} x {scenario.dt})"
        )
    if type(schedule.shape) is not type(scenario.shape):
        raise ValueError("schedule and scenario pulse shapes differ")
    amps = _check_amplitudes(schedule.amplitudes, scenario.u_max)
    props = segment_propagator(scenario, amps, schedule.shape)
    state = scenario.initial_state()
    x = state_vector(state)
    traj = [state]
    for j, p in enumerate(props):
        x = p @ x
        traj.append(from_vector(x, (j + 1) * scenario.dt))
    return traj
