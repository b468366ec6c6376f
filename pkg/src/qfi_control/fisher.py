"""Symmetric logarithmic derivative and quantum Fisher information."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import PulseSchedule, propagate

EIG_TOL = 1e-12
F0_FLOOR = 1e-12
_HERM_TOL = 1e-8


@dataclass(frozen=True)
class QfiValue:
    f: float
    t: float = 0.0

    def __post_init__(self):
        if self.f < 0:
            raise ValueError(f"QFI must be non-negative, got {self.f}")

    def __float__(self):
        return self.f


def _check_hermitian(m, name):
    m = np.asarray(m, dtype=complex)
    if np.abs(m - m.conj().T).max() > _HERM_TOL * max(1.0, np.abs(m).max()):
        raise ValueError(f"{name} is not Hermitian")
    return m


def _eigen_terms(rho, drho, tol):
    rho = _check_hermitian(rho, "rho")
    drho = _check_hermitian(drho, "drho")
    lam, vecs = np.linalg.eigh(rho)
    d = vecs.conj().T @ drho @ vecs
    lsum = lam[:, None] + lam[None, :]
    keep = lsum > tol
    return vecs, d, lsum, keep


def sld(rho, drho, tol=EIG_TOL):
    """Solve rho L + L rho = 2 drho in the eigenbasis of rho.

    Matrix elements whose eigenvalue sum falls below ``tol`` are set to zero.
    """
    vecs, d, lsum, keep = _eigen_terms(rho, drho, tol)
    lmat = np.zeros_like(d)
    lmat[keep] = 2 * d[keep] / lsum[keep]
    return vecs @ lmat @ vecs.conj().T


def qfi(rho, drho, tol=EIG_TOL, t=0.0):
    """Tr[rho L^2] via the eigen-sum  sum_ij 2 |<i|drho|j>|^2 / (l_i + l_j)."""
    _, d, lsum, keep = _eigen_terms(rho, drho, tol)
    f = float(np.sum(2 * np.abs(d[keep]) ** 2 / lsum[keep]))
    return QfiValue(max(f, 0.0), t)


def qfi_batch(rhos, drhos, tol=EIG_TOL):
    """Eigen-sum QFI for stacks of density matrices (..., 2, 2)."""
    lam, vecs = np.linalg.eigh(rhos)
    d = np.swapaxes(vecs.conj(), -1, -2) @ drhos @ vecs
    lsum = lam[..., :, None] + lam[..., None, :]
    keep = lsum > tol
    terms = np.where(keep, 2 * np.abs(d) ** 2 / np.where(keep, lsum, 1.0), 0.0)
    return np.maximum(terms.sum(axis=(-1, -2)), 0.0)


def state_qfi(state, tol=EIG_TOL):
    return qfi(state.rho, state.drho, tol, state.t)


def cramer_rao(f, n=1):
    """Lower bound 1/sqrt(n F) on the standard deviation of an unbiased estimate."""
    f = float(f)
    if not f > 0:
        raise ValueError(f"Cramer-Rao bound undefined for QFI {f}")
    if n < 1:
        raise ValueError("need at least one repetition")
    return 1.0 / np.sqrt(n * f)


def trajectory_qfi(trajectory):
    """QFI at every state of a propagated trajectory."""
    return np.array([state_qfi(s).f for s in trajectory])


def baseline(scenario):
    """No-control QFI F0(j) at the segment boundaries j = 1..N."""
    return trajectory_qfi(propagate(scenario, PulseSchedule.zeros(scenario)))[1:]
