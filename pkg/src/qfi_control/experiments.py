"""Scenario presets, run configuration and the transferability protocol.

A controller designed at omega0 = 1 is deployed across a grid of omega0
values; ``run_sweep`` records F(T)/T per grid point and
``average_f_over_t`` averages it over a symmetric window around 1.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import yaml

from .dynamics import Dephasing, Gaussian, PulseSchedule, Scenario, SpontaneousEmission, Square, propagate
from .fisher import baseline, state_qfi
from .grape import GrapeConfig
from .neural import SIGMA_FLOOR
from .rl import RewardParams, rollout_batch
from .trainer import A3C, TrainConfig

PRESETS = {
    # dephasing along n(pi/4, 0)
    "dephasing-dt0.1": dict(noise=Dephasing(0.1, np.pi / 4, 0.0), dt=0.1, total_time=5.0),
    "dephasing-dt1": dict(noise=Dephasing(0.1, np.pi / 4, 0.0), dt=1.0, total_time=10.0),
    "parallel-dt0.1": dict(noise=Dephasing(0.1, 0.0, 0.0), dt=0.1, total_time=5.0),
    "parallel-dt1": dict(noise=Dephasing(0.1, 0.0, 0.0), dt=1.0, total_time=10.0),
    "transverse-dt0.1": dict(noise=Dephasing(0.1, np.pi / 2, 0.0), dt=0.1, total_time=5.0),
    "transverse-dt1": dict(noise=Dephasing(0.1, np.pi / 2, 0.0), dt=1.0, total_time=10.0),
    "emission-dt0.1": dict(noise=SpontaneousEmission(0.1, 0.0), dt=0.1, total_time=10.0),
    "emission-dt1": dict(noise=SpontaneousEmission(0.1, 0.0), dt=1.0, total_time=20.0),
    "gaussian-dephasing-dt1": dict(noise=Dephasing(0.1, np.pi / 4, 0.0), dt=1.0, total_time=10.0,
                                   shape=Gaussian()),
    "gaussian-emission-dt1": dict(noise=SpontaneousEmission(0.1, 0.0), dt=1.0, total_time=10.0,
                                  shape=Gaussian()),
}


def preset(name, **overrides):
    try:
        kwargs = dict(PRESETS[name])
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    kwargs.update(overrides)
    return Scenario(**kwargs)


# --------------------------------------------------------------------------
# config documents


def noise_to_dict(noise):
    if isinstance(noise, Dephasing):
        return {"kind": "dephasing", "gamma": noise.gamma, "vartheta": noise.vartheta, "phi": noise.phi}
    return {"kind": "emission", "gamma_plus": noise.gamma_plus, "gamma_minus": noise.gamma_minus}


def noise_from_dict(d):
    d = dict(d)
    kind = d.pop("kind", "dephasing")
    if kind == "dephasing":
        return Dephasing(**d)
    if kind in ("emission", "spontaneous_emission"):
        return SpontaneousEmission(**d)
    raise ValueError(f"unknown noise kind {kind!r}")


def shape_to_dict(shape):
    if isinstance(shape, Gaussian):
        return {"kind": "gaussian", "width": shape.width, "substeps": shape.substeps}
    return {"kind": "square"}


def shape_from_dict(d):
    d = dict(d or {})
    kind = d.pop("kind", "square")
    if kind == "square":
        return Square()
    if kind == "gaussian":
        return Gaussian(**d)
    raise ValueError(f"unknown pulse shape {kind!r}")


def scenario_to_dict(s):
    probe = np.asarray(s.probe)
    return {
        "noise": noise_to_dict(s.noise),
        "omega0": s.omega0,
        "total_time": s.total_time,
        "dt": s.dt,
        "shape": shape_to_dict(s.shape),
        "u_max": s.u_max,
        "probe": {"re": probe.real.tolist(), "im": probe.imag.tolist()},
    }


def scenario_from_dict(d, base=None):
    """Build a Scenario from a mapping, filling gaps from ``base``."""
    d = dict(d or {})
    kwargs = {} if base is None else scenario_to_dict(base)
    kwargs.update(d)
    out = dict(
        noise=noise_from_dict(kwargs["noise"]) if "noise" in kwargs else Dephasing(),
        shape=shape_from_dict(kwargs.get("shape")),
    )
    for key in ("omega0", "total_time", "dt", "u_max"):
        if key in kwargs:
            out[key] = float(kwargs[key])
    if "probe" in kwargs:
        p = kwargs["probe"]
        out["probe"] = np.array(p["re"]) + 1j * np.array(p.get("im", np.zeros((2, 2))))
    return Scenario(**out)


@dataclass
class SweepSettings:
    grid: int = 121
    trials: int = 100
    delta_omegas: list = None


@dataclass
class RunConfig:
    """Fully resolved contents of a config document."""

    scenario: Scenario
    train: TrainConfig
    grape: GrapeConfig
    sweep: SweepSettings = field(default_factory=SweepSettings)
    preset: str = None

    def to_dict(self):
        from .trainer import config_to_dict

        return {
            "preset": self.preset,
            "scenario": scenario_to_dict(self.scenario),
            "train": config_to_dict(self.train),
            "grape": vars(self.grape).copy(),
            "sweep": vars(self.sweep).copy(),
        }


_TRAIN_KEYS = {
    "n_env", "max_epochs", "algorithm", "learning_rate", "alpha", "entropy_weight", "max_grad_norm",
    "ppo_epsilon", "n_ppo", "seed", "hidden", "depth", "rms_decay", "rms_eps", "adam_betas",
    "adam_eps", "sigma_floor", "deterministic",
}


def resolve_config(doc):
    """Turn a parsed config mapping into a :class:`RunConfig`."""
    doc = copy.deepcopy(doc or {})
    unknown = set(doc) - {"preset", "scenario", "train", "grape", "sweep"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    name = doc.get("preset")
    base = preset(name) if name else None
    scenario = scenario_from_dict(doc.get("scenario"), base) if (doc.get("scenario") or base is None) else base

    t = dict(doc.get("train") or {})
    algorithm = t.pop("algorithm", A3C)
    reduced = t.pop("reduced", None)
    reward = t.pop("reward", None)
    bad = set(t) - _TRAIN_KEYS
    if bad:
        raise ValueError(f"unknown train keys: {sorted(bad)}")
    if "adam_betas" in t:
        t["adam_betas"] = tuple(t["adam_betas"])
    train = TrainConfig.table_defaults(scenario, algorithm, reduced=reduced, **t)
    if reward:
        train.reward = RewardParams(**reward)
    train.validate()

    g = dict(doc.get("grape") or {})
    g.setdefault("learning_rate", grape_learning_rate(scenario))
    grape = GrapeConfig(**g)
    sweep = SweepSettings(**(doc.get("sweep") or {}))
    return RunConfig(scenario, train, grape, sweep, name)


def grape_learning_rate(scenario, base=0.05, reference_dt=0.1):
    """Default GRAPE step for a scenario.

    The gradient of F(T) with respect to one amplitude grows with the segment
    length, so coarse schedules take a proportionally smaller step.
    """
    return base * min(1.0, reference_dt / scenario.dt)


def load_config(path):
    """Read a YAML (or JSON) config document."""
    with open(path) as fh:
        return resolve_config(yaml.safe_load(fh))


# --------------------------------------------------------------------------
# transferability sweeps


def default_grid(total_time, points=121, center=1.0):
    """Evenly spaced omega0 values covering one period 2 pi / T around ``center``."""
    half = np.pi / total_time
    return np.linspace(center - half, center + half, points)


@dataclass
class FixedPulse:
    schedule: PulseSchedule
    label: str = "grape"


@dataclass
class PolicyRollout:
    params: dict
    trials: int = 100
    seed: int = 0
    label: str = "policy"
    sigma_floor: float = SIGMA_FLOOR


@dataclass
class SweepSpec:
    omega_grid: np.ndarray
    mode: Union[FixedPulse, PolicyRollout]
    scenario: Scenario

    def __post_init__(self):
        self.omega_grid = np.asarray(self.omega_grid, dtype=float)
        if self.omega_grid.ndim != 1 or len(self.omega_grid) == 0:
            raise ValueError("omega grid must be a non-empty 1-d array")
        if np.any(np.diff(self.omega_grid) <= 0):
            raise ValueError("omega grid must be strictly increasing")


@dataclass
class SweepResult:
    omegas: np.ndarray
    f_over_t: np.ndarray
    method: str = ""

    def rows(self):
        return [(float(w), self.method, float(v)) for w, v in zip(self.omegas, self.f_over_t)]


def fixed_pulse_f_over_t(scenario, schedule):
    return state_qfi(propagate(scenario, schedule)[-1]).f / scenario.total_time


def run_sweep(spec):
    """F(T)/T at every omega0 of the grid for a fixed pulse or a policy."""
    mode = spec.mode
    values = np.empty(len(spec.omega_grid))
    if isinstance(mode, FixedPulse):
        if mode.schedule.n_steps != spec.scenario.n_steps:
            raise ValueError("schedule length does not match the scenario")
        for i, w in enumerate(spec.omega_grid):
            values[i] = fixed_pulse_f_over_t(spec.scenario.with_omega(w), mode.schedule)
    elif isinstance(mode, PolicyRollout):
        rng = np.random.default_rng(mode.seed)
        for i, w in enumerate(spec.omega_grid):
            s = spec.scenario.with_omega(w)
            noise = rng.standard_normal((mode.trials, s.n_steps, 3))
            eps = rollout_batch(s, baseline(s), mode.params, noise, sigma_floor=mode.sigma_floor)
            values[i] = max(ep.f_over_t for ep in eps)
    else:
        raise TypeError(f"unknown sweep mode {mode!r}")
    return SweepResult(spec.omega_grid.copy(), values, mode.label)


def average_f_over_t(result, delta_omega, center=1.0):
    """Mean of F(T)/T over [center - delta_omega, center + delta_omega].

    Trapezoidal rule on the grid points inside the window, with linearly
    interpolated values at the window edges.
    """
    w = np.asarray(result.omegas, dtype=float)
    v = np.asarray(result.f_over_t, dtype=float)
    lo, hi = center - delta_omega, center + delta_omega
    span_tol = 1e-12 * max(1.0, abs(center))
    if delta_omega < 0 or lo < w[0] - span_tol or hi > w[-1] + span_tol:
        raise ValueError(f"window [{lo}, {hi}] exceeds the grid span [{w[0]}, {w[-1]}]")
    lo, hi = max(lo, w[0]), min(hi, w[-1])
    if hi <= lo:
        return float(np.interp(center, w, v))
    inner = (w > lo) & (w < hi)
    xs = np.concatenate([[lo], w[inner], [hi]])
    ys = np.concatenate([[np.interp(lo, w, v)], v[inner], [np.interp(hi, w, v)]])
    return float(np.trapezoid(ys, xs) / (hi - lo))


def default_delta_omegas(result, center=1.0, points=20):
    """Window half-widths from one grid spacing up to the largest symmetric window."""
    w = np.asarray(result.omegas)
    widest = min(center - w[0], w[-1] - center)
    step = np.min(np.diff(w))
    return np.linspace(step, widest, points) if widest > step else np.array([widest])
