"""Asynchronous advantage actor-critic training, with an optional PPO inner loop.

Workers share one global parameter dict.  Each worker snapshots it, runs an
episode, computes a full-episode gradient, clips it and applies it back.
Updates are atomic per parameter block; stale gradients are expected.

Two schedulers exist:

* threaded: one thread per worker, truly asynchronous;
* deterministic: the workers run round-robin in the calling thread.  In each
  round every worker snapshots the same global parameters and rolls out, then
  the updates are applied in worker order, so gradients are as stale as in a
  real asynchronous run but the result is bit-reproducible.
"""
from __future__ import annotations

import json
import logging
import struct
import threading
import time
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from . import neural
from .dynamics import PulseSchedule, Scenario
from .fisher import baseline
from .rl import RewardParams, a3c_loss, ppo_loss, rollout, rollout_batch

logger = logging.getLogger(__name__)

A3C = "a3c"
A3C_PPO = "a3c_ppo"


@dataclass
class TrainConfig:
    scenario: Scenario = field(default_factory=Scenario)
    n_env: int = 8
    max_epochs: int = 5000
    algorithm: str = A3C
    learning_rate: float = 1e-5
    alpha: float = 0.99
    entropy_weight: float = 1e-4
    max_grad_norm: float = 40.0
    reward: RewardParams = field(default_factory=RewardParams)
    ppo_epsilon: float = 0.12
    n_ppo: int = 10
    seed: int = 0
    hidden: int = 200
    depth: int = 4
    rms_decay: float = 0.99
    rms_eps: float = 1e-8
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    sigma_floor: float = neural.SIGMA_FLOOR
    deterministic: bool = False

    def validate(self):
        problems = []
        if self.n_env < 1:
            problems.append("n_env must be >= 1")
        if self.max_epochs < 0:
            problems.append("max_epochs must be >= 0")
        if self.algorithm not in (A3C, A3C_PPO):
            problems.append(f"unknown algorithm {self.algorithm!r}")
        if not self.learning_rate > 0:
            problems.append("learning_rate must be > 0")
        if not 0 < self.alpha <= 1:
            problems.append("alpha must lie in (0, 1]")
        if self.entropy_weight < 0:
            problems.append("entropy_weight must be >= 0")
        if not self.max_grad_norm > 0:
            problems.append("max_grad_norm must be > 0")
        if self.algorithm == A3C_PPO and not (0 < self.ppo_epsilon < 1 and self.n_ppo >= 1):
            problems.append("PPO needs 0 < epsilon < 1 and n_ppo >= 1")
        if problems:
            raise ValueError("invalid training config: " + "; ".join(problems))
        return self

    @classmethod
    def table_defaults(cls, scenario, algorithm=A3C, reduced=None, **overrides):
        """Hyper-parameters of the matching column of the reference table.

        ``reduced`` (default: ``scenario.dt >= 1``) applies the large-step
        adjustments: learning rate and entropy weight halved, gradient norm
        capped at 20 and five PPO steps.
        """
        if algorithm == A3C:
            hyper = dict(learning_rate=1e-5, alpha=0.99, entropy_weight=1e-4)
        elif algorithm == A3C_PPO:
            hyper = dict(learning_rate=2e-4, alpha=0.9, entropy_weight=1e-3, ppo_epsilon=0.12, n_ppo=10)
        else:
            raise ValueError(f"unknown algorithm {algorithm!r}")
        if reduced is None:
            reduced = scenario.dt >= 1
        if reduced:
            hyper["learning_rate"] /= 2
            hyper["entropy_weight"] /= 2
            hyper["max_grad_norm"] = 20.0
            if algorithm == A3C_PPO:
                hyper["n_ppo"] = 5
        hyper.update(overrides)
        return cls(scenario=scenario, algorithm=algorithm, **hyper)


@dataclass
class CurvePoint:
    epoch: int
    worker: int
    f_over_t: float
    wall_clock_s: float


@dataclass
class TrainReport:
    learning_curve: list
    best_params: dict
    best_metric: float
    best_schedule: PulseSchedule
    epochs_run: int
    updates: int = 0
    max_applied_norm: float = 0.0
    final_params: dict = None
    optimizer: object = None

    def curve_array(self):
        return np.array([p.f_over_t for p in self.learning_curve])

    def write_curve_csv(self, path):
        with open(path, "w") as fh:
            fh.write("epoch,worker,f_over_t,wall_clock_s\n")
            for p in self.learning_curve:
                fh.write(f"{p.epoch},{p.worker},{p.f_over_t!r},{p.wall_clock_s:.6f}\n")


class _Shared:
    """Global parameters, shared optimizer statistics and counters."""

    def __init__(self, params, config):
        self.params = params
        self.locks = {k: threading.Lock() for k in params}
        self.rms = neural.RmsProp(params, config.learning_rate, config.rms_decay, config.rms_eps)
        self.counter_lock = threading.Lock()
        self.started = 0
        self.curve = []
        self.best_metric = -np.inf
        self.best_params = None
        self.best_schedule = None
        self.updates = 0
        self.max_applied_norm = 0.0

    def snapshot(self):
        out = {}
        for k, v in self.params.items():
            with self.locks[k]:
                out[k] = v.copy()
        return out

    def claim_episode(self, max_epochs):
        with self.counter_lock:
            if self.started >= max_epochs:
                return False
            self.started += 1
            return True

    def record(self, worker, episode, snapshot, t0, dt):
        with self.counter_lock:
            metric = episode.f_over_t
            self.curve.append(CurvePoint(len(self.curve) + 1, worker, metric, time.perf_counter() - t0))
            if metric > self.best_metric:
                self.best_metric = metric
                self.best_params = snapshot
                self.best_schedule = PulseSchedule(episode.controls.copy(), dt)


class _Worker:
    def __init__(self, wid, config, shared, seed_seq, f0):
        self.wid = wid
        self.config = config
        self.shared = shared
        self.rng = np.random.default_rng(seed_seq)
        self.f0 = f0
        if config.algorithm == A3C_PPO:
            b1, b2 = config.adam_betas
            self.adam = neural.Adam(shared.params, config.learning_rate, b1, b2, config.adam_eps)

    def act(self):
        theta = self.shared.snapshot()
        cfg = self.config
        ep = rollout(cfg.scenario, self.f0, theta, cfg.reward, self.rng, sigma_floor=cfg.sigma_floor)
        return theta, ep

    def _apply(self, grads):
        norm = neural.global_norm(grads)
        if norm > self.config.max_grad_norm:
            scale = self.config.max_grad_norm / norm
            grads = {k: g * scale for k, g in grads.items()}
            norm = neural.global_norm(grads)
        if self.config.algorithm == A3C:
            self.shared.rms.apply(self.shared.params, grads, self.shared.locks)
        else:
            self.adam.apply(self.shared.params, grads, self.shared.locks)
        with self.shared.counter_lock:
            self.shared.updates += 1
            self.shared.max_applied_norm = max(self.shared.max_applied_norm, norm)

    def learn(self, theta, ep):
        cfg = self.config
        if cfg.algorithm == A3C:
            res = a3c_loss(ep, theta, cfg.alpha, cfg.entropy_weight, sigma_floor=cfg.sigma_floor)
            self._apply(res.grads)
            return
        old, _ = neural.forward(theta, ep.states[:-1], cfg.sigma_floor)
        logp_old = neural.gaussian_logpdf(ep.actions, old.mu, old.sigma)
        for _ in range(cfg.n_ppo):
            current = self.shared.snapshot()
            res = ppo_loss(ep, current, theta, cfg.ppo_epsilon, cfg.alpha, cfg.entropy_weight,
                           sigma_floor=cfg.sigma_floor, logp_old=logp_old)
            self._apply(res.grads)

    def run(self, t0):
        while self.shared.claim_episode(self.config.max_epochs):
            theta, ep = self.act()
            self.learn(theta, ep)
            self.shared.record(self.wid, ep, theta, t0, self.config.scenario.dt)


def train(config, params=None):
    """Train a policy/value network; returns a :class:`TrainReport`."""
    config.validate()
    root = np.random.SeedSequence(config.seed)
    init_seq, *worker_seqs = root.spawn(config.n_env + 1)
    if params is None:
        params = neural.init_params(np.random.default_rng(init_seq), config.hidden, config.depth)
    shared = _Shared(params, config)
    f0 = baseline(config.scenario)
    workers = [_Worker(i, config, shared, s, f0) for i, s in enumerate(worker_seqs)]
    t0 = time.perf_counter()

    if config.deterministic:
        while shared.started < config.max_epochs:
            batch = []
            for w in workers:
                if shared.claim_episode(config.max_epochs):
                    batch.append((w, *w.act()))
            for w, theta, ep in batch:
                w.learn(theta, ep)
                shared.record(w.wid, ep, theta, t0, config.scenario.dt)
    else:
        threads = [threading.Thread(target=w.run, args=(t0,), name=f"a3c-worker-{w.wid}") for w in workers]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    logger.info("trained %d epochs, best F(T)/T = %.6g", len(shared.curve), shared.best_metric)
    return TrainReport(
        learning_curve=shared.curve,
        best_params=shared.best_params,
        best_metric=float(shared.best_metric),
        best_schedule=shared.best_schedule,
        epochs_run=len(shared.curve),
        updates=shared.updates,
        max_applied_norm=shared.max_applied_norm,
        final_params=shared.params,
        optimizer=shared.rms if config.algorithm == A3C else None,
    )


def evaluate(params, scenario, trials=100, seed=0, sigma_floor=neural.SIGMA_FLOOR,
             reward_params=RewardParams()):
    """Best schedule (and its F(T)/T) among ``trials`` stochastic rollouts."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((trials, scenario.n_steps, 3))
    episodes = rollout_batch(scenario, baseline(scenario), params, noise, reward_params, sigma_floor)
    best_ep = max(episodes, key=lambda ep: ep.f_over_t)
    return PulseSchedule(best_ep.controls.copy(), scenario.dt, scenario.shape), best_ep.f_over_t


# --------------------------------------------------------------------------
# checkpoint format
#
#   magic  b"QFICKPT\0"                          8 bytes
#   version                                      uint32 little endian
#   header length H                              uint64 little endian
#   header: UTF-8 JSON, sorted keys              H bytes
#       {"blocks": [[name, shape], ...], "counters": {...}, "optimizer": {...},
#        "meta": {...}, "payload_bytes": P}
#   payload: float64 little-endian blocks in header order   P bytes
#   crc32 of everything above                    uint32 little endian

CHECKPOINT_MAGIC = b"QFICKPT\0"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def checkpoint_save(path, params, counters=None, optimizer=None, meta=None):
    """Write network parameters (plus optional optimizer state) to ``path``."""
    arrays = dict(params)
    opt_header = None
    if optimizer is not None:
        state = optimizer.state_dict()
        opt_header = {k: v for k, v in state.items() if k != "arrays"}
        arrays.update({f"optimizer/{k}": v for k, v in state["arrays"].items()})
    blocks = [[k, list(np.shape(v))] for k, v in arrays.items()]
    payload = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in arrays.values())
    header = json.dumps({
        "blocks": blocks,
        "counters": counters or {},
        "optimizer": opt_header,
        "meta": meta or {},
        "payload_bytes": len(payload),
    }, sort_keys=True).encode()
    body = CHECKPOINT_MAGIC + struct.pack("<IQ", CHECKPOINT_VERSION, len(header)) + header + payload
    with open(path, "wb") as fh:
        fh.write(body + struct.pack("<I", zlib.crc32(body)))


@dataclass
class Checkpoint:
    params: dict
    counters: dict
    optimizer: dict
    meta: dict


def checkpoint_load(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 24 or data[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file or truncated")
    version, hlen = struct.unpack("<IQ", data[8:20])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    if len(data) < 20 + hlen + 4:
        raise CheckpointError(f"{path}: truncated header")
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != crc:
        raise CheckpointError(f"{path}: checksum mismatch (corrupt or truncated file)")
    header = json.loads(data[20:20 + hlen])
    payload = data[20 + hlen:-4]
    if len(payload) != header["payload_bytes"]:
        raise CheckpointError(f"{path}: payload size mismatch")
    params, opt_arrays, offset = {}, {}, 0
    for name, shape in header["blocks"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape).astype(float)
        offset += 8 * count
        if name.startswith("optimizer/"):
            opt_arrays[name[len("optimizer/"):]] = arr
        else:
            params[name] = arr
    optimizer = header["optimizer"]
    if optimizer is not None:
        optimizer = dict(optimizer, arrays=opt_arrays)
    return Checkpoint(params, header["counters"], optimizer, header["meta"])


def report_counters(report):
    return {"epochs_run": report.epochs_run, "updates": report.updates,
            "best_metric": report.best_metric}


def config_to_dict(config):
    """JSON-friendly view of a TrainConfig (scenario rendered separately)."""
    out = asdict(config)
    out.pop("scenario")
    out["reward"] = asdict(config.reward)
    out["adam_betas"] = list(config.adam_betas)
    return out
