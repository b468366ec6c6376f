"""Environment semantics, rewards, returns and actor-critic / PPO losses."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import neural
from .dynamics import segment_propagator, state_vector
from .fisher import F0_FLOOR, qfi_batch


@dataclass(frozen=True)
class RewardParams:
    eta: float = 1.001
    c: float = 10.0

    def __post_init__(self):
        if self.eta < 1 or self.c < 1:
            raise ValueError("reward parameters eta and c must both be >= 1")


@dataclass
class Episode:
    """One rollout.

    ``actions`` are the raw Gaussian samples (their log-density is what the
    losses use); ``controls`` are the same actions clipped to +-u_max, i.e.
    the amplitudes actually applied.
    """

    states: np.ndarray  # (N + 1, 8)
    actions: np.ndarray  # (N, 3)
    controls: np.ndarray  # (N, 3)
    rewards: np.ndarray  # (N,)
    qfi_per_step: np.ndarray  # (N,)
    log_pdfs: np.ndarray  # (N,)
    total_time: float = 1.0
    terminal: bool = True

    @property
    def n_steps(self):
        return len(self.rewards)

    @property
    def f_over_t(self):
        return float(self.qfi_per_step[-1] / self.total_time)

    def to_jsonl(self):
        lines = []
        for j in range(self.n_steps):
            lines.append(json.dumps({
                "step": j,
                "state": self.states[j].tolist(),
                "action": self.actions[j].tolist(),
                "control": self.controls[j].tolist(),
                "reward": float(self.rewards[j]),
                "qfi": float(self.qfi_per_step[j]),
                "log_pdf": float(self.log_pdfs[j]),
            }))
        return "\n".join(lines) + "\n"

    def dump(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())


def load_episode_jsonl(path, total_time=1.0):
    """Read back the per-step records written by :meth:`Episode.dump`.

    The terminal state is not part of the dump, so ``states`` holds N rows.
    """
    with open(path) as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    return Episode(
        states=np.array([r["state"] for r in rows]),
        actions=np.array([r["action"] for r in rows]),
        controls=np.array([r["control"] for r in rows]),
        rewards=np.array([r["reward"] for r in rows]),
        qfi_per_step=np.array([r["qfi"] for r in rows]),
        log_pdfs=np.array([r["log_pdf"] for r in rows]),
        total_time=total_time,
    )


# --------------------------------------------------------------------------


def encode_state(rho):
    """(Re r00, Im r00, Re r10, Im r10, Re r01, Im r01, Re r11, Im r11)."""
    rho = np.asarray(rho)
    flat = np.array([rho[0, 0], rho[1, 0], rho[0, 1], rho[1, 1]])
    return np.stack([flat.real, flat.imag], axis=-1).ravel()


def decode_state(s):
    s = np.asarray(s, dtype=float)
    c = s[0::2] + 1j * s[1::2]
    return np.array([[c[0], c[2]], [c[1], c[3]]])


def reward(f, f0, step_index, n_steps, params=RewardParams()):
    """Relative QFI gain over the no-control value at step ``step_index`` (1-based)."""
    r = (f - params.eta * f0) / f0
    return r * params.c if step_index == n_steps else r


def returns(rewards, alpha):
    """Discounted returns R_j = r_{j+1} + alpha R_{j+1}, bootstrapped with 0."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    out = np.empty(len(rewards))
    acc = 0.0
    for j in range(len(rewards) - 1, -1, -1):
        acc = rewards[j] + alpha * acc
        out[j] = acc
    return out


def advantages(rets, values):
    rets, values = np.asarray(rets, dtype=float), np.asarray(values, dtype=float)
    if rets.shape != values.shape:
        raise ValueError("returns and values must be aligned")
    return rets - values


@dataclass
class LossResult:
    loss: float
    grads: dict
    policy: float = 0.0
    value: float = 0.0
    entropy: float = 0.0
    extras: dict = field(default_factory=dict)


def _loss_pieces(episode, params, alpha, sigma_floor):
    out, cache = neural.forward(params, episode.states[:-1], sigma_floor)
    adv = advantages(returns(episode.rewards, alpha), out.value)
    return out, cache, adv


def a3c_loss(episode, params, alpha=0.99, entropy_weight=1e-4, value_weight=1.0,
             sigma_floor=neural.SIGMA_FLOOR):
    """Actor-critic loss summed over the episode, with its parameter gradient.

    The advantage is a constant inside the policy term; the value term
    sum A_j^2 is what trains the critic.
    """
    out, cache, adv = _loss_pieces(episode, params, alpha, sigma_floor)
    logp = neural.gaussian_logpdf(episode.actions, out.mu, out.sigma)
    ent = neural.gaussian_entropy(out.sigma)
    policy = -np.sum(logp * adv)
    value = np.sum(adv**2)
    entropy = np.sum(ent)

    g_mu, g_sigma = neural.gaussian_logpdf_grads(episode.actions, out.mu, out.sigma)
    d_mu = -adv[:, None] * g_mu
    d_sigma = -adv[:, None] * g_sigma - entropy_weight / out.sigma
    d_value = value_weight * (-2.0 * adv)
    grads = neural.backward(params, cache, d_value, d_mu, d_sigma)
    loss = policy + value_weight * value - entropy_weight * entropy
    return LossResult(float(loss), grads, float(policy), float(value), float(entropy),
                      {"advantages": adv})


def ppo_ratio(theta_new, theta_old, state, action, sigma_floor=neural.SIGMA_FLOOR):
    new, _ = neural.forward(theta_new, state, sigma_floor)
    old, _ = neural.forward(theta_old, state, sigma_floor)
    return np.exp(neural.gaussian_logpdf(action, new.mu, new.sigma)
                  - neural.gaussian_logpdf(action, old.mu, old.sigma))


def clipped_surrogate(ratio, adv, epsilon):
    """Per-step min(nu A, clip(nu, 1-eps, 1+eps) A) and a mask of where the
    unclipped branch is the active one (the only branch carrying gradient)."""
    ratio, adv = np.asarray(ratio, dtype=float), np.asarray(adv, dtype=float)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1 - epsilon, 1 + epsilon) * adv
    return np.minimum(unclipped, clipped), unclipped <= clipped


def ppo_loss(episode, theta, theta_old, epsilon=0.12, alpha=0.9, entropy_weight=1e-3,
             value_weight=1.0, sigma_floor=neural.SIGMA_FLOOR, logp_old=None):
    """Clipped-surrogate loss against the frozen sampling policy ``theta_old``.

    ``logp_old`` may carry precomputed log-densities of ``theta_old`` for the
    episode's actions; they do not change across a PPO inner loop.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    out, cache, adv = _loss_pieces(episode, theta, alpha, sigma_floor)
    if logp_old is None:
        old, _ = neural.forward(theta_old, episode.states[:-1], sigma_floor)
        logp_old = neural.gaussian_logpdf(episode.actions, old.mu, old.sigma)
    logp = neural.gaussian_logpdf(episode.actions, out.mu, out.sigma)
    ratio = np.exp(logp - logp_old)
    surrogate, active = clipped_surrogate(ratio, adv, epsilon)
    ent = neural.gaussian_entropy(out.sigma)

    g_mu, g_sigma = neural.gaussian_logpdf_grads(episode.actions, out.mu, out.sigma)
    coef = -(active * ratio * adv)[:, None]
    d_mu = coef * g_mu
    d_sigma = coef * g_sigma - entropy_weight / out.sigma
    d_value = value_weight * (-2.0 * adv)
    grads = neural.backward(theta, cache, d_value, d_mu, d_sigma)
    policy = -np.sum(surrogate)
    value = np.sum(adv**2)
    entropy = np.sum(ent)
    loss = policy + value_weight * value - entropy_weight * entropy
    return LossResult(float(loss), grads, float(policy), float(value), float(entropy),
                      {"advantages": adv, "ratio": ratio})


# --------------------------------------------------------------------------


def _split(x):
    """(B, 8) augmented vectors -> rho, drho stacks of shape (B, 2, 2)."""
    b = len(x)
    rho = x[:, :4].reshape(b, 2, 2).transpose(0, 2, 1)
    drho = x[:, 4:].reshape(b, 2, 2).transpose(0, 2, 1)
    return rho, drho


def encode_states(rhos):
    flat = np.stack([rhos[:, 0, 0], rhos[:, 1, 0], rhos[:, 0, 1], rhos[:, 1, 1]], axis=-1)
    return np.stack([flat.real, flat.imag], axis=-1).reshape(len(rhos), 8)


def rollout_batch(scenario, baseline_table, params, noise=None, reward_params=RewardParams(),
                  sigma_floor=neural.SIGMA_FLOOR, batch=None):
    """Run ``B`` independent episodes side by side.

    ``noise`` holds standard-normal draws of shape (B, N, 3); the action at
    step j of episode b is ``mu + sigma * noise[b, j]``.  ``noise=None`` gives
    deterministic (mean-action) rollouts, ``batch`` of them.
    """
    n = scenario.n_steps
    if len(baseline_table) != n:
        raise ValueError("baseline table does not match the scenario length")
    b = len(noise) if noise is not None else (batch or 1)
    u_max = scenario.u_max
    x = np.tile(state_vector(scenario.initial_state()), (b, 1))
    rho = np.broadcast_to(scenario.probe, (b, 2, 2))
    states = np.empty((b, n + 1, 8))
    actions = np.empty((b, n, 3))
    rewards = np.empty((b, n))
    qfis = np.empty((b, n))
    logps = np.empty((b, n))
    for j in range(n):
        states[:, j] = encode_states(rho)
        out, _ = neural.forward(params, states[:, j], sigma_floor)
        a = out.mu if noise is None else out.mu + out.sigma * noise[:, j]
        actions[:, j] = a
        logps[:, j] = neural.gaussian_logpdf(a, out.mu, out.sigma)
        props = segment_propagator(scenario, np.clip(a, -u_max, u_max))
        x = np.einsum("bij,bj->bi", props, x)
        rho, drho = _split(x)
        qfis[:, j] = qfi_batch(rho, drho)
        f0 = max(baseline_table[j], F0_FLOOR)
        rewards[:, j] = reward(qfis[:, j], f0, j + 1, n, reward_params)
    states[:, n] = encode_states(rho)
    controls = np.clip(actions, -u_max, u_max)
    return [Episode(states[i], actions[i], controls[i], rewards[i], qfis[i], logps[i], scenario.total_time)
            for i in range(b)]


def rollout(scenario, baseline_table, params, reward_params=RewardParams(), rng=None,
            deterministic=False, sigma_floor=neural.SIGMA_FLOOR):
    """Run the policy for one episode of ``scenario.n_steps`` control segments.

    Actions are sampled from the policy's Gaussian (or set to its mean when
    ``deterministic``), clipped to +-u_max and applied for one segment each.
    """
    if deterministic:
        noise = None
    elif rng is None:
        raise ValueError("a random generator is required for stochastic rollouts")
    else:
        noise = rng.standard_normal((1, scenario.n_steps, 3))
    return rollout_batch(scenario, baseline_table, params, noise, reward_params, sigma_floor)[0]
