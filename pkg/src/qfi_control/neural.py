"""Actor-critic network in plain numpy.

A shared ReLU trunk feeds a value head and a Gaussian policy head.  All
arithmetic is float64; gradients are computed by hand-written reverse mode.
Parameters live in an ordered dict of named blocks (``"t0.W"``, ``"t0.b"``,
...), which is also the unit of locking for shared updates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

STATE_DIM = 8
ACTION_DIM = 3
SHRINK_LAMBDA = 0.25
SIGMA_FLOOR = 1e-4


def softshrink(x, lam=SHRINK_LAMBDA):
    x = np.asarray(x, dtype=float)
    return np.where(x > lam, x - lam, np.where(x < -lam, x + lam, 0.0))


def softplus(x):
    return np.logaddexp(0.0, x)


def relu(x):
    return np.maximum(x, 0.0)


def layer_shapes(hidden=200, depth=4):
    """(name, fan_in, fan_out) for every affine layer."""
    layers = [("t0", STATE_DIM, hidden)]
    layers += [(f"t{i}", hidden, hidden) for i in range(1, depth)]
    layers += [
        ("v0", hidden, hidden),
        ("v1", hidden, 1),
        ("p0", hidden, hidden),
        ("mu", hidden, ACTION_DIM),
        ("sigma", hidden, ACTION_DIM),
    ]
    return layers


def init_params(rng, hidden=200, depth=4):
    """Glorot-uniform weights, zero biases."""
    params = {}
    for name, fan_in, fan_out in layer_shapes(hidden, depth):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"{name}.W"] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params[f"{name}.b"] = np.zeros(fan_out)
    return params


def zeros_like(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


def copy_params(params):
    return {k: v.copy() for k, v in params.items()}


def trunk_depth(params):
    return sum(1 for k in params if k.startswith("t") and k.endswith(".W"))


@dataclass
class PolicyOutput:
    value: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray


def forward(params, state, sigma_floor=SIGMA_FLOOR):
    """Evaluate the network on one state (8,) or a batch (B, 8).

    Returns ``(PolicyOutput, cache)``; the cache feeds :func:`backward`.
    """
    x = np.asarray(state, dtype=float)
    single = x.ndim == 1
    h = np.atleast_2d(x)
    acts = [h]
    pre = []
    for i in range(trunk_depth(params)):
        z = h @ params[f"t{i}.W"] + params[f"t{i}.b"]
        h = relu(z)
        pre.append(z)
        acts.append(h)
    zv = h @ params["v0.W"] + params["v0.b"]
    hv = relu(zv)
    value = (hv @ params["v1.W"] + params["v1.b"])[:, 0]
    zp = h @ params["p0.W"] + params["p0.b"]
    hp = relu(zp)
    mu_pre = hp @ params["mu.W"] + params["mu.b"]
    sig_pre = hp @ params["sigma.W"] + params["sigma.b"]
    out = PolicyOutput(value, softshrink(mu_pre), softplus(sig_pre) + sigma_floor)
    cache = dict(acts=acts, pre=pre, zv=zv, hv=hv, zp=zp, hp=hp, mu_pre=mu_pre, sig_pre=sig_pre)
    if single:
        out = PolicyOutput(out.value[0], out.mu[0], out.sigma[0])
    return out, cache


def backward(params, cache, d_value=None, d_mu=None, d_sigma=None):
    """Gradient of a scalar loss given its derivatives w.r.t. the outputs.

    ``d_value`` has shape (B,), ``d_mu`` and ``d_sigma`` shape (B, 3); any of
    them may be None (treated as zero).
    """
    batch = cache["acts"][0].shape[0]
    d_value = np.zeros(batch) if d_value is None else np.reshape(d_value, (batch,))
    d_mu = np.zeros((batch, ACTION_DIM)) if d_mu is None else np.reshape(d_mu, (batch, ACTION_DIM))
    d_sigma = np.zeros((batch, ACTION_DIM)) if d_sigma is None else np.reshape(d_sigma, (batch, ACTION_DIM))
    grads = {}
    h = cache["acts"][-1]

    # value head
    dv = d_value[:, None]
    grads["v1.W"] = cache["hv"].T @ dv
    grads["v1.b"] = dv.sum(0)
    dzv = (dv @ params["v1.W"].T) * (cache["zv"] > 0)
    grads["v0.W"] = h.T @ dzv
    grads["v0.b"] = dzv.sum(0)
    dh = dzv @ params["v0.W"].T

    # policy head
    dmu_pre = d_mu * (np.abs(cache["mu_pre"]) > SHRINK_LAMBDA)
    dsig_pre = d_sigma * expit(cache["sig_pre"])
    hp = cache["hp"]
    grads["mu.W"] = hp.T @ dmu_pre
    grads["mu.b"] = dmu_pre.sum(0)
    grads["sigma.W"] = hp.T @ dsig_pre
    grads["sigma.b"] = dsig_pre.sum(0)
    dhp = dmu_pre @ params["mu.W"].T + dsig_pre @ params["sigma.W"].T
    dzp = dhp * (cache["zp"] > 0)
    grads["p0.W"] = h.T @ dzp
    grads["p0.b"] = dzp.sum(0)
    dh = dh + dzp @ params["p0.W"].T

    for i in reversed(range(len(cache["pre"]))):
        dz = dh * (cache["pre"][i] > 0)
        grads[f"t{i}.W"] = cache["acts"][i].T @ dz
        grads[f"t{i}.b"] = dz.sum(0)
        if i:
            dh = dz @ params[f"t{i}.W"].T
    return {k: grads[k] for k in params}


# --------------------------------------------------------------------------
# Gaussian policy helpers


def gaussian_logpdf(a, mu, sigma):
    """Log-density of a diagonal Gaussian, summed over the last axis."""
    a, mu, sigma = (np.asarray(v, dtype=float) for v in (a, mu, sigma))
    return np.sum(-0.5 * np.log(2 * np.pi * sigma**2) - (a - mu) ** 2 / (2 * sigma**2), axis=-1)


def gaussian_logpdf_grads(a, mu, sigma):
    """(d logpdf/d mu, d logpdf/d sigma), componentwise."""
    diff = np.asarray(a) - mu
    return diff / sigma**2, -1.0 / sigma + diff**2 / sigma**3


def gaussian_entropy(sigma):
    sigma = np.asarray(sigma, dtype=float)
    return np.sum(0.5 * (np.log(2 * np.pi * sigma**2) + 1.0), axis=-1)


# --------------------------------------------------------------------------
# gradient post-processing and optimizers


def global_norm(grads):
    return float(np.sqrt(sum(np.dot(g.ravel(), g.ravel()) for g in grads.values())))


def clip_global_norm(grads, max_norm):
    if not max_norm > 0:
        raise ValueError("max_norm must be > 0")
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


class _NullLock:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


_NULL = _NullLock()


class RmsProp:
    """RMSProp whose square averages may be shared between workers.

    Updates are applied in place, one parameter block at a time; pass a
    mapping of per-block locks to make each block update atomic.
    """

    def __init__(self, params, lr=1e-5, decay=0.99, eps=1e-8):
        self.lr, self.decay, self.eps = lr, decay, eps
        self.square_avg = zeros_like(params)

    def apply(self, params, grads, locks=None):
        for k, g in grads.items():
            with (locks[k] if locks else _NULL):
                s = self.square_avg[k]
                s *= self.decay
                s += (1 - self.decay) * np.square(g)
                delta = np.sqrt(s)
                delta += self.eps
                np.divide(g, delta, out=delta)
                delta *= self.lr
                params[k] -= delta
        return params

    def state_dict(self):
        return {"kind": "rmsprop", "lr": self.lr, "decay": self.decay, "eps": self.eps,
                "step": 0, "arrays": {f"square_avg/{k}": v for k, v in self.square_avg.items()}}


class Adam:
    def __init__(self, params, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = zeros_like(params)
        self.v = zeros_like(params)
        self.step = 0

    def apply(self, params, grads, locks=None):
        self.step += 1
        c1 = 1 - self.beta1**self.step
        c2 = 1 - self.beta2**self.step
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * np.square(g)
            delta = np.sqrt(v)
            delta *= 1 / np.sqrt(c2)
            delta += self.eps
            np.divide(m, delta, out=delta)
            delta *= self.lr / c1
            with (locks[k] if locks else _NULL):
                params[k] -= delta
        return params

    def state_dict(self):
        arrays = {f"m/{k}": v for k, v in self.m.items()}
        arrays.update({f"v/{k}": v for k, v in self.v.items()})
        return {"kind": "adam", "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps, "step": self.step, "arrays": arrays}


def apply_update(opt, params, grads, locks=None):
    """Apply one optimizer step in place; returns ``(params, opt)``."""
    opt.apply(params, grads, locks)
    return params, opt
