import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qfi_control import neural
from qfi_control.dynamics import Dephasing, Scenario, plus_state
from qfi_control.fisher import baseline
from qfi_control.rl import (
    RewardParams, a3c_loss, advantages, clipped_surrogate, decode_state, encode_state,
    load_episode_jsonl, ppo_loss, ppo_ratio, returns, reward, rollout,
)

SCEN = Scenario(noise=Dephasing(0.1, np.pi / 4, 0.0), total_time=1.0, dt=0.2)


def small_params(seed=0, hidden=8):
    return neural.init_params(np.random.default_rng(seed), hidden=hidden)


def sample_episode(seed=0, params=None):
    params = small_params(seed) if params is None else params
    return rollout(SCEN, baseline(SCEN), params, rng=np.random.default_rng(seed + 100))


def test_encode_examples():
    np.testing.assert_array_equal(encode_state(plus_state()), [0.5, 0, 0.5, 0, 0.5, 0, 0.5, 0])
    np.testing.assert_array_equal(encode_state(np.diag([1.0, 0.0])), [1, 0, 0, 0, 0, 0, 0, 0])
    rho = np.array([[0.3, 0.1 - 0.2j], [0.1 + 0.2j, 0.7]])
    s = encode_state(rho)
    assert s[2] == 0.1 and s[3] == 0.2 and s[5] == -0.2


@given(st.floats(0, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_encode_round_trip(p, re, im):
    c = complex(re, im) * np.sqrt(p * (1 - p)) / max(1.0, abs(complex(re, im)))
    rho = np.array([[p, np.conj(c)], [c, 1 - p]])
    s = encode_state(rho)
    assert s[0] + s[6] == pytest.approx(1.0)
    assert s[1] == s[7] == 0
    np.testing.assert_array_equal(decode_state(s), rho)


def test_reward_examples():
    rp = RewardParams()
    assert reward(3.0, 3.0, 2, 10, rp) == pytest.approx(-0.001)
    assert reward(6.0, 3.0, 10, 10, rp) == pytest.approx(9.99)
    assert reward(1.001 * 3.0, 3.0, 4, 10, rp) == pytest.approx(0.0, abs=1e-15)
    assert reward(1.001 * 3.0, 3.0, 10, 10, rp) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        RewardParams(eta=0.9)


def test_returns_examples():
    np.testing.assert_allclose(returns([1, 1, 1], 0.5), [1.75, 1.5, 1.0])
    assert returns(np.ones(10), 1.0)[0] == 10
    r = np.zeros(6)
    r[-1] = 2.0
    np.testing.assert_allclose(returns(r, 0.9), 2.0 * 0.9 ** np.arange(5, -1, -1))
    with pytest.raises(ValueError):
        returns([1.0], 0.0)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=30), st.floats(0.01, 1.0))
def test_returns_recursion(rewards, alpha):
    rets = returns(rewards, alpha)
    assert rets[-1] == rewards[-1]
    for j in range(len(rewards) - 1):
        assert rets[j] == rewards[j] + alpha * rets[j + 1]


def test_advantages():
    rets = np.array([3.0, 2.0, 1.0])
    assert np.all(advantages(rets, rets) == 0)
    np.testing.assert_array_equal(advantages(rets, np.zeros(3)), rets)
    v = np.array([0.5, -1.0, 2.0])
    np.testing.assert_allclose(advantages(rets, v + 0.7), advantages(rets, v) - 0.7)
    with pytest.raises(ValueError):
        advantages(rets, np.zeros(2))


def zero_advantage_episode(params):
    """An episode whose rewards make every advantage exactly zero."""
    ep = sample_episode(params=params)
    out, _ = neural.forward(params, ep.states[:-1])
    v = out.value
    alpha = 0.99
    r = v.copy()
    r[:-1] -= alpha * v[1:]
    ep.rewards = r
    return ep, alpha


def test_a3c_zero_advantage():
    p = small_params(1)
    ep, alpha = zero_advantage_episode(p)
    res = a3c_loss(ep, p, alpha, entropy_weight=0.0)
    assert np.abs(res.extras["advantages"]).max() < 1e-12
    assert abs(res.loss) < 1e-12
    for key in ("p0.W", "mu.W", "sigma.W", "mu.b", "sigma.b"):
        assert np.abs(res.grads[key]).max() < 1e-12


def test_a3c_positive_advantage_raises_density():
    p = small_params(2)
    ep = sample_episode(params=p)
    ep.rewards = np.zeros_like(ep.rewards)
    ep.rewards[-1] = 5.0
    res = a3c_loss(ep, p, 0.99, entropy_weight=0.0, value_weight=0.0)
    adv = res.extras["advantages"]
    assert np.all(adv > 0)

    def logp(params):
        out, _ = neural.forward(params, ep.states[:-1])
        return neural.gaussian_logpdf(ep.actions, out.mu, out.sigma)

    q = {k: v - 1e-5 * res.grads[k] for k, v in p.items()}
    assert np.sum(adv * logp(q)) > np.sum(adv * logp(p))


def test_entropy_gradient_on_sigma():
    p = small_params(3)
    ep, alpha = zero_advantage_episode(p)
    w = 0.3
    out, cache = neural.forward(p, ep.states[:-1])
    expected = neural.backward(p, cache, d_sigma=-w / out.sigma)
    res = a3c_loss(ep, p, alpha, entropy_weight=w, value_weight=0.0)
    for k in ("sigma.W", "sigma.b"):
        np.testing.assert_allclose(res.grads[k], expected[k], atol=1e-12)
    assert np.all(res.grads["mu.W"] == 0)


def test_ppo_ratio_examples():
    p = small_params(4)
    s = np.random.default_rng(0).normal(size=8)
    a = np.array([0.2, -0.1, 0.4])
    assert ppo_ratio(p, p, s, a) == 1.0

    zero = neural.zeros_like(p)
    old = neural.copy_params(zero)
    new = neural.copy_params(zero)
    # sigma = softplus(b) + floor; pick biases giving sigma 0.5 and 1.0
    floor = neural.SIGMA_FLOOR
    old["sigma.b"][:] = np.log(np.expm1(0.5 - floor))
    new["sigma.b"][:] = np.log(np.expm1(1.0 - floor))
    r = ppo_ratio(new, old, s, np.zeros(3))
    assert r == pytest.approx(0.5**3, rel=1e-12)
    new1 = neural.copy_params(old)
    new1["sigma.W"] = new1["sigma.W"].copy()
    new1["sigma.b"] = old["sigma.b"].copy()
    new1["sigma.b"][0] = new["sigma.b"][0]
    assert ppo_ratio(new1, old, s, np.zeros(3)) == pytest.approx(0.5, rel=1e-12)


def test_clipped_surrogate_examples():
    val, active = clipped_surrogate([1.0, 2.0, 0.5], [1.0, 1.0, -1.0], 0.12)
    np.testing.assert_allclose(val, [1.0, 1.12, -0.88])
    assert list(active) == [True, False, False]


@given(st.lists(st.tuples(st.floats(1e-3, 10), st.floats(-10, 10)), min_size=1, max_size=20),
       st.floats(0.01, 0.99))
def test_clipped_never_exceeds_unclipped(pairs, eps):
    ratio, adv = map(np.array, zip(*pairs))
    val, _ = clipped_surrogate(ratio, adv, eps)
    assert np.all(val <= ratio * adv + 1e-12)


def test_ppo_matches_a3c_at_unit_ratio():
    for seed in range(5):
        p = small_params(seed)
        ep = sample_episode(seed, p)
        a = a3c_loss(ep, p, 0.9, 1e-3)
        b = ppo_loss(ep, p, neural.copy_params(p), epsilon=1e12, alpha=0.9, entropy_weight=1e-3)
        np.testing.assert_allclose(b.extras["ratio"], 1.0, rtol=0, atol=1e-14)
        for k in p:
            np.testing.assert_allclose(b.grads[k], a.grads[k], atol=1e-8, rtol=0)


def test_ppo_policy_term_never_feeds_value_head():
    p = small_params(6)
    ep = sample_episode(6, p)
    old = {k: v + 0.01 * np.random.default_rng(1).normal(size=v.shape) for k, v in p.items()}
    res = ppo_loss(ep, p, old, 0.12, 0.9, entropy_weight=0.0, value_weight=0.0)
    assert np.all(res.grads["v0.W"] == 0) and np.all(res.grads["v1.W"] == 0)
    res = a3c_loss(ep, p, 0.9, entropy_weight=0.0, value_weight=0.0)
    assert np.all(res.grads["v1.b"] == 0)


def test_ppo_clipped_steps_carry_no_policy_gradient():
    p = small_params(7)
    ep = sample_episode(7, p)
    old = neural.copy_params(p)
    old["mu.b"] = old["mu.b"] + 3.0  # far from the new policy: every ratio clipped or tiny
    res = ppo_loss(ep, p, old, 0.12, 0.9, entropy_weight=0.0, value_weight=0.0)
    ratio, adv = res.extras["ratio"], res.extras["advantages"]
    _, active = clipped_surrogate(ratio, adv, 0.12)
    if not active.any():
        assert all(np.all(g == 0) for g in res.grads.values())
    with pytest.raises(ValueError):
        ppo_loss(ep, p, old, epsilon=0.0)


def test_zero_policy_rollout_reproduces_baseline():
    s = Scenario(noise=Dephasing(0.1, np.pi / 4, 0.0), total_time=5.0, dt=0.1)
    f0 = baseline(s)
    p = neural.zeros_like(small_params())
    ep = rollout(s, f0, p, deterministic=True)
    assert ep.n_steps == 50 and len(ep.states) == 51
    assert np.all(ep.actions == 0) and np.all(ep.controls == 0)
    np.testing.assert_allclose(ep.qfi_per_step, f0, rtol=0, atol=1e-9)
    np.testing.assert_allclose(ep.rewards[:-1], -0.001, atol=1e-9)
    assert ep.rewards[-1] == pytest.approx(-0.01, abs=1e-9)


def test_rollout_contract():
    ep = sample_episode(8)
    n = SCEN.n_steps
    assert ep.actions.shape == ep.controls.shape == (n, 3)
    assert len(ep.rewards) == len(ep.qfi_per_step) == len(ep.log_pdfs) == n
    assert np.all(np.abs(ep.controls) <= SCEN.u_max)
    assert np.all(np.isfinite(ep.rewards))
    for s in ep.states:
        assert s[0] + s[6] == pytest.approx(1.0, abs=1e-9)
        assert abs(s[1]) < 1e-9 and abs(s[7]) < 1e-9
        assert s[2] == pytest.approx(s[4], abs=1e-9) and s[3] == pytest.approx(-s[5], abs=1e-9)
    with pytest.raises(ValueError):
        rollout(SCEN, baseline(SCEN), small_params())


def test_rollout_clips_large_actions():
    p = neural.zeros_like(small_params())
    p["mu.b"][:] = 10.0
    ep = rollout(SCEN, baseline(SCEN), p, deterministic=True)
    assert np.all(ep.actions == 9.75)
    assert np.all(ep.controls == SCEN.u_max)


def test_rollout_reproducible():
    a = sample_episode(9)
    b = sample_episode(9)
    np.testing.assert_array_equal(a.actions, b.actions)
    np.testing.assert_array_equal(a.rewards, b.rewards)


def test_episode_dump_round_trip(tmp_path):
    ep = sample_episode(10)
    path = tmp_path / "ep.jsonl"
    ep.dump(path)
    back = load_episode_jsonl(path, ep.total_time)
    assert len(path.read_text().splitlines()) == ep.n_steps
    np.testing.assert_array_equal(back.actions, ep.actions)
    np.testing.assert_array_equal(back.rewards, ep.rewards)
    np.testing.assert_array_equal(back.states, ep.states[:-1])
    assert back.f_over_t == ep.f_over_t
