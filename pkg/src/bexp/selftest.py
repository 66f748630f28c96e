"""Fast internal consistency checks, runnable without the test suite.

Each check is small enough that the whole battery finishes in well under
half a minute; the full pytest suite remains the authoritative gate.
"""

from __future__ import annotations

import math
import tempfile
import traceback
from pathlib import Path

import numpy as np

from .config import RunConfig
from .container import read_container, write_container
from .explore import bounded_select, gibbs_probs, softmax
from .harness import run
from .nets import Mlp
from .replay import NormStats
from .sac import SacAgent, squash_with_noise


def check_container_roundtrip():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "t.bin"
        arrays = {"a": np.arange(6, dtype=np.float64).reshape(2, 3),
                  "b": np.array([True, False])}
        write_container(path, {"kind": "selftest", "note": 7}, arrays)
        meta, back = read_container(path)
        assert meta == {"kind": "selftest", "note": 7}
        assert np.array_equal(back["a"], arrays["a"]) and back["a"].dtype == np.float64
        assert np.array_equal(back["b"], arrays["b"])


def check_mlp_gradient():
    rng = np.random.default_rng(3)
    net = Mlp((3, 8, 2), "relu", rng=rng)
    x = rng.standard_normal((4, 3))
    dy = rng.standard_normal((4, 2))
    net.forward(x, cache=True)
    tape = net.backward(dy)
    eps = 1e-5
    idx = rng.integers(0, net.n_params, size=25)
    for i in idx:
        old = net.theta[i]
        net.theta[i] = old + eps
        up = float((net.forward(x) * dy).sum())
        net.theta[i] = old - eps
        down = float((net.forward(x) * dy).sum())
        net.theta[i] = old
        fd = (up - down) / (2 * eps)
        assert math.isclose(tape.flat[i], fd, rel_tol=1e-4, abs_tol=1e-7), \
            f"param {i}: analytic {tape.flat[i]} vs fd {fd}"


def check_policy_log_density():
    mu = np.zeros((1, 1))
    log_sigma = np.zeros((1, 1))
    noise = np.zeros((1, 1))
    _, logp, _ = squash_with_noise(mu, log_sigma, noise, np.zeros(1), np.ones(1))
    assert math.isclose(logp[0], -0.9189385332046727, rel_tol=0, abs_tol=1e-12), logp


def check_gibbs():
    u = np.array([5.0, 5.0, 5.0])
    assert np.allclose(gibbs_probs(u, 1.0), 1 / 3, atol=0), "constant scores must be uniform"
    p = softmax(np.array([0.0, math.log(2.0)]))
    assert np.allclose(p, [1 / 3, 2 / 3], atol=1e-15)
    p = gibbs_probs(np.array([5.0, 10.0]), 1.0)
    expect = np.array([1.0, math.e]) / (1.0 + math.e)
    assert np.allclose(p, expect, atol=1e-12)


def check_bounded_select_replay():
    rng = np.random.default_rng(11)
    actions = rng.uniform(-1, 1, size=(8, 2))
    u = rng.uniform(0, 3, size=8)
    mean_action = np.zeros(2)
    idx, probs = bounded_select(actions, u, mean_action, 5, 1.0, np.random.default_rng(42))
    draws = np.random.default_rng(42).choice(8, size=5, replace=True, p=gibbs_probs(u, 1.0))
    distinct = np.unique(draws)
    d = np.linalg.norm(actions[distinct] - mean_action, axis=1)
    assert idx == int(distinct[np.argmin(d)])
    assert np.isclose(probs.sum(), 1.0)


def check_welford():
    rng = np.random.default_rng(5)
    xs = rng.normal(2.0, 3.0, size=(500, 4))
    stats = NormStats(4)
    for i, x in enumerate(xs):
        stats.add(x, x * 0.5)
    assert np.allclose(stats.state_mean, xs.mean(axis=0), atol=1e-10)
    assert np.allclose(stats.state_var, xs.var(axis=0), atol=1e-8)


def check_critic_target():
    agent = SacAgent(2, 1, [-1.0], [1.0], rng=np.random.default_rng(0))
    for net in (agent.critics.q1_target, agent.critics.q2_target):
        net.theta[:] = 0.0
    agent.temperature.log_alpha = -30.0
    from .replay import Batch
    batch = Batch(states=np.zeros((2, 2)), actions=np.zeros((2, 1)),
                  rewards=np.array([1.0, 2.0]), next_states=np.zeros((2, 2)),
                  terminals=np.array([False, True]))
    y = agent.critic_target(batch, np.random.default_rng(1))
    # zeroed target critics and negligible entropy term: y = r + gamma*(1-term)*0
    assert np.allclose(y, [1.0, 2.0], atol=1e-10), y


def check_determinism():
    cfg = RunConfig(env="pendulum", algo="sac+be", total_steps=120, update_start=50,
                    updates_per_step=1, batch_size=32, eval_interval=60, eval_episodes=2,
                    warmup_transitions=60, n_candidates=8, s_samples=3, ensemble_size=2,
                    policy_hidden=(8, 8), critic_hidden=(8, 8), model_hidden=(8, 8),
                    model_batch_size=32)
    with tempfile.TemporaryDirectory() as tmp:
        a = Path(tmp) / "a"
        b = Path(tmp) / "b"
        run(cfg, 7, a)
        run(cfg, 7, b)
        ma = (a / "metrics.csv").read_bytes()
        mb = (b / "metrics.csv").read_bytes()
        assert ma == mb, "same config and seed must reproduce metrics exactly"


CHECKS = (
    ("container round trip", check_container_roundtrip),
    ("mlp finite-difference gradient", check_mlp_gradient),
    ("squashed log density", check_policy_log_density),
    ("gibbs probabilities", check_gibbs),
    ("bounded selection replay", check_bounded_select_replay),
    ("running normalization stats", check_welford),
    ("critic target", check_critic_target),
    ("run determinism", check_determinism),
)


def run_selftest() -> bool:
    ok = True
    for name, fn in CHECKS:
        try:
            fn()
        except Exception:
            ok = False
            print(f"FAIL - {name}")
            traceback.print_exc()
        else:
            print(f"ok   - {name}")
    print("selftest", "passed" if ok else "FAILED")
    return ok
