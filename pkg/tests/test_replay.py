"""Replay buffer and normalization statistics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bexp.replay import (VAR_FLOOR, Batch, NormStats, ReplayBuffer,
                         Transition, WarmupError)


def tr(s, a, r, ns, term=False):
    return Transition(np.atleast_1d(np.asarray(s, dtype=np.float64)),
                      np.atleast_1d(np.asarray(a, dtype=np.float64)),
                      float(r),
                      np.atleast_1d(np.asarray(ns, dtype=np.float64)),
                      term)


def filled(n, capacity=None, state_dim=1):
    buf = ReplayBuffer(capacity or n, state_dim, 1)
    for i in range(n):
        s = np.full(state_dim, float(i))
        buf.push(tr(s, [0.0], float(i), s + 1.0))
    return buf


def test_fifo_eviction_keeps_newest():
    buf = ReplayBuffer(2, 1, 1)
    for name, val in (("a", 1.0), ("b", 2.0), ("c", 3.0)):
        buf.push(tr([val], [0.0], val, [val]))
    assert buf.size == 2
    stored = set(buf.rewards[:buf.size])
    assert stored == {2.0, 3.0}  # "a" evicted, {"b", "c"} remain


def test_size_counts_stored_not_pushed():
    buf = ReplayBuffer(5, 1, 1)
    buf.push(tr([0.0], [0.0], 0.0, [1.0]))
    assert buf.size == 1
    for i in range(10):
        buf.push(tr([0.0], [0.0], 0.0, [1.0]))
    assert buf.size == 5
    assert buf.total_pushes == 11


def test_stats_mean_of_two_states():
    buf = ReplayBuffer(4, 1, 1)
    buf.push(tr([1.0], [0.0], 0.0, [1.0]))
    buf.push(tr([3.0], [0.0], 0.0, [3.0]))
    assert buf.stats.state_mean[0] == 2.0


def test_normalize_delta_oracle():
    # deltas {0, 2}: mean 1, population var 1; normalize(2) = (2-1)/1 = +1
    stats = NormStats(1)
    stats.add(np.array([0.0]), np.array([0.0]))
    stats.add(np.array([0.0]), np.array([2.0]))
    assert stats.normalize_delta(np.array([2.0]))[0] == pytest.approx(1.0, abs=1e-12)
    assert stats.normalize_delta(np.array([0.0]))[0] == pytest.approx(-1.0, abs=1e-12)


def test_normalize_denormalize_round_trip():
    rng = np.random.default_rng(0)
    stats = NormStats(3)
    for _ in range(50):
        stats.add(rng.normal(size=3), rng.normal(size=3) * 2.0 + 1.0)
    normed = stats.normalize_delta(np.array([0.3, -1.2, 4.0]))
    back = stats.denormalize_delta(normed)
    assert np.allclose(back, [0.3, -1.2, 4.0], rtol=0, atol=1e-10)


def test_single_item_batch_repeats_it():
    buf = ReplayBuffer(8, 1, 1)
    buf.push(tr([5.0], [0.5], 7.0, [6.0], term=True))
    batch = buf.sample(4, np.random.default_rng(0))
    assert len(batch) == 4
    assert (batch.states == 5.0).all()
    assert (batch.rewards == 7.0).all()
    assert batch.terminals.all()
    assert batch.terminals.dtype == bool


def test_sampling_is_uniform_over_items():
    buf = filled(10)
    rng = np.random.default_rng(42)
    draws = buf.sample(100_000, rng).rewards.astype(int)
    counts = np.bincount(draws, minlength=10)
    # each count ~ Binomial(1e5, 0.1): mean 1e4, sd ~94.9; allow 3 sigma
    sd = math.sqrt(100_000 * 0.1 * 0.9)
    assert (np.abs(counts - 10_000) <= 3 * sd).all()


def test_same_seed_same_batch():
    buf = filled(50)
    b1 = buf.sample(16, np.random.default_rng(9))
    b2 = buf.sample(16, np.random.default_rng(9))
    assert np.array_equal(b1.states, b2.states)
    assert np.array_equal(b1.actions, b2.actions)
    assert np.array_equal(b1.rewards, b2.rewards)
    assert np.array_equal(b1.terminals, b2.terminals)


def test_sample_never_returns_evicted_items():
    buf = ReplayBuffer(3, 1, 1)
    for i in range(10):
        buf.push(tr([float(i)], [0.0], float(i), [0.0]))
    batch = buf.sample(1000, np.random.default_rng(1))
    assert set(batch.rewards) <= {7.0, 8.0, 9.0}


def test_sample_empty_raises():
    buf = ReplayBuffer(3, 1, 1)
    with pytest.raises(ValueError, match="empty"):
        buf.sample(1, np.random.default_rng(0))


def test_push_rejects_bad_shapes_and_nonfinite():
    buf = ReplayBuffer(3, 2, 1)
    with pytest.raises(ValueError, match="state shape"):
        buf.push(tr([1.0], [0.0], 0.0, [1.0]))
    with pytest.raises(ValueError, match="action shape"):
        buf.push(Transition(np.zeros(2), np.zeros(2), 0.0, np.zeros(2), False))
    with pytest.raises(ValueError, match="non-finite"):
        buf.push(Transition(np.zeros(2), np.array([np.nan]), 0.0, np.zeros(2), False))
    with pytest.raises(ValueError, match="non-finite"):
        buf.push(Transition(np.zeros(2), np.zeros(1), math.inf, np.zeros(2), False))


def test_stats_not_ready_until_two_samples():
    stats = NormStats(1)
    with pytest.raises(WarmupError):
        stats.normalize_state(np.array([0.0]))
    stats.add(np.array([1.0]), np.array([0.0]))
    with pytest.raises(WarmupError):
        stats.normalize_delta(np.array([0.0]))
    stats.add(np.array([2.0]), np.array([1.0]))
    stats.normalize_state(np.array([0.0]))  # no raise


def test_variance_floor_prevents_division_blowup():
    stats = NormStats(1)
    stats.add(np.array([5.0]), np.array([5.0]))
    stats.add(np.array([5.0]), np.array([5.0]))  # zero variance
    out = stats.normalize_state(np.array([5.0 + 1e-6]))
    assert np.isfinite(out).all()
    assert abs(out[0]) <= 1e-6 / math.sqrt(VAR_FLOOR) + 1e-9


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60))
def test_incremental_stats_match_batch_formulas(xs):
    stats = NormStats(1)
    for x in xs:
        stats.add(np.array([x]), np.array([x * 0.5]))
    arr = np.array(xs)
    assert stats.count == len(xs)
    assert stats.state_mean[0] == pytest.approx(arr.mean(), rel=1e-9, abs=1e-9)
    assert stats.state_var[0] == pytest.approx(arr.var(), rel=1e-9, abs=1e-9)
    assert stats.delta_var[0] == pytest.approx((arr * 0.5).var(), rel=1e-9, abs=1e-9)


def test_save_load_round_trip_bitwise(tmp_path):
    buf = ReplayBuffer(16, 3, 2)
    rng = np.random.default_rng(7)
    for i in range(20):
        s, ns = rng.normal(size=3), rng.normal(size=3)
        buf.push(Transition(s, rng.normal(size=2), float(rng.normal()), ns, bool(i % 4 == 0)))
    path = tmp_path / "buf.bin"
    buf.save(path)
    loaded = ReplayBuffer.load(path)
    assert loaded.size == buf.size
    assert loaded.total_pushes == buf.total_pushes
    assert np.array_equal(loaded.states, buf.states)
    assert np.array_equal(loaded.terminals, buf.terminals)
    assert loaded.stats.count == buf.stats.count
    assert np.array_equal(loaded.stats.state_mean, buf.stats.state_mean)
    assert np.array_equal(loaded.stats.state_var, buf.stats.state_var)
    # sampling behaves identically after reload
    b1 = buf.sample(8, np.random.default_rng(3))
    b2 = loaded.sample(8, np.random.default_rng(3))
    assert np.array_equal(b1.states, b2.states)


def test_load_rejects_wrong_container_kind(tmp_path):
    from bexp.container import write_container
    path = tmp_path / "other.bin"
    write_container(path, {"kind": "mlp"}, {"w": np.zeros(2)})
    with pytest.raises(ValueError, match="replay"):
        ReplayBuffer.load(path)


def test_capacity_must_be_positive():
    with pytest.raises(ValueError, match="capacity"):
        ReplayBuffer(0, 1, 1)
