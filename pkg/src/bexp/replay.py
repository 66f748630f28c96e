"""Bounded FIFO transition store plus running normalization statistics.

The buffer feeds both the agent and the world models from the same data.
``NormStats`` tracks per-dimension running mean/variance of states and of
state differences (next_state - state); the world models train on and
predict the normalized differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import read_container, write_container
from .errors import WarmupError

VAR_FLOOR = 1e-8


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray

    def __len__(self) -> int:
        return self.states.shape[0]


class NormStats:
    """Welford running mean/variance (population) for states and deltas."""

    def __init__(self, state_dim: int):
        self.count = 0
        self.state_mean = np.zeros(state_dim)
        self._state_m2 = np.zeros(state_dim)
        self.delta_mean = np.zeros(state_dim)
        self._delta_m2 = np.zeros(state_dim)

    def add(self, state: np.ndarray, delta: np.ndarray) -> None:
        self.count += 1
        d = state - self.state_mean
        self.state_mean += d / self.count
        self._state_m2 += d * (state - self.state_mean)
        d = delta - self.delta_mean
        self.delta_mean += d / self.count
        self._delta_m2 += d * (delta - self.delta_mean)

    @property
    def state_var(self) -> np.ndarray:
        return self._state_m2 / max(self.count, 1)

    @property
    def delta_var(self) -> np.ndarray:
        return self._delta_m2 / max(self.count, 1)

    def _require_ready(self):
        if self.count < 2:
            raise WarmupError(
                f"normalization needs >= 2 observed transitions, have {self.count}; "
                "collect warmup data before using the world model"
            )

    def normalize_state(self, state: np.ndarray) -> np.ndarray:
        self._require_ready()
        return (state - self.state_mean) / np.sqrt(np.maximum(self.state_var, VAR_FLOOR))

    def normalize_delta(self, delta: np.ndarray) -> np.ndarray:
        self._require_ready()
        return (delta - self.delta_mean) / np.sqrt(np.maximum(self.delta_var, VAR_FLOOR))

    def denormalize_delta(self, normed: np.ndarray) -> np.ndarray:
        self._require_ready()
        return normed * np.sqrt(np.maximum(self.delta_var, VAR_FLOOR)) + self.delta_mean

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "count": np.array([self.count], dtype=np.int64),
            "state_mean": self.state_mean,
            "state_m2": self._state_m2,
            "delta_mean": self.delta_mean,
            "delta_m2": self._delta_m2,
        }

    def load_arrays(self, arrays: dict[str, np.ndarray], prefix: str = "") -> None:
        self.count = int(arrays[prefix + "count"][0])
        self.state_mean = arrays[prefix + "state_mean"].copy()
        self._state_m2 = arrays[prefix + "state_m2"].copy()
        self.delta_mean = arrays[prefix + "delta_mean"].copy()
        self._delta_m2 = arrays[prefix + "delta_m2"].copy()


class ReplayBuffer:
    """Ring of transitions; strictly oldest-first eviction, uniform sampling."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.terminals = np.zeros(capacity, dtype=bool)
        self.total_pushes = 0
        self.stats = NormStats(state_dim)

    @property
    def size(self) -> int:
        return min(self.total_pushes, self.capacity)

    def push(self, t: Transition) -> None:
        state = np.asarray(t.state, dtype=np.float64)
        action = np.asarray(t.action, dtype=np.float64)
        next_state = np.asarray(t.next_state, dtype=np.float64)
        if state.shape != (self.state_dim,) or next_state.shape != (self.state_dim,):
            raise ValueError(f"state shape mismatch: {state.shape} vs dim {self.state_dim}")
        if action.shape != (self.action_dim,):
            raise ValueError(f"action shape mismatch: {action.shape} vs dim {self.action_dim}")
        if not (np.isfinite(state).all() and np.isfinite(action).all()
                and np.isfinite(next_state).all() and np.isfinite(t.reward)):
            raise ValueError("refusing to store a transition with non-finite values")
        i = self.total_pushes % self.capacity
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = t.reward
        self.next_states[i] = next_state
        self.terminals[i] = t.terminal
        self.total_pushes += 1
        self.stats.add(state, next_state - state)

    def sample(self, batch: int, rng: np.random.Generator) -> Batch:
        """Uniform sample with replacement over currently stored items."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch)
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx],
                     self.next_states[idx], self.terminals[idx])

    def save(self, path) -> None:
        meta = {"kind": "replay", "capacity": self.capacity,
                "state_dim": self.state_dim, "action_dim": self.action_dim}
        arrays = {
            "states": self.states, "actions": self.actions, "rewards": self.rewards,
            "next_states": self.next_states, "terminals": self.terminals,
            "total_pushes": np.array([self.total_pushes], dtype=np.int64),
        }
        arrays.update({"stats_" + k: v for k, v in self.stats.arrays().items()})
        write_container(path, meta, arrays)

    @classmethod
    def load(cls, path) -> "ReplayBuffer":
        meta, arrays = read_container(path)
        if meta.get("kind") != "replay":
            raise ValueError(f"{path}: container does not hold a replay buffer")
        buf = cls(meta["capacity"], meta["state_dim"], meta["action_dim"])
        buf.states = arrays["states"]
        buf.actions = arrays["actions"]
        buf.rewards = arrays["rewards"]
        buf.next_states = arrays["next_states"]
        buf.terminals = arrays["terminals"]
        buf.total_pushes = int(arrays["total_pushes"][0])
        buf.stats.load_arrays(arrays, prefix="stats_")
        return buf
