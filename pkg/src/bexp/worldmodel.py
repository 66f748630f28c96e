"""Ensemble of learned one-step dynamics models.

Each member is an MLP mapping [normalized state, action] to [normalized
next-state delta, reward]. Members differ through independent weight
initialization and independent training batches. Disagreement between
members (summed per-dimension variance of their denormalized next-state
predictions) is the uncertainty signal used by the exploration selectors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .container import read_container, write_container
from .errors import NumericalError
from .nets import Adam, Mlp, optimizer_step
from .replay import NormStats, ReplayBuffer

log = logging.getLogger(__name__)


@dataclass
class EnsemblePrediction:
    """All-member predictions for a single (state, action) pair."""

    next_states: np.ndarray   # (M, D)
    rewards: np.ndarray       # (M,)
    var_per_dim: np.ndarray   # (D,) population variance across members
    uncertainty: float        # sum of var_per_dim (+ reward variance if enabled)


class WorldModelEnsemble:
    """M independently trained one-step models sharing one normalizer."""

    def __init__(self, state_dim, action_dim, stats: NormStats, *,
                 n_members=5, hidden=(32, 32), lr=3e-4,
                 min_ready_transitions=1000, include_reward_in_uncertainty=False,
                 rng):
        if n_members < 2:
            raise ValueError(f"need at least 2 members for disagreement, got {n_members}")
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.stats = stats
        self.n_members = n_members
        self.min_ready_transitions = min_ready_transitions
        self.include_reward_in_uncertainty = include_reward_in_uncertainty
        sizes = (state_dim + action_dim, *hidden, state_dim + 1)
        # per-member generators drive both weight init and batch draws
        self._rngs = [np.random.default_rng(int(s)) for s in rng.integers(2 ** 63, size=n_members)]
        self.members = [Mlp(sizes, "relu", rng=r) for r in self._rngs]
        self.opts = [Adam(m.n_params, lr) for m in self.members]
        self.train_rounds = 0

    @property
    def ready(self) -> bool:
        """True once enough transitions are seen and training has started."""
        return self.stats.count >= self.min_ready_transitions and self.train_rounds > 0

    def _inputs(self, states, actions):
        return np.concatenate([self.stats.normalize_state(states), actions], axis=-1)

    def train_round(self, buffer: ReplayBuffer, batch_size: int):
        """One MSE gradient step per member, each on its own uniform batch.

        Returns the mean loss across members, or None (with a warning) when
        the buffer cannot fill a batch yet.
        """
        if buffer.size < batch_size or self.stats.count < 2:
            log.warning("skipping model training round: only %d of %d transitions stored",
                        buffer.size, batch_size)
            return None
        total = 0.0
        for member, opt, rng in zip(self.members, self.opts, self._rngs):
            batch = buffer.sample(batch_size, rng)
            x = self._inputs(batch.states, batch.actions)
            target = np.concatenate(
                [self.stats.normalize_delta(batch.next_states - batch.states),
                 batch.rewards[:, None]], axis=1)
            pred = member.forward(x, cache=True)
            err = pred - target
            total += float(np.mean(err * err))
            optimizer_step(member, member.backward(2.0 * err / err.size), opt)
        loss = total / self.n_members
        if not np.isfinite(loss):
            raise NumericalError(f"model loss is not finite ({loss})")
        self.train_rounds += 1
        return loss

    def predict_member(self, index: int, states, actions):
        """One member's prediction; returns (next_states, rewards)."""
        out = self.members[index].forward(self._inputs(states, actions))
        deltas = self.stats.denormalize_delta(out[..., : self.state_dim])
        return states + deltas, out[..., self.state_dim]

    def predict_all(self, state, action) -> EnsemblePrediction:
        """Every member's prediction for one (state, action) pair."""
        x = self._inputs(np.asarray(state, dtype=np.float64),
                         np.asarray(action, dtype=np.float64))
        outs = np.stack([m.forward(x) for m in self.members])
        next_states = state + self.stats.denormalize_delta(outs[:, : self.state_dim])
        rewards = outs[:, self.state_dim]
        var_per_dim = next_states.var(axis=0)
        uncertainty = float(var_per_dim.sum())
        if self.include_reward_in_uncertainty:
            uncertainty += float(rewards.var())
        return EnsemblePrediction(next_states, rewards, var_per_dim, uncertainty)

    def uncertainty_batch(self, state, actions) -> np.ndarray:
        """Disagreement score for n candidate actions at one state; (n,)."""
        n = actions.shape[0]
        ns = np.broadcast_to(self.stats.normalize_state(state), (n, self.state_dim))
        x = np.concatenate([ns, actions], axis=1)
        outs = np.stack([m.forward(x) for m in self.members])  # (M, n, D+1)
        next_states = state + self.stats.denormalize_delta(outs[:, :, : self.state_dim])
        u = next_states.var(axis=0).sum(axis=1)
        if self.include_reward_in_uncertainty:
            u = u + outs[:, :, self.state_dim].var(axis=0)
        return u

    def predict_random(self, state, action, rng):
        """Prediction from one uniformly drawn member; (next_state, reward)."""
        idx = int(rng.integers(0, self.n_members))
        return self.predict_member(idx, np.asarray(state, dtype=np.float64),
                                   np.asarray(action, dtype=np.float64))

    def rollout_predict(self, states, actions, rng):
        """Batched prediction with a random member chosen per row."""
        n = states.shape[0]
        idx = rng.integers(0, self.n_members, size=n)
        x = self._inputs(states, actions)
        out = np.empty((n, self.state_dim + 1))
        for m in range(self.n_members):
            rows = idx == m
            if rows.any():
                out[rows] = self.members[m].forward(x[rows])
        next_states = states + self.stats.denormalize_delta(out[:, : self.state_dim])
        return next_states, out[:, self.state_dim]

    def save(self, path) -> None:
        meta = {"kind": "world_model", "n_members": self.n_members,
                "state_dim": self.state_dim, "action_dim": self.action_dim,
                "min_ready_transitions": self.min_ready_transitions,
                "include_reward_in_uncertainty": self.include_reward_in_uncertainty,
                "sizes": list(self.members[0].sizes)}
        arrays = {f"member{i}_theta": m.theta for i, m in enumerate(self.members)}
        arrays["train_rounds"] = np.array([self.train_rounds], dtype=np.int64)
        for k, v in self.stats.arrays().items():
            arrays["stats_" + k] = v
        write_container(path, meta, arrays)

    def load_params(self, path, restore_stats=False) -> None:
        """Restore member weights; normalizer state lives with the replay buffer
        unless restore_stats is set."""
        meta, arrays = read_container(path)
        if meta.get("kind") != "world_model":
            raise ValueError(f"{path}: container does not hold a world model")
        if meta["n_members"] != self.n_members:
            raise ValueError(f"checkpoint has {meta['n_members']} members, expected {self.n_members}")
        if tuple(meta["sizes"]) != self.members[0].sizes:
            raise ValueError(f"checkpoint member sizes {meta['sizes']} != {self.members[0].sizes}")
        for i, m in enumerate(self.members):
            m.theta[:] = arrays[f"member{i}_theta"]
        self.train_rounds = int(arrays["train_rounds"][0])
        if restore_stats:
            self.stats.load_arrays(arrays, prefix="stats_")
