"""Action selection strategies built on policy candidates and model disagreement.

Three selectors share one interface:

- ``vanilla``: one policy sample, executed as drawn.
- ``bounded``: sample n candidates from the policy, score each by ensemble
  disagreement, map scores through a Gibbs distribution (min-max normalized,
  temperature-scaled softmax), draw s of them with replacement, and execute
  the drawn candidate closest to the policy mean action. High-uncertainty
  candidates are favored by the draw while the closest-to-mean reduction
  keeps the executed action near the policy's current intent.
- ``qu``: among the n candidates, execute the argmax of min(Q1, Q2) plus
  disagreement (pure exploitation of value plus an exploration bonus).

Until the world model is ready, bounded and qu fall back to vanilla.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

SELECTOR_KINDS = ("vanilla", "bounded", "qu")


@dataclass
class SelectorConfig:
    kind: str = "vanilla"
    n_candidates: int = 100
    s_samples: int = 10
    temperature: float = 1.0

    def __post_init__(self):
        if self.kind not in SELECTOR_KINDS:
            raise ValueError(f"unknown selector kind {self.kind!r}, expected one of {SELECTOR_KINDS}")
        if self.n_candidates < 1:
            raise ValueError(f"n_candidates must be >= 1, got {self.n_candidates}")
        if self.s_samples < 1:
            raise ValueError(f"s_samples must be >= 1, got {self.s_samples}")
        if not self.temperature > 0.0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")


@dataclass
class CandidateSet:
    """Full candidate pool kept only when diagnostics request it."""

    actions: np.ndarray        # (n, A)
    logps: np.ndarray          # (n,)
    mean_action: np.ndarray    # (A,)
    uncertainty: np.ndarray    # (n,)
    probs: Optional[np.ndarray] = None  # (n,) Gibbs probabilities (bounded only)


@dataclass
class SelectionDiag:
    """Per-step record of what the selector did."""

    kind_used: str
    chosen_index: int
    u_chosen: float
    u_max: float
    dist_to_mean: float
    in_candidate_set: bool
    candidates: Optional[CandidateSet] = None


def softmax(scores: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over a 1-D score vector."""
    z = scores - scores.max()
    e = np.exp(z)
    return e / e.sum()


def gibbs_probs(u: np.ndarray, temperature: float) -> np.ndarray:
    """Selection probabilities from raw uncertainty scores.

    Scores are min-max normalized to [0, 1], divided by the temperature,
    then passed through a softmax. A constant score vector (including n=1)
    yields the exact uniform distribution.
    """
    u = np.asarray(u, dtype=np.float64)
    lo, hi = u.min(), u.max()
    if hi == lo:
        return np.full(u.shape, 1.0 / u.size)
    return softmax((u - lo) / (hi - lo) / temperature)


def bounded_select(actions, u, mean_action, s_samples, temperature, rng):
    """Gibbs-draw s candidates, return the drawn one closest to the mean action.

    Draws are with replacement; distinct drawn candidates are compared by
    Euclidean distance to ``mean_action`` and distance ties resolve to the
    lowest candidate index. Returns (chosen_index, probs).
    """
    probs = gibbs_probs(u, temperature)
    draws = rng.choice(u.size, size=s_samples, replace=True, p=probs)
    distinct = np.unique(draws)
    dists = np.linalg.norm(actions[distinct] - mean_action, axis=1)
    return int(distinct[np.argmin(dists)]), probs


def qu_select(u, q_min) -> int:
    """Index of the candidate maximizing min-Q plus uncertainty (first wins ties)."""
    return int(np.argmax(np.asarray(q_min) + np.asarray(u)))


class ActionSelector:
    """Stateful wrapper choosing executed actions during training rollouts."""

    def __init__(self, cfg: SelectorConfig, policy, ensemble=None, critics=None):
        if cfg.kind != "vanilla" and ensemble is None:
            raise ValueError(f"selector kind {cfg.kind!r} needs a world model ensemble")
        if cfg.kind == "qu" and critics is None:
            raise ValueError("selector kind 'qu' needs critics")
        self.cfg = cfg
        self.policy = policy
        self.ensemble = ensemble
        self.critics = critics
        self._warned_fallback = False

    def _vanilla(self, state, rng, kind_used="vanilla"):
        actions, logps, mean_action = self.policy.sample_candidates(state, 1, rng)
        dist = float(np.linalg.norm(actions[0] - mean_action))
        diag = SelectionDiag(kind_used, 0, math.nan, math.nan, dist, True)
        return actions[0], diag

    def act(self, state, rng, keep_candidates=False):
        """Pick the executed action for one environment step.

        Returns (action (A,), SelectionDiag).
        """
        cfg = self.cfg
        if cfg.kind == "vanilla":
            return self._vanilla(state, rng)
        if not self.ensemble.ready:
            if not self._warned_fallback:
                log.info("world model not ready; %s selector falling back to policy sampling",
                         cfg.kind)
                self._warned_fallback = True
            return self._vanilla(state, rng)

        actions, logps, mean_action = self.policy.sample_candidates(state, cfg.n_candidates, rng)
        u = self.ensemble.uncertainty_batch(state, actions)
        probs = None
        if cfg.kind == "bounded":
            idx, probs = bounded_select(actions, u, mean_action,
                                        cfg.s_samples, cfg.temperature, rng)
        else:
            states = np.broadcast_to(state, (cfg.n_candidates, state.shape[0]))
            idx = qu_select(u, self.critics.q_min(states, actions))
        chosen = actions[idx]
        diag = SelectionDiag(
            kind_used=cfg.kind,
            chosen_index=idx,
            u_chosen=float(u[idx]),
            u_max=float(u.max()),
            dist_to_mean=float(np.linalg.norm(chosen - mean_action)),
            in_candidate_set=bool(np.any(np.all(actions == chosen, axis=1))),
        )
        if keep_candidates:
            diag.candidates = CandidateSet(actions, logps, mean_action, u, probs)
        return chosen, diag
