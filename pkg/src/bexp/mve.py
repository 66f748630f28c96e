"""Model-based value expansion for critic targets.

Instead of bootstrapping immediately at the observed next state, the critic
target unrolls the learned dynamics model for ``horizon`` steps under the
current policy, sums the discounted predicted rewards, and bootstraps with
the entropy-regularized target-critic value at the final imagined state:

    y = r + sum_{k=1..H} gamma^k * r_hat_k
          + gamma^(H+1) * (min Q'(s_H, a_H) - alpha * logp(a_H | s_H))

Each imagined step queries a random ensemble member per batch row. Terminal
transitions never roll out: their target stays the observed reward alone.
With ``horizon == 0`` the computation is exactly the model-free target.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .replay import Batch

log = logging.getLogger(__name__)


@dataclass
class MveConfig:
    horizon: int = 2
    gamma: float = 0.99

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError(f"horizon must be >= 0, got {self.horizon}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")


def mve_target(batch: Batch, agent, ensemble, cfg: MveConfig, rng) -> np.ndarray:
    """Expanded critic target for one batch; (B,).

    Only non-terminal rows are rolled out; terminal rows contribute their
    observed reward with a zero bootstrap.
    """
    if cfg.horizon == 0:
        return agent.critic_target(batch, rng)
    y = batch.rewards.copy()
    live = ~batch.terminals
    states = batch.next_states[live]
    extra = np.zeros(states.shape[0])
    g = cfg.gamma
    for k in range(1, cfg.horizon + 1):
        actions, _ = agent.policy.sample_batch(states, rng)
        states, r_hat = ensemble.rollout_predict(states, actions, rng)
        extra += g ** k * r_hat
    a_last, logp_last = agent.policy.sample_batch(states, rng)
    q_last = agent.critics.target_min(states, a_last)
    extra += g ** (cfg.horizon + 1) * (q_last - agent.temperature.alpha * logp_last)
    y[live] += extra
    return y


def make_target_fn(agent, ensemble, cfg: MveConfig):
    """Critic-target callable for SacAgent.update_critics.

    With horizon 0 (or no ensemble) this returns the agent's own model-free
    target so the two code paths are literally the same computation. Until
    the ensemble is ready the closure falls back to the model-free target.
    """
    if cfg.horizon == 0 or ensemble is None:
        return agent.critic_target
    warned = False

    def target_fn(batch: Batch, rng) -> np.ndarray:
        nonlocal warned
        if not ensemble.ready:
            if not warned:
                log.info("world model not ready; critic targets stay model-free")
                warned = True
            return agent.critic_target(batch, rng)
        return mve_target(batch, agent, ensemble, cfg, rng)

    return target_fn
