"""Soft Actor-Critic: squashed-Gaussian actor, twin critics, learned temperature.

The actor outputs per-dimension Gaussian parameters; executed actions are
tanh-squashed and rescaled into the environment bounds, with the matching
log-density correction. Critic targets bootstrap through the minimum of two
target networks minus the entropy term. The temperature coefficient is
learned to hold policy entropy near a target.

Update order within one round is critics -> actor -> temperature.
"""

from __future__ import annotations

import math

import numpy as np

from .container import read_container, write_container
from .errors import NumericalError
from .nets import Adam, GradientTape, Mlp, optimizer_step, soft_update
from .replay import Batch

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
# clamp keeps alpha = exp(log_alpha) strictly positive in float64
LOG_ALPHA_MIN = -30.0
LOG_ALPHA_MAX = 30.0


def squash_with_noise(mu, log_sigma, noise, center, scale):
    """Reparameterized squashed-Gaussian transform.

    ``x = mu + exp(log_sigma) * noise`` is squashed to
    ``a = center + scale * tanh(x)``; the returned log-density includes the
    tanh correction, written as ``2*(ln 2 - x - softplus(-2x))`` per
    dimension so it stays finite for large ``|x|``, plus the ``-ln scale``
    change-of-variables term. Shapes: (B, A) inputs, (B,) log-density.
    Also returns ``tanh(x)`` for reuse in gradients.
    """
    sigma = np.exp(log_sigma)
    x = mu + sigma * noise
    t = np.tanh(x)
    actions = center + scale * t
    log1m_t2 = 2.0 * (math.log(2.0) - x - np.logaddexp(0.0, -2.0 * x))
    logp = (-0.5 * noise * noise - log_sigma - _HALF_LOG_2PI - log1m_t2 - np.log(scale)).sum(axis=1)
    return actions, logp, t


class SampleCache:
    """Intermediates of one reparameterized sample, kept for the backward pass."""

    def __init__(self, noise, tanh_x, sigma, clamp_mask):
        self.noise = noise
        self.tanh_x = tanh_x
        self.sigma = sigma
        self.clamp_mask = clamp_mask


class SquashedGaussianPolicy:
    """Stochastic policy net: state -> (mu, log_sigma) -> bounded action."""

    def __init__(self, state_dim, action_dim, hidden, action_low, action_high, *, rng):
        self.action_dim = action_dim
        self.trunk = Mlp((state_dim, *hidden, 2 * action_dim), "relu", rng=rng)
        low = np.asarray(action_low, dtype=np.float64)
        high = np.asarray(action_high, dtype=np.float64)
        self.center = (high + low) / 2.0
        self.scale = (high - low) / 2.0

    def _heads(self, states, cache=False):
        out = self.trunk.forward(states, cache=cache)
        mu = out[:, : self.action_dim]
        raw = out[:, self.action_dim :]
        return mu, np.clip(raw, LOG_STD_MIN, LOG_STD_MAX), raw

    def sample_with_noise(self, states, noise, cache=False):
        """Sample with caller-supplied standard-normal noise (testable path)."""
        mu, log_sigma, raw = self._heads(states, cache=cache)
        actions, logp, t = squash_with_noise(mu, log_sigma, noise, self.center, self.scale)
        if cache:
            mask = (raw >= LOG_STD_MIN) & (raw <= LOG_STD_MAX)
            return actions, logp, SampleCache(noise, t, np.exp(log_sigma), mask)
        return actions, logp

    def sample_batch(self, states, rng, cache=False):
        """One action per state row; (B, D) -> actions (B, A), logp (B,)."""
        noise = rng.standard_normal((states.shape[0], self.action_dim))
        return self.sample_with_noise(states, noise, cache=cache)

    def sample_candidates(self, state, n, rng):
        """n samples from the distribution at a single state.

        Returns actions (n, A), their log-densities (n,), and the squashed
        distribution mean (A,).
        """
        if n < 1:
            raise ValueError("need n >= 1 candidates")
        mu, log_sigma, _ = self._heads(np.asarray(state, dtype=np.float64)[None, :])
        noise = rng.standard_normal((n, self.action_dim))
        actions, logp, _ = squash_with_noise(mu, log_sigma, noise, self.center, self.scale)
        mean_action = self.center + self.scale * np.tanh(mu[0])
        return actions, logp, mean_action

    def mean_action(self, state):
        """Deterministic (evaluation) action: squashed distribution mean."""
        mu, _, _ = self._heads(np.asarray(state, dtype=np.float64)[None, :])
        return self.center + self.scale * np.tanh(mu[0])

    def backward_sample(self, cache: SampleCache, d_actions, d_logp) -> GradientTape:
        """Backprop upstream grads on (actions, log-densities) to the trunk.

        With fixed noise u: x = mu + sigma*u, a = center + scale*tanh(x),
        d logp/dx = 2 tanh(x), d logp/d log_sigma = -1 (plus the x path),
        da/dx = scale*(1 - tanh(x)^2). The log-std clamp passes gradient
        only inside its range.
        """
        t = cache.tanh_x
        dx = d_actions * self.scale * (1.0 - t * t) + d_logp[:, None] * (2.0 * t)
        d_log_sigma = dx * (cache.sigma * cache.noise) - d_logp[:, None]
        d_out = np.concatenate([dx, d_log_sigma * cache.clamp_mask], axis=1)
        return self.trunk.backward(d_out)


class TwinCritics:
    """Two independent Q networks with soft-updated target copies."""

    def __init__(self, state_dim, action_dim, hidden, *, rng):
        sizes = (state_dim + action_dim, *hidden, 1)
        self.q1 = Mlp(sizes, "relu", rng=rng)
        self.q2 = Mlp(sizes, "relu", rng=rng)
        self.q1_target = self.q1.clone()
        self.q2_target = self.q2.clone()

    @staticmethod
    def _join(states, actions):
        return np.concatenate([states, actions], axis=1)

    def q_pair(self, states, actions, cache=False):
        x = self._join(states, actions)
        return self.q1.forward(x, cache=cache)[:, 0], self.q2.forward(x, cache=cache)[:, 0]

    def q_min(self, states, actions):
        q1, q2 = self.q_pair(states, actions)
        return np.minimum(q1, q2)

    def target_min(self, states, actions):
        x = self._join(states, actions)
        return np.minimum(self.q1_target.forward(x)[:, 0], self.q2_target.forward(x)[:, 0])

    def min_with_action_grad(self, states, actions, upstream):
        """min(Q1, Q2) plus d(upstream . qmin)/d actions.

        Per row only the smaller critic receives gradient; ties go to Q1.
        """
        q1, q2 = self.q_pair(states, actions, cache=True)
        take1 = q1 <= q2
        d1 = self.q1.input_gradient((upstream * take1)[:, None])
        d2 = self.q2.input_gradient((upstream * ~take1)[:, None])
        d_actions = (d1 + d2)[:, states.shape[1]:]
        return np.minimum(q1, q2), d_actions

    def soft_update_targets(self, tau):
        soft_update(self.q1_target, self.q1, tau)
        soft_update(self.q2_target, self.q2, tau)


class Temperature:
    """Learned entropy coefficient alpha = exp(log_alpha) > 0."""

    def __init__(self, target_entropy: float, lr: float, log_alpha_init: float = 0.0):
        self.target_entropy = float(target_entropy)
        self._log_alpha = np.array([float(log_alpha_init)])
        self.opt = Adam(1, lr)

    @property
    def log_alpha(self) -> float:
        return float(self._log_alpha[0])

    @log_alpha.setter
    def log_alpha(self, value: float) -> None:
        self._log_alpha[0] = value

    @property
    def alpha(self) -> float:
        return float(np.exp(self._log_alpha[0]))

    def update_from_logps(self, logps) -> float:
        """Gradient step on -log_alpha * mean(logp + target_entropy)."""
        err = float(np.mean(logps) + self.target_entropy)
        loss = -self.log_alpha * err
        self.opt.step(self._log_alpha, np.array([-err]))
        np.clip(self._log_alpha, LOG_ALPHA_MIN, LOG_ALPHA_MAX, out=self._log_alpha)
        return loss


class SacAgent:
    """Bundles policy, critics, temperature, and their optimizers."""

    def __init__(self, state_dim, action_dim, action_low, action_high, *,
                 policy_hidden=(32, 32), critic_hidden=(32, 32),
                 gamma=0.99, tau=0.005, lr_actor=3e-4, lr_critic=3e-4, lr_alpha=3e-4,
                 target_entropy=None, rng):
        if not 0.0 <= gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {gamma}")
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.gamma = gamma
        self.tau = tau
        self.policy = SquashedGaussianPolicy(state_dim, action_dim, policy_hidden,
                                             action_low, action_high, rng=rng)
        self.critics = TwinCritics(state_dim, action_dim, critic_hidden, rng=rng)
        self.policy_opt = Adam(self.policy.trunk.n_params, lr_actor)
        self.critic_opts = (Adam(self.critics.q1.n_params, lr_critic),
                            Adam(self.critics.q2.n_params, lr_critic))
        if target_entropy is None:
            target_entropy = -float(action_dim)
        self.temperature = Temperature(target_entropy, lr_alpha)
        self.updates = 0

    def critic_target(self, batch: Batch, rng) -> np.ndarray:
        """Soft TD target: r + gamma*(1-terminal)*(min Q' - alpha*logp) at s'."""
        a_next, logp_next = self.policy.sample_batch(batch.next_states, rng)
        q_next = self.critics.target_min(batch.next_states, a_next)
        soft_value = q_next - self.temperature.alpha * logp_next
        return batch.rewards + self.gamma * (1.0 - batch.terminals) * soft_value

    def update_critics(self, batch: Batch, rng, target_fn=None) -> float:
        """MSE step on both critics toward the (given or default) target."""
        y = (target_fn or self.critic_target)(batch, rng)
        x = TwinCritics._join(batch.states, batch.actions)
        n = len(batch)
        total = 0.0
        for net, opt in zip((self.critics.q1, self.critics.q2), self.critic_opts):
            q = net.forward(x, cache=True)[:, 0]
            err = q - y
            total += float(np.mean(err * err))
            optimizer_step(net, net.backward((2.0 * err / n)[:, None]), opt)
        loss = total / 2.0
        if not math.isfinite(loss):
            raise NumericalError(f"critic loss is not finite ({loss})")
        self.critics.soft_update_targets(self.tau)
        return loss

    def update_actor(self, batch: Batch, rng) -> float:
        """Gradient step on mean(alpha*logp(a|s) - min Q(s, a)), a reparameterized."""
        actions, logp, cache = self.policy.sample_batch(batch.states, rng, cache=True)
        n = len(batch)
        alpha = self.temperature.alpha
        q_min, d_actions = self.critics.min_with_action_grad(
            batch.states, actions, upstream=np.full(n, -1.0 / n))
        loss = float(np.mean(alpha * logp - q_min))
        if not math.isfinite(loss):
            raise NumericalError(f"actor loss is not finite ({loss})")
        tape = self.policy.backward_sample(cache, d_actions, np.full(n, alpha / n))
        optimizer_step(self.policy.trunk, tape, self.policy_opt)
        return loss

    def update_temperature(self, batch: Batch, rng) -> float:
        _, logp = self.policy.sample_batch(batch.states, rng)
        return self.temperature.update_from_logps(logp)

    def update(self, batch: Batch, rng, target_fn=None) -> dict[str, float]:
        """One full update round: critics, then actor, then temperature."""
        losses = {
            "critic_loss": self.update_critics(batch, rng, target_fn=target_fn),
            "actor_loss": self.update_actor(batch, rng),
            "temperature_loss": self.update_temperature(batch, rng),
            "alpha": self.temperature.alpha,
        }
        self.updates += 1
        return losses

    def eval_action(self, state):
        return self.policy.mean_action(state)

    def save(self, path) -> None:
        nets = {"policy": self.policy.trunk, "q1": self.critics.q1, "q2": self.critics.q2,
                "q1_target": self.critics.q1_target, "q2_target": self.critics.q2_target}
        meta = {"kind": "sac_agent", "gamma": self.gamma, "tau": self.tau,
                "target_entropy": self.temperature.target_entropy,
                "nets": {k: {"sizes": list(v.sizes), "hidden_activation": v.hidden_activation}
                         for k, v in nets.items()}}
        arrays = {k + "_theta": v.theta for k, v in nets.items()}
        arrays["log_alpha"] = np.array([self.temperature.log_alpha])
        arrays["updates"] = np.array([self.updates], dtype=np.int64)
        arrays["action_center"] = self.policy.center
        arrays["action_scale"] = self.policy.scale
        write_container(path, meta, arrays)

    def load_params(self, path) -> None:
        """Restore parameters into an agent built with the same architecture."""
        meta, arrays = read_container(path)
        if meta.get("kind") != "sac_agent":
            raise ValueError(f"{path}: container does not hold a SAC agent")
        for name, net in (("policy", self.policy.trunk), ("q1", self.critics.q1),
                          ("q2", self.critics.q2), ("q1_target", self.critics.q1_target),
                          ("q2_target", self.critics.q2_target)):
            saved = meta["nets"][name]
            if tuple(saved["sizes"]) != net.sizes:
                raise ValueError(f"checkpoint {name} sizes {saved['sizes']} != {net.sizes}")
            net.theta[:] = arrays[name + "_theta"]
        self.temperature.log_alpha = float(arrays["log_alpha"][0])
        self.updates = int(arrays["updates"][0])
