"""Desk-scale continuous-control environments.

Three deterministic toy tasks of increasing dimension stand in for the
usual physics-engine benchmarks:

* ``pendulum``      swing-up/balance, D=3, A=1, cost grows away from upright
* ``mountain_car``  underpowered car, D=2, A=1, dense forward-progress reward
* ``point_mass``    2-D mass pushed toward a goal, D=4, A=2, progress reward

All dynamics are fixed-step semi-implicit Euler; the only randomness is the
seeded initial state, so (seed, action sequence) fully determines a
trajectory. Actions outside bounds are clamped, never rejected. Exact state
layouts, units, and reward formulas are documented per class and in the
README.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    max_steps: int


@dataclass
class StepResult:
    next_state: np.ndarray
    reward: float
    terminal: bool   # reached an absorbing state
    truncated: bool  # hit the time limit (not absorbing)


class _Env:
    """Shared episode bookkeeping: step counting, truncation, done guard."""

    spec: EnvSpec

    def __init__(self):
        self._t = 0
        self._done = True

    def reset(self, seed: int) -> np.ndarray:
        self._t = 0
        self._done = False
        self._reset_state(np.random.default_rng(seed))
        return self._observe()

    def step(self, action) -> StepResult:
        if self._done:
            raise RuntimeError("step() called on a finished episode; call reset() first")
        action = np.clip(np.asarray(action, dtype=np.float64).reshape(self.spec.action_dim),
                         self.spec.action_low, self.spec.action_high)
        reward, terminal = self._advance(action)
        self._t += 1
        truncated = not terminal and self._t >= self.spec.max_steps
        self._done = terminal or truncated
        return StepResult(self._observe(), float(reward), terminal, truncated)

    # subclass hooks
    def _reset_state(self, rng: np.random.Generator) -> None:
        raise NotImplementedError

    def _advance(self, action: np.ndarray) -> tuple[float, bool]:
        raise NotImplementedError

    def _observe(self) -> np.ndarray:
        raise NotImplementedError


def _wrap_angle(theta: float) -> float:
    return ((theta + math.pi) % (2.0 * math.pi)) - math.pi


class Pendulum(_Env):
    """Torque-limited pendulum swing-up.

    State: [cos(theta), sin(theta), theta_dot]; theta = 0 is upright,
    theta_dot in rad/s (clamped to +-8). Action: torque in [-2, 2] N*m.
    Reward (computed on the pre-step state):

        r = -(wrap(theta)^2 + 0.1 * theta_dot^2 + 0.001 * torque^2)

    Dynamics (g=10, m=1, l=1, dt=0.05, semi-implicit Euler):

        theta_dot += (1.5 * g * sin(theta) + 3 * torque) * dt
        theta     += theta_dot * dt

    Horizon 200 steps; never terminates, only truncates.
    """

    G = 10.0
    DT = 0.05
    MAX_SPEED = 8.0
    MAX_TORQUE = 2.0

    def __init__(self):
        super().__init__()
        self.spec = EnvSpec("pendulum", 3, 1,
                            np.array([-self.MAX_TORQUE]), np.array([self.MAX_TORQUE]), 200)
        self.theta = 0.0
        self.theta_dot = 0.0

    def _reset_state(self, rng):
        self.theta = rng.uniform(-math.pi, math.pi)
        self.theta_dot = rng.uniform(-1.0, 1.0)

    def reset_to(self, theta: float, theta_dot: float) -> np.ndarray:
        """Place the pendulum at an exact configuration (for probes/oracles)."""
        self._t = 0
        self._done = False
        self.theta = float(theta)
        self.theta_dot = float(theta_dot)
        return self._observe()

    def _advance(self, action):
        u = action[0]
        cost = _wrap_angle(self.theta) ** 2 + 0.1 * self.theta_dot**2 + 0.001 * u**2
        self.theta_dot += (1.5 * self.G * math.sin(self.theta) + 3.0 * u) * self.DT
        self.theta_dot = min(max(self.theta_dot, -self.MAX_SPEED), self.MAX_SPEED)
        self.theta += self.theta_dot * self.DT
        return -cost, False

    def _observe(self):
        return np.array([math.cos(self.theta), math.sin(self.theta), self.theta_dot])


class MountainCar(_Env):
    """Underpowered car in a valley, continuous throttle.

    State: [position, velocity] (position in [-1.2, 0.6], velocity clamped
    to +-0.07). Action: throttle in [-1, 1]. The engine (power 0.0015) is
    weaker than gravity (0.0025), so reaching the goal at position >= 0.45
    requires rocking. Reward is dense forward progress:

        r = 100 * (position' - position) - 0.1 * throttle^2  (+100 at goal)

    Terminates at the goal; horizon 200 steps.
    """

    POWER = 0.0015
    GRAVITY = 0.0025
    GOAL = 0.45

    def __init__(self):
        super().__init__()
        self.spec = EnvSpec("mountain_car", 2, 1, np.array([-1.0]), np.array([1.0]), 200)
        self.position = 0.0
        self.velocity = 0.0

    def _reset_state(self, rng):
        self.position = rng.uniform(-0.6, -0.4)
        self.velocity = 0.0

    def reset_to(self, position: float, velocity: float) -> np.ndarray:
        self._t = 0
        self._done = False
        self.position = float(position)
        self.velocity = float(velocity)
        return self._observe()

    def _advance(self, action):
        force = action[0]
        old_position = self.position
        self.velocity += force * self.POWER - self.GRAVITY * math.cos(3.0 * self.position)
        self.velocity = min(max(self.velocity, -0.07), 0.07)
        self.position += self.velocity
        self.position = min(max(self.position, -1.2), 0.6)
        if self.position <= -1.2 and self.velocity < 0.0:
            self.velocity = 0.0
        reward = 100.0 * (self.position - old_position) - 0.1 * force**2
        terminal = self.position >= self.GOAL
        if terminal:
            reward += 100.0
        return reward, terminal

    def _observe(self):
        return np.array([self.position, self.velocity])


class PointMass(_Env):
    """Force-controlled point mass on a bounded 2-D plane.

    State: [x, y, vx, vy]; positions in [-2, 2] (walls stop motion),
    velocities clamped to +-1. Action: force in [-1, 1]^2, dt = 0.1.
    Spawn box: x, y ~ U(-1.8, -0.8), at rest. Goal at (1.5, 1.5).
    Reward is progress toward the goal:

        r = 10 * (dist - dist') - 0.05 * |force|^2   (+10 inside radius 0.1)

    Terminates within 0.1 of the goal; horizon 120 steps.
    """

    DT = 0.1
    VMAX = 1.0
    ARENA = 2.0
    GOAL = np.array([1.5, 1.5])
    GOAL_RADIUS = 0.1

    def __init__(self):
        super().__init__()
        self.spec = EnvSpec("point_mass", 4, 2, np.array([-1.0, -1.0]), np.array([1.0, 1.0]), 120)
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)

    def _reset_state(self, rng):
        self.pos = rng.uniform(-1.8, -0.8, size=2)
        self.vel = np.zeros(2)

    def reset_to(self, x: float, y: float, vx: float = 0.0, vy: float = 0.0) -> np.ndarray:
        self._t = 0
        self._done = False
        self.pos = np.array([x, y], dtype=np.float64)
        self.vel = np.array([vx, vy], dtype=np.float64)
        return self._observe()

    def _advance(self, action):
        old_dist = float(np.linalg.norm(self.GOAL - self.pos))
        self.vel = np.clip(self.vel + action * self.DT, -self.VMAX, self.VMAX)
        new_pos = self.pos + self.vel * self.DT
        clipped = np.clip(new_pos, -self.ARENA, self.ARENA)
        self.vel[new_pos != clipped] = 0.0  # inelastic walls
        self.pos = clipped
        new_dist = float(np.linalg.norm(self.GOAL - self.pos))
        reward = 10.0 * (old_dist - new_dist) - 0.05 * float(action @ action)
        terminal = new_dist < self.GOAL_RADIUS
        if terminal:
            reward += 10.0
        return reward, terminal

    def _observe(self):
        return np.concatenate([self.pos, self.vel])


_REGISTRY = {"pendulum": Pendulum, "mountain_car": MountainCar, "point_mass": PointMass}

ENV_NAMES = tuple(sorted(_REGISTRY))


def make_env(name: str) -> _Env:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {ENV_NAMES}") from None


def evaluate_policy(env: _Env, policy, episodes: int, seed: int) -> tuple[float, float]:
    """Undiscounted mean and population variance of episode returns.

    ``policy`` maps a state vector to an action vector. Episode seeds are
    drawn as ``rng.integers(2**63)`` from ``default_rng(seed)``, one per
    episode in order, so results are reproducible given ``seed``.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    rng = np.random.default_rng(seed)
    returns = np.zeros(episodes)
    for ep in range(episodes):
        state = env.reset(int(rng.integers(2**63)))
        total = 0.0
        while True:
            result = env.step(policy(state))
            total += result.reward
            state = result.next_state
            if result.terminal or result.truncated:
                break
        returns[ep] = total
    return float(returns.mean()), float(returns.var())


def uniform_random_policy(spec: EnvSpec, rng):
    """Policy that ignores the state and samples actions uniformly in bounds."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)

    def policy(_state):
        return rng.uniform(spec.action_low, spec.action_high)

    return policy


def energy_swingup_controller(state) -> np.ndarray:
    """Hand-tuned pendulum swing-up: pump energy, then catch with PD.

    Serves as a known-good performance reference; not used in training.
    """
    cos_t, sin_t, theta_dot = state
    theta = math.atan2(sin_t, cos_t)
    # total energy about the pivot (I = 1/3, m*g*l/2 = 5); upright target is 5
    energy = theta_dot**2 / 6.0 + 5.0 * cos_t
    if abs(theta) < 0.35 and abs(theta_dot) < 2.5:
        u = -14.0 * theta - 3.0 * theta_dot
    elif abs(theta_dot) < 1e-3:
        u = 2.0  # kick out of the hanging equilibrium
    else:
        u = 1.2 * theta_dot * (5.0 - energy)
    return np.array([min(max(u, -2.0), 2.0)])
