"""Diagnostic environments.

Bimodal: a single-state, one-step episodic task whose reward over the action
axis has a suboptimal peak at -1 (height 1.0) and an optimal peak at +1
(height 1.5), both with width 0.2. Because episodes are one step long, the
immediate reward is exactly the optimal action-value, which makes the task a
direct probe of whether an agent's action proposal finds the global maximum.

Pendulum: classic torque-limited swing-up. Semi-implicit Euler integration
(velocity first), velocity clipped to [-8, 8], torque to [-2, 2], observation
(cos theta, sin theta, thetadot), reward penalizing angle from upright,
velocity, and torque. Episodes truncate at 200 steps and never terminate
naturally, so bootstrapping continues through the time limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import ContractError

__all__ = [
    "EnvSpec",
    "StepResult",
    "BimodalEnv",
    "PendulumEnv",
    "bimodal_reward",
    "make_env",
    "ENV_NAMES",
]


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    max_episode_steps: int


@dataclass(frozen=True)
class StepResult:
    obs: np.ndarray
    reward: float
    terminal: bool  # natural end: no bootstrapping past this transition
    truncated: bool  # time limit only: bootstrapping continues


# -- Bimodal -----------------------------------------------------------------

_PEAKS = ((-1.0, 1.0), (1.0, 1.5))
_PEAK_WIDTH = 0.2


def bimodal_reward(action) -> np.ndarray:
    """Two-Gaussian reward over the action axis; clips into [-2, 2] first.

    Accepts scalars or arrays and broadcasts.
    """
    a = np.clip(np.asarray(action, dtype=np.float64), -2.0, 2.0)
    total = np.zeros_like(a)
    for center, height in _PEAKS:
        total = total + height * np.exp(-((a - center) ** 2) / (2.0 * _PEAK_WIDTH**2))
    return total


class BimodalEnv:
    """Single state, one action, episode ends immediately."""

    def __init__(self):
        self.spec = EnvSpec(
            name="bimodal",
            obs_dim=1,
            action_dim=1,
            action_low=np.array([-2.0]),
            action_high=np.array([2.0]),
            max_episode_steps=1,
        )
        self._live = False

    def reset(self, rng=None) -> np.ndarray:
        self._live = True
        return np.zeros(1)

    def step(self, action) -> StepResult:
        if not self._live:
            raise ContractError("step called on a finished episode; reset first")
        self._live = False
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.shape != (1,):
            raise ContractError(f"action must be 1-dimensional, got shape {a.shape}")
        return StepResult(
            obs=np.zeros(1),
            reward=float(bimodal_reward(a[0])),
            terminal=True,
            truncated=False,
        )


# -- Pendulum ----------------------------------------------------------------

_GRAVITY = 10.0
_MASS = 1.0
_LENGTH = 1.0
_DT = 0.05
_MAX_SPEED = 8.0
_MAX_TORQUE = 2.0
_EPISODE_STEPS = 200


def _wrap_angle(theta):
    return ((theta + np.pi) % (2.0 * np.pi)) - np.pi


def pendulum_dynamics(theta, thetadot, torque):
    """One integrator step; broadcasts over arrays.

    Returns (theta', thetadot', reward). The reward is charged on the state
    before integration, with angle 0 upright. Velocity updates before position
    (semi-implicit Euler) and is clipped to [-MAX_SPEED, MAX_SPEED].
    """
    theta = np.asarray(theta, dtype=np.float64)
    thetadot = np.asarray(thetadot, dtype=np.float64)
    u = np.clip(np.asarray(torque, dtype=np.float64), -_MAX_TORQUE, _MAX_TORQUE)
    angle = _wrap_angle(theta)
    reward = -(angle**2 + 0.1 * thetadot**2 + 0.001 * u**2)
    accel = (3.0 * _GRAVITY / (2.0 * _LENGTH)) * np.sin(theta) + (
        3.0 / (_MASS * _LENGTH**2)
    ) * u
    new_thetadot = np.clip(thetadot + accel * _DT, -_MAX_SPEED, _MAX_SPEED)
    new_theta = theta + new_thetadot * _DT
    return new_theta, new_thetadot, reward


def pendulum_obs(theta, thetadot):
    return np.stack(
        [np.cos(theta), np.sin(theta), np.asarray(thetadot, dtype=np.float64)], axis=-1
    )


class PendulumEnv:
    """Torque-limited swing-up with a 200-step time limit."""

    def __init__(self):
        self.spec = EnvSpec(
            name="pendulum",
            obs_dim=3,
            action_dim=1,
            action_low=np.array([-_MAX_TORQUE]),
            action_high=np.array([_MAX_TORQUE]),
            max_episode_steps=_EPISODE_STEPS,
        )
        self._theta = 0.0
        self._thetadot = 0.0
        self._t = 0
        self._live = False

    def reset(self, rng=None) -> np.ndarray:
        if rng is None:
            rng = np.random.default_rng()
        self._theta = float(rng.uniform(-np.pi, np.pi))
        self._thetadot = float(rng.uniform(-1.0, 1.0))
        self._t = 0
        self._live = True
        return pendulum_obs(self._theta, self._thetadot)

    @property
    def state(self):
        return self._theta, self._thetadot

    def step(self, action) -> StepResult:
        if not self._live:
            raise ContractError("step called on a finished episode; reset first")
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.shape != (1,):
            raise ContractError(f"action must be 1-dimensional, got shape {a.shape}")
        self._theta, self._thetadot, reward = (
            float(x) for x in pendulum_dynamics(self._theta, self._thetadot, a[0])
        )
        self._t += 1
        truncated = self._t >= _EPISODE_STEPS
        if truncated:
            self._live = False
        return StepResult(
            obs=pendulum_obs(self._theta, self._thetadot),
            reward=float(reward),
            terminal=False,
            truncated=truncated,
        )


ENV_NAMES = ("bimodal", "pendulum")


def make_env(name: str):
    if name == "bimodal":
        return BimodalEnv()
    if name == "pendulum":
        return PendulumEnv()
    raise ContractError(f"unknown environment {name!r}; choose from {ENV_NAMES}")
