"""Uniform-replay transition store backed by preallocated arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import ContractError

__all__ = ["Transition", "TransitionBatch", "ReplayBuffer"]


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass(frozen=True)
class TransitionBatch:
    """Column-major batch ready for vectorized updates."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray

    def __len__(self) -> int:
        return self.states.shape[0]


class ReplayBuffer:
    """Fixed-capacity ring; oldest transition is overwritten first.

    Sampling is uniform with replacement over the current contents and draws
    only from the rng handed to sample(), keeping run determinism in the
    caller's hands.
    """

    def __init__(self, capacity: int, obs_dim: int, action_dim: int):
        if capacity < 1:
            raise ContractError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._states = np.empty((capacity, obs_dim))
        self._actions = np.empty((capacity, action_dim))
        self._rewards = np.empty(capacity)
        self._next_states = np.empty((capacity, obs_dim))
        self._terminals = np.empty(capacity, dtype=bool)
        self._size = 0
        self._cursor = 0

    def __len__(self) -> int:
        return self._size

    def push(self, t: Transition) -> None:
        state = np.asarray(t.state, dtype=np.float64)
        action = np.asarray(t.action, dtype=np.float64)
        next_state = np.asarray(t.next_state, dtype=np.float64)
        if not (
            np.isfinite(state).all()
            and np.isfinite(action).all()
            and np.isfinite(next_state).all()
            and np.isfinite(t.reward)
        ):
            raise ContractError("transitions must be finite")
        i = self._cursor
        self._states[i] = state
        self._actions[i] = action
        self._rewards[i] = t.reward
        self._next_states[i] = next_state
        self._terminals[i] = t.terminal
        self._cursor = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch: int, rng) -> TransitionBatch:
        if self._size == 0:
            raise ContractError("cannot sample from an empty buffer")
        if batch < 1:
            raise ContractError(f"batch must be >= 1, got {batch}")
        idx = rng.integers(0, self._size, size=batch)
        return TransitionBatch(
            states=self._states[idx].copy(),
            actions=self._actions[idx].copy(),
            rewards=self._rewards[idx].copy(),
            next_states=self._next_states[idx].copy(),
            terminals=self._terminals[idx].copy(),
        )

    def contents(self) -> TransitionBatch:
        """Every stored transition, oldest eviction order not preserved."""
        return TransitionBatch(
            states=self._states[: self._size].copy(),
            actions=self._actions[: self._size].copy(),
            rewards=self._rewards[: self._size].copy(),
            next_states=self._next_states[: self._size].copy(),
            terminals=self._terminals[: self._size].copy(),
        )
