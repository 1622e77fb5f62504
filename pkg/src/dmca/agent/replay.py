"""Transitions and the FIFO experience pool."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dmca.errors import ConfigError


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray  # raw continuous action in (0, 1)^K
    reward: float
    next_state: np.ndarray
    pred_state: np.ndarray  # S_pre(t+1); zeros when the predictor is off
    confidence: float = 0.0  # ϱ(t) at storage time


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    pred_states: np.ndarray
    confidence: np.ndarray

    def __len__(self) -> int:
        return self.rewards.size


def stack(transitions: list[Transition]) -> Batch:
    return Batch(
        states=np.stack([t.state for t in transitions]),
        actions=np.stack([t.action for t in transitions]),
        rewards=np.array([t.reward for t in transitions], dtype=np.float64),
        next_states=np.stack([t.next_state for t in transitions]),
        pred_states=np.stack([t.pred_state for t in transitions]),
        confidence=np.array([t.confidence for t in transitions], dtype=np.float64),
    )


class ReplayBuffer:
    """Ring buffer; once full, each push overwrites the oldest entry."""

    def __init__(self, capacity: int, rng: np.random.Generator | None = None) -> None:
        if capacity < 1:
            raise ConfigError("replay capacity must be >= 1")
        self.capacity = capacity
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._items: list[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, tr: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(tr)
        else:
            self._items[self._next] = tr
        self._next = (self._next + 1) % self.capacity

    def oldest_first(self) -> list[Transition]:
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._next :] + self._items[: self._next]

    def sample(self, n: int) -> Batch:
        """``n`` distinct transitions, or the whole pool (shuffled) if smaller."""
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        size = len(self._items)
        idx = self.rng.choice(size, size=min(n, size), replace=False)
        return stack([self._items[i] for i in idx])
