"""Ornstein-Uhlenbeck exploration noise."""

from __future__ import annotations

import numpy as np


class OUNoise:
    """x <- x + theta (mu - x) + sigma N(0, 1), one draw per call."""

    def __init__(
        self,
        size: int,
        theta: float = 0.15,
        sigma: float = 0.2,
        mu: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> None:
        self.size, self.theta, self.sigma, self.mu = size, theta, sigma, mu
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.state = np.full(size, mu, dtype=np.float64)

    def reset(self) -> None:
        self.state = np.full(self.size, self.mu, dtype=np.float64)

    def sample(self) -> np.ndarray:
        drift = self.theta * (self.mu - self.state)
        shock = self.sigma * self.rng.standard_normal(self.size) if self.sigma else 0.0
        self.state = self.state + drift + shock
        return self.state.copy()
