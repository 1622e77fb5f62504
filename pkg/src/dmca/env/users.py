"""User request model: delay sensitivity, personalised requirement rates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from dmca.env.channel import ChannelConfig, channel_rate
from dmca.errors import ConfigError

LSM = "lsm"
BSM = "bsm"


def delay_sensitivity(tau_limit: float, tau_real: float) -> float:
    """Map a tolerance gap (seconds) to a sensitivity in (0, 1)."""
    return 0.5 - math.atan(tau_limit - tau_real) / math.pi


def ppqos_factor(sensitivity, beta):
    return 2.0 * sensitivity + beta * (1.0 - 2.0 * sensitivity)


def ppqos_rate(sensitivity, beta, base):
    """Requirement felt by a user: ``(2λ + β(1 − 2λ)) · base``."""
    return ppqos_factor(sensitivity, beta) * base


@dataclass
class UserProfile:
    sensitivity: float
    beta: float = 0.8
    virtual: bool = False
    mode: str = LSM
    cache_capacity: float = math.inf
    cache_fill: float = 0.0

    def __post_init__(self) -> None:
        # 1.00 appears in published sensitivity lists, so the upper end is closed
        if not 0.0 < self.sensitivity <= 1.0:
            raise ConfigError(f"delay sensitivity must lie in (0, 1], got {self.sensitivity}")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError("beta must lie in [0, 1]")
        if self.mode not in (LSM, BSM):
            raise ConfigError(f"unknown streaming mode {self.mode!r}")

    @classmethod
    def from_delays(cls, tau_limit: float, tau_real: float, **kw) -> "UserProfile":
        return cls(sensitivity=delay_sensitivity(tau_limit, tau_real), **kw)

    @property
    def factor(self) -> float:
        return 0.0 if self.virtual else ppqos_factor(self.sensitivity, self.beta)

    def requirement(self, base):
        return self.factor * np.asarray(base)


class RequirementGenerator:
    """Per-user requirement factors xi_n(t), held constant for ``hold`` slots.

    Each hold block draws xi uniformly in [xi_low, xi_high] (gain-magnitude
    units); the base requirement is ``weight * B_m * log2(1 + xi^2 P_m / σ²)``.
    """

    def __init__(
        self,
        xi_low: float,
        xi_high: float,
        hold: int = 5,
        weight: float = 0.9,
        seed: int = 0,
    ) -> None:
        if not 0 <= xi_low <= xi_high:
            raise ConfigError("need 0 <= xi_low <= xi_high")
        if hold < 1:
            raise ConfigError("hold must be >= 1")
        if not 0.0 < weight <= 1.0:
            raise ConfigError("requirement weight must lie in (0, 1]")
        self.xi_low, self.xi_high = xi_low, xi_high
        self.hold, self.weight = hold, weight
        self.rng = np.random.default_rng(seed)

    def factors(self, slots: int, users: int, start: int = 0) -> np.ndarray:
        """xi table of shape (slots, users); blocks are aligned to absolute slot 0."""
        first_block = start // self.hold
        last_block = (start + slots - 1) // self.hold
        blocks = self.rng.uniform(self.xi_low, self.xi_high, (last_block - first_block + 1, users))
        idx = (np.arange(start, start + slots) // self.hold) - first_block
        return blocks[idx]

    def base_rates(self, xi: np.ndarray, cfg: ChannelConfig) -> np.ndarray:
        return self.weight * channel_rate(xi, cfg)
