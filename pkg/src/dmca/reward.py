"""Shaped rewards for living (LSM) and buffered (BSM) streaming."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from dmca.env.users import BSM, LSM
from dmca.errors import ConfigError

# the outer exponent of the BSM failure branch is capped here
BSM_EXPONENT_CAP = 50.0


@dataclass(frozen=True)
class RewardParams:
    w1: float = 5.0
    w2: float = 5.0
    w3: float = -100.0
    alpha1: float = 0.5
    alpha2: float = 0.5
    eps: float = 1e-7

    def __post_init__(self) -> None:
        if min(self.w1, self.w2, self.alpha1, self.alpha2, self.eps) <= 0:
            raise ConfigError("w1, w2, alpha1, alpha2 and eps must be positive")
        if self.w3 >= 0:
            raise ConfigError("collision penalty w3 must be negative")


def arccot(x: float) -> float:
    """Inverse cotangent on the (0, pi) branch."""
    return math.pi / 2.0 - math.atan(x)


def _upsilon(delta: np.ndarray, theta: float, eps: float) -> np.ndarray:
    return np.where(delta >= 0, 1.0, theta + eps)


def lsm_reward(delta, theta: float, p: RewardParams = RewardParams()) -> float:
    delta = np.asarray(delta, dtype=np.float64)
    if theta >= 1.0:
        return p.w1 * arccot(p.w2 * float(np.sum(np.arctan(delta))))
    sigma = float(np.sum(np.arctan(np.abs(delta) / _upsilon(delta, theta, p.eps))))
    return theta * p.w1 * arccot(p.w2 * sigma)


def bsm_reward(delta, theta: float, p: RewardParams = RewardParams()) -> float:
    delta = np.asarray(delta, dtype=np.float64)
    if theta >= 1.0:
        lam = float(np.sum(np.arctan(delta)))
        return p.w1 * math.expm1(p.alpha1 * p.w2 * lam)
    inner = p.alpha2 * float(np.sum(delta / _upsilon(delta, theta, p.eps)))
    # keep alpha1 * w2 * exp(inner) <= cap; exp is monotone so ordering survives
    inner = min(inner, math.log(BSM_EXPONENT_CAP / (p.alpha1 * p.w2)))
    gamma = math.exp(inner)
    return theta * p.w1 * math.expm1(p.alpha1 * p.w2 * gamma)


def base_reward(mode: str, delta, theta: float, p: RewardParams = RewardParams()) -> float:
    if mode == LSM:
        return lsm_reward(delta, theta, p)
    if mode == BSM:
        return bsm_reward(delta, theta, p)
    raise ConfigError(f"unknown streaming mode {mode!r}")


def final_reward(collision: bool, r: float, p: RewardParams = RewardParams()) -> float:
    """Collision penalty over all K indices, virtual users included."""
    return p.w3 if collision else r
