"""Reference access policies and the one-slot / l-slot scheduler."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment

from dmca.env.core import Decision, DmcaEnv
from dmca.errors import ConfigError, InfeasibleError
from dmca.metrics import Trajectory

OP1 = "op1"  # LSM: minimise total |Δ| after satisfaction
OP2 = "op2"  # BSM: maximise total Δ after satisfaction
ONE_SLOT = "one-slot"
L_SLOT = "l-slot"
ENUMERATION_LIMIT = 10  # channels; above this the assignment solver is used


def criterion_for(mode: str) -> str:
    return {"lsm": OP1, "bsm": OP2, OP1: OP1, OP2: OP2}[mode]


@dataclass(frozen=True)
class PolicyMode:
    criterion: str = OP1
    cadence: str = ONE_SLOT
    horizon: int = 5  # l, used by the l-slot cadence
    lag: int = 0

    def __post_init__(self) -> None:
        if self.criterion not in (OP1, OP2):
            raise ConfigError(f"unknown criterion {self.criterion!r}")
        if self.cadence not in (ONE_SLOT, L_SLOT):
            raise ConfigError(f"unknown cadence {self.cadence!r}")
        if self.horizon < 1 or self.lag < 0:
            raise ConfigError("need horizon >= 1 and lag >= 0")

    @property
    def period(self) -> int:
        return 1 if self.cadence == ONE_SLOT else self.horizon


def random_policy(M: int, K: int, rng: np.random.Generator) -> Decision:
    if K > M:
        raise InfeasibleError(f"cannot give {K} users distinct channels out of {M}")
    return Decision(tuple(rng.choice(M, size=K, replace=False)))


@lru_cache(maxsize=64)
def _injections(M: int, N: int) -> np.ndarray:
    """All injective maps of N users into M channels, in lexicographic order."""
    return np.array(list(itertools.permutations(range(M), N)), dtype=np.int64).reshape(-1, N)


def _exact_key(chosen: np.ndarray, reqs: np.ndarray, criterion: str) -> float:
    # correctly rounded sums: equal real-valued objectives compare equal
    if criterion == OP1:
        # |r - q| enters as the pair (r, -q) or (q, -r) so fsum rounds only once
        terms = []
        for r, q in zip(chosen, reqs):
            r, q = float(r), float(q)
            terms += (r, -q) if r >= q else (q, -r)
        return -math.fsum(terms)
    return math.fsum(float(r) for r in chosen)  # Σq is common to every candidate


def _enumerate(rates: np.ndarray, reqs: np.ndarray, criterion: str) -> tuple[int, ...]:
    perms = _injections(rates.size, reqs.size)
    chosen = rates[perms]
    sat = np.sum(chosen >= reqs, axis=1)
    cand = np.flatnonzero(sat == sat.max())
    if criterion == OP1:
        score = -np.sum(np.abs(chosen[cand] - reqs), axis=1)
    else:
        score = np.sum(chosen[cand], axis=1)
    slack = 1e-9 * (np.max(np.abs(score)) + 1.0)
    near = cand[score >= score.max() - slack]
    keys = [_exact_key(rates[perms[i]], reqs, criterion) for i in near]
    best = max(keys)
    first = next(i for i, k in zip(near, keys) if k == best)  # lexicographically smallest
    return tuple(int(c) for c in perms[first])


def _assign(rates: np.ndarray, reqs: np.ndarray, criterion: str) -> tuple[int, ...]:
    delta = rates[None, :] - reqs[:, None]  # (N, M)
    secondary = np.abs(delta) if criterion == OP1 else -delta
    spread = float(np.max(secondary) - np.min(secondary))
    big = reqs.size * (spread + 1.0) * 4.0
    cost = secondary - big * (delta >= 0)
    rows, cols = linear_sum_assignment(cost)
    out = np.empty(reqs.size, dtype=np.int64)
    out[rows] = cols
    return tuple(int(c) for c in out)


def exhaustive_policy(rates, requirements, criterion: str = OP1, method: str = "auto") -> tuple[int, ...]:
    """Two-step optimum for the real users: maximise the number served, then
    minimise Σ|Δ| (OP1) or maximise ΣΔ (OP2) over every user among those
    assignments. Exact ties go to the lexicographically smallest decision.
    """
    rates = np.asarray(rates, dtype=np.float64)
    reqs = np.asarray(requirements, dtype=np.float64)
    if reqs.size > rates.size:
        raise InfeasibleError(f"{reqs.size} users but only {rates.size} channels")
    if not (np.all(np.isfinite(rates)) and np.all(np.isfinite(reqs))):
        raise ValueError("rates and requirements must be finite")
    if criterion not in (OP1, OP2):
        raise ConfigError(f"unknown criterion {criterion!r}")
    if reqs.size == 0:
        return ()
    if method == "enumerate" or (method == "auto" and rates.size <= ENUMERATION_LIMIT):
        return _enumerate(rates, reqs, criterion)
    if method in ("assignment", "auto"):
        return _assign(rates, reqs, criterion)
    raise ConfigError(f"unknown method {method!r}")


def fill_virtual(real_channels: tuple[int, ...], K: int, M: int) -> Decision:
    """Give virtual user slots the lowest channels the real users left free."""
    used = set(real_channels)
    spare = [m for m in range(M) if m not in used]
    return Decision(tuple(real_channels) + tuple(spare[: K - len(real_channels)]))


class RandomPolicy:
    name = "random"

    def __init__(self, seed: int = 0) -> None:
        self.rng = np.random.default_rng(seed)

    def decide(self, env: DmcaEnv, t: int) -> Decision:
        return random_policy(env.channels, env.k, self.rng)


class ExhaustivePolicy:
    name = "exhaustive"

    def __init__(self, criterion: str = OP1) -> None:
        self.criterion = criterion

    def decide(self, env: DmcaEnv, t: int) -> Decision:
        real = env.real_mask
        chosen = exhaustive_policy(env.rates[t], env.requirement_rates(t)[real], self.criterion)
        return fill_virtual(chosen, env.k, env.channels)


def schedule(policy, env: DmcaEnv, mode: PolicyMode, T: int, start: int = 0) -> Trajectory:
    """Run ``policy`` over slots start..start+T-1.

    The decision formed at slot t (from slot-t observations) executes at slot
    t + lag. With the l-slot cadence decisions are formed at start, start+l,
    ... and held in between.
    """
    if T < 1:
        raise ConfigError("horizon must be >= 1")
    results, decisions = [], []
    decision = None
    for i in range(T):
        t = start + i
        if i % mode.period == 0:
            decision = policy.decide(env, t)
        results.append(env.evaluate(t + mode.lag, decision))
        decisions.append(decision)
    return Trajectory.from_results(results, decisions, env.real_mask)
