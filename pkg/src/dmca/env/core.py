"""The simulated access environment: state assembly, action decoding, stepping."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from dmca.env.channel import ChannelConfig, ChannelTrace, channel_rate
from dmca.env.users import BSM, LSM, RequirementGenerator, UserProfile
from dmca.errors import ConfigError, EncodingError, EndOfTrace, InvalidDecisionError


@dataclass(frozen=True)
class Decision:
    """One channel index (0-based) per user slot."""

    channels: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))

    @property
    def collision(self) -> bool:
        return len(set(self.channels)) != len(self.channels)

    def __len__(self) -> int:
        return len(self.channels)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.channels, dtype=np.int64)


def decode_action(raw, channels: int) -> Decision:
    """Quantise squashed actor outputs in (0, 1) to channel indices."""
    raw = np.asarray(raw, dtype=np.float64).ravel()
    if np.any(~np.isfinite(raw)) or np.any(raw <= 0.0) or np.any(raw >= 1.0):
        raise EncodingError(f"raw actions must lie in the open interval (0, 1): {raw}")
    idx = np.minimum(np.floor(raw * channels).astype(np.int64), channels - 1)
    return Decision(tuple(idx))


@dataclass
class SystemState:
    channel: np.ndarray  # (M,) current rates, bits/s
    users: np.ndarray  # (K,) effective requirement rates, bits/s
    predicted: np.ndarray  # (l, M) predicted rates for t+1..t+l, bits/s

    def vector(self) -> np.ndarray:
        return np.concatenate([self.channel, self.users, self.predicted.ravel()])

    def __len__(self) -> int:
        return self.channel.size + self.users.size + self.predicted.size


def assemble_state(channel_rates, requirement_rates, predicted_rates=None) -> SystemState:
    """Fixed layout ``[S_ch (M), S_user (K), S_pre(t+1) (M), ..., S_pre(t+l) (M)]``."""
    ch = np.asarray(channel_rates, dtype=np.float64)
    us = np.asarray(requirement_rates, dtype=np.float64)
    if predicted_rates is None:
        pre = np.zeros((0, ch.size))
    else:
        pre = np.asarray(predicted_rates, dtype=np.float64).reshape(-1, ch.size)
    return SystemState(ch, us, pre)


@dataclass
class PredictionTable:
    """Channel-gain forecasts issued at each slot.

    ``gains[t, h, m]`` is the forecast for slot ``t + 1 + h`` made at slot
    ``t`` (NaN where no forecast exists). ``confidence[t]`` is ϱ(t).
    """

    gains: np.ndarray  # (T, l, M)
    confidence: np.ndarray  # (T,)

    @property
    def length(self) -> int:
        return self.gains.shape[1]


@dataclass
class StepResult:
    slot: int  # slot whose true rates judged the decision
    delta: np.ndarray  # (K,) R_{A_n}(slot) - R_user,n(slot)
    served: np.ndarray  # (K,) bool, real users only
    rates: np.ndarray  # (K,) rate delivered to each user (0 for collision losers)
    requirements: np.ndarray  # (K,)
    theta: float  # service success rate over real users
    collision: bool
    throughput: float  # sum of delivered rates of served real users
    disconnected: list[int] = field(default_factory=list)
    next_state: SystemState | None = None


class DmcaEnv:
    """Time-slotted K-user, M-channel access environment over a fixed trace.

    Users ``0..N-1`` are real, ``N..K-1`` virtual. On a contested channel the
    lowest-indexed user keeps it; the others receive nothing that slot.
    """

    def __init__(
        self,
        trace: ChannelTrace,
        cfg: ChannelConfig,
        users: list[UserProfile],
        requirements: RequirementGenerator,
        predictions: PredictionTable | None = None,
        seed: int = 0,
        cache_factor: float = 50.0,
        sensitivity_range: tuple[float, float] | None = None,
    ) -> None:
        if trace.channels != cfg.channels:
            raise ConfigError(f"trace has {trace.channels} channels, config says {cfg.channels}")
        if len(users) > cfg.channels:
            raise ConfigError("K must not exceed M")
        seen_virtual = False
        for u in users:
            if seen_virtual and not u.virtual:
                raise ConfigError("virtual users must follow all real users")
            seen_virtual |= u.virtual
        self.trace, self.cfg = trace, cfg
        self.requirements = requirements
        self.predictions = predictions
        self.rates = channel_rate(trace.gains, cfg)
        self.slot_duration = trace.slot_duration
        self.cache_factor = cache_factor
        real = [u.sensitivity for u in users if not u.virtual] or [0.5]
        self.sensitivity_range = sensitivity_range or (min(real), max(real))
        self.seed = seed

        xi = requirements.factors(trace.slots, len(users))
        self._initial = (copy.deepcopy(users), xi)
        if predictions is not None:
            if predictions.gains.shape[0] != trace.slots or predictions.gains.shape[2] != cfg.channels:
                raise ConfigError("prediction table does not match the trace")
            g = np.nan_to_num(predictions.gains, nan=0.0)
            self.predicted_rates = channel_rate(np.maximum(g, 0.0), cfg)
        else:
            self.predicted_rates = np.zeros((trace.slots, 0, cfg.channels))
        self.reset()

    # -- bookkeeping -------------------------------------------------------
    def reset(self) -> None:
        users, xi = self._initial
        self.users = copy.deepcopy(users)
        self.xi = xi.copy()
        self.base = self.requirements.base_rates(self.xi, self.cfg)
        self.rng = np.random.default_rng(self.seed)
        for n, u in enumerate(self.users):
            if u.mode == BSM and not u.virtual and not np.isfinite(u.cache_capacity):
                u.cache_capacity = self._default_capacity(n)

    def _default_capacity(self, n: int) -> float:
        mean_req = float(np.mean(self.users[n].requirement(self.base[:, n])))
        return self.cache_factor * mean_req * self.slot_duration

    @property
    def slots(self) -> int:
        return self.trace.slots

    @property
    def channels(self) -> int:
        return self.cfg.channels

    @property
    def k(self) -> int:
        return len(self.users)

    @property
    def real_mask(self) -> np.ndarray:
        return np.array([not u.virtual for u in self.users])

    @property
    def n_real(self) -> int:
        return int(self.real_mask.sum())

    @property
    def prediction_length(self) -> int:
        return self.predicted_rates.shape[1]

    @property
    def state_dim(self) -> int:
        return self.channels + self.k + self.prediction_length * self.channels

    def _check_slot(self, t: int) -> None:
        if not 0 <= t < self.slots:
            raise EndOfTrace(f"slot {t} outside trace of {self.slots} slots")

    def requirement_rates(self, t: int) -> np.ndarray:
        self._check_slot(t)
        return np.array([u.factor for u in self.users]) * self.base[t]

    def confidence(self, t: int) -> float:
        if self.predictions is None:
            return 0.0
        return float(self.predictions.confidence[t])

    # -- observation / transition ----------------------------------------
    def observe(self, t: int) -> SystemState:
        self._check_slot(t)
        return assemble_state(self.rates[t], self.requirement_rates(t), self.predicted_rates[t])

    def predicted_state(self, t: int) -> SystemState:
        """State for slot t+1 assembled from the forecasts made at slot t.

        Requirements are held at their slot-t values; the last forecast is
        repeated to fill the final look-ahead entry.
        """
        self._check_slot(t)
        pre = self.predicted_rates[t]
        if pre.shape[0] == 0:
            return assemble_state(self.rates[t], self.requirement_rates(t), pre)
        ahead = np.concatenate([pre[1:], pre[-1:]], axis=0)
        return assemble_state(pre[0], self.requirement_rates(t), ahead)

    def evaluate(self, slot: int, decision: Decision) -> StepResult:
        """Judge ``decision`` against the true rates of ``slot`` (advances BSM caches)."""
        self._check_slot(slot)
        ch = decision.as_array()
        if ch.size != self.k:
            raise InvalidDecisionError(f"decision has {ch.size} entries, expected {self.k}")
        if np.any(ch < 0) or np.any(ch >= self.channels):
            raise InvalidDecisionError(f"channel index out of range 0..{self.channels - 1}: {ch}")
        req = self.requirement_rates(slot)
        chan = self.rates[slot][ch]
        delta = chan - req
        loser = np.zeros(self.k, dtype=bool)
        taken: set[int] = set()
        for n, c in enumerate(ch):
            if c in taken:
                loser[n] = True
            taken.add(int(c))
        real = self.real_mask
        delivered = np.where(loser, 0.0, chan)
        served = (delta >= 0) & ~loser & real
        theta = float(served[real].sum() / real.sum()) if real.any() else 1.0
        result = StepResult(
            slot=slot,
            delta=delta,
            served=served,
            rates=delivered,
            requirements=req,
            theta=theta,
            collision=decision.collision,
            throughput=float(delivered[served].sum()),
        )
        for n, u in enumerate(self.users):
            if u.mode != BSM or u.virtual:
                continue
            u.cache_fill += delivered[n] * self.slot_duration
            if u.cache_fill >= u.cache_capacity:
                self._replace_user(n, slot)
                result.disconnected.append(n)
        return result

    def step(self, t: int, decision: Decision, lag: int = 0) -> StepResult:
        """Decision formed from slot-t information, executed at slot t + lag."""
        result = self.evaluate(t + lag, decision)
        if t + 1 < self.slots:
            result.next_state = self.observe(t + 1)
        return result

    def _replace_user(self, n: int, slot: int) -> None:
        lo, hi = self.sensitivity_range
        old = self.users[n]
        self.users[n] = UserProfile(
            sensitivity=float(self.rng.uniform(lo, hi)),
            beta=old.beta,
            mode=old.mode,
        )
        if slot + 1 < self.slots:
            fresh = self.requirements.factors(self.slots - slot - 1, 1, start=slot + 1)[:, 0]
            self.xi[slot + 1 :, n] = fresh
            self.base[slot + 1 :, n] = self.requirements.base_rates(fresh, self.cfg)
        self.users[n].cache_capacity = self._default_capacity(n)


def make_users(
    sensitivities: list[float],
    k: int,
    beta: float = 0.8,
    mode: str = LSM,
    cache_capacity: float | None = None,
) -> list[UserProfile]:
    """Real users from ``sensitivities`` padded with virtual users up to ``k``."""
    if len(sensitivities) > k:
        raise ConfigError("more real users than user slots K")
    cap = np.inf if cache_capacity is None else cache_capacity
    users = [UserProfile(s, beta=beta, mode=mode, cache_capacity=cap) for s in sensitivities]
    users += [UserProfile(0.5, beta=beta, virtual=True, mode=mode) for _ in range(k - len(sensitivities))]
    return users


__all__ = [
    "BSM",
    "LSM",
    "Decision",
    "DmcaEnv",
    "PredictionTable",
    "StepResult",
    "SystemState",
    "assemble_state",
    "decode_action",
    "make_users",
]
