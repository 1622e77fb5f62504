"""Episode loop: explore, store, replay, update, stop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from dmca.agent.pddpg import AgentHyperParams, PddpgAgent
from dmca.agent.replay import ReplayBuffer, Transition
from dmca.env.core import Decision, DmcaEnv, decode_action
from dmca.errors import ConfigError
from dmca.reward import RewardParams, base_reward, final_reward

log = logging.getLogger(__name__)


@dataclass
class EpisodeRecord:
    episode: int
    start: int
    steps: int
    mean_reward: float
    final_reward: float
    rho_mean: float  # mean delivered throughput of served real users, bits/s
    stopped: bool  # True when the reward criterion ended the episode
    truncated: bool  # True when the trace ran out before L steps


@dataclass
class TrainResult:
    agent: PddpgAgent
    scaler: StateScaler
    episodes: list[EpisodeRecord] = field(default_factory=list)
    critic_loss: list[float] = field(default_factory=list)

    @property
    def steps(self) -> np.ndarray:
        return np.array([e.steps for e in self.episodes])


@dataclass(frozen=True)
class StateScaler:
    """Affine map ``(x - offset) / scale`` applied to every rate in the state."""

    offset: float = 0.0
    scale: float = 1e6

    @classmethod
    def from_env(cls, env: DmcaEnv, lo: int = 0, hi: int | None = None) -> "StateScaler":
        rates = env.rates[lo:hi]
        std = float(np.std(rates))
        return cls(float(np.mean(rates)), std if std > 0 else 1.0)

    def __call__(self, vec: np.ndarray) -> np.ndarray:
        return (vec - self.offset) / self.scale


class AgentPolicy:
    """Deterministic access policy from a trained actor."""

    name = "learning"

    def __init__(self, agent: PddpgAgent, scaler: StateScaler, use_prediction: bool = True) -> None:
        self.agent, self.scaler, self.use_prediction = agent, scaler, use_prediction

    def decide(self, env: DmcaEnv, t: int) -> Decision:
        state = observe_vector(env, t, self.scaler, self.use_prediction)
        return decode_action(self.agent.policy(state), env.channels)


def observe_vector(env: DmcaEnv, t: int, scaler: StateScaler, use_prediction: bool = True) -> np.ndarray:
    """Agent input: the scaled state vector.

    With prediction switched off the look-ahead block is zero-filled so the
    layout (and the network shape) does not change.
    """
    vec = scaler(env.observe(t).vector())
    if not use_prediction:
        vec[env.channels + env.k :] = 0.0
    return vec


def predicted_vector(env: DmcaEnv, t: int, scaler: StateScaler, use_prediction: bool = True) -> np.ndarray:
    if not use_prediction or env.prediction_length == 0:
        return np.zeros(env.state_dim)
    return scaler(env.predicted_state(t).vector())


def step_reward(env: DmcaEnv, decision: Decision, result, mode: str, rp: RewardParams, rate_unit: float) -> float:
    r = base_reward(mode, result.delta / rate_unit, result.theta, rp)
    return final_reward(decision.collision, r, rp)


def train(
    env: DmcaEnv,
    hp: AgentHyperParams,
    *,
    mode: str = "lsm",
    reward_params: RewardParams = RewardParams(),
    rate_unit: float = 1e6,
    scaler: StateScaler | None = None,
    lag: int = 0,
    use_prediction: bool = True,
    slot_range: tuple[int, int] | None = None,
    seed: int = 0,
    agent: PddpgAgent | None = None,
    callback: Callable[[int, TrainResult], None] | None = None,
) -> TrainResult:
    """Train from scratch (or continue ``agent``) over ``slot_range`` of the trace.

    Each episode starts at a random slot. It ends when the final reward
    exceeds ``hp.r_target`` on ``hp.stop_run`` consecutive steps (and at least
    ``hp.length`` steps have run), after ``hp.max_steps`` steps, or when the
    trace runs out. ``callback(episode, result)`` runs after every episode.
    """
    lo, hi = slot_range if slot_range is not None else (0, env.slots)
    if not 0 <= lo < hi <= env.slots:
        raise ConfigError(f"bad training slot range {lo}..{hi}")
    # slot t needs t + lag and t + 1 inside the range
    last_start = hi - 2 - lag
    if last_start < lo:
        raise ConfigError("training range too short for the requested lag")
    rng = np.random.default_rng(seed)
    agent = agent or PddpgAgent(env.state_dim, env.k, hp, seed=seed)
    buffer = ReplayBuffer(hp.capacity, np.random.default_rng(rng.integers(2**63)))
    use_prediction = use_prediction and env.predictions is not None
    scaler = scaler or StateScaler.from_env(env, lo, hi)
    result = TrainResult(agent, scaler)
    sigma0 = agent.noise.sigma
    env.reset()

    for ep in range(hp.episodes):
        agent.noise.sigma = sigma0 * hp.noise_decay**ep
        agent.noise.reset()
        start = int(rng.integers(lo, last_start + 1))
        rewards, rho = [], []
        run = 0
        stopped = truncated = False
        for step in range(hp.max_steps):
            t = start + step
            if t > last_start:
                truncated = True
                break
            state = observe_vector(env, t, scaler, use_prediction)
            action = agent.select_action(state)
            decision = decode_action(action, env.channels)
            res = env.step(t, decision, lag)
            r = step_reward(env, decision, res, mode, reward_params, rate_unit)
            nxt = observe_vector(env, t + 1, scaler, use_prediction)
            pre = predicted_vector(env, t, scaler, use_prediction)
            conf = env.confidence(t) if use_prediction else 0.0
            buffer.push(Transition(state, action, r, nxt, pre, conf))
            if len(buffer) >= max(hp.warmup, 1):
                loss, _ = agent.learn(buffer.sample(hp.batch_size))
                result.critic_loss.append(loss)
            rewards.append(r)
            rho.append(res.throughput)
            run = run + 1 if r > hp.r_target else 0
            if run >= hp.stop_run and step + 1 >= hp.length:
                stopped = True
                break
        if not rewards:
            truncated = True
        result.episodes.append(
            EpisodeRecord(
                episode=ep,
                start=start,
                steps=len(rewards),
                mean_reward=float(np.mean(rewards)) if rewards else float("nan"),
                final_reward=rewards[-1] if rewards else float("nan"),
                rho_mean=float(np.mean(rho)) if rho else float("nan"),
                stopped=stopped,
                truncated=truncated,
            )
        )
        log.debug("episode %d: %d steps, mean reward %.3f", ep, len(rewards), result.episodes[-1].mean_reward)
        if callback is not None:
            callback(ep, result)
    agent.noise.sigma = sigma0
    return result


def write_episode_log(path: str | Path, episodes: list[EpisodeRecord], header: dict | None = None) -> None:
    lines = [f"# {k}={v}" for k, v in (header or {}).items()]
    lines.append("episode,steps,mean_reward,final_reward,rho_mean")
    for e in episodes:
        lines.append(f"{e.episode},{e.steps},{float(e.mean_reward)!r},{float(e.final_reward)!r},{float(e.rho_mean)!r}")
    Path(path).write_text("\n".join(lines) + "\n")
