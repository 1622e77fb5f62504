"""Actor-critic learner with the prediction-augmented critic target."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from dmca.agent.noise import OUNoise
from dmca.agent.replay import Batch
from dmca.errors import ConfigError, PoisonedUpdateError
from dmca.nn import MLP, ParamSet, make_optimizer

ACTION_LOW = 1e-6
ACTION_HIGH = 1.0 - 1e-6


@dataclass
class AgentHyperParams:
    gamma: float = 0.92
    tau: float = 0.01
    capacity: int = 2000
    batch_size: int = 32  # I: transitions sampled per update
    warmup: int = 64  # updates start once the pool holds this many
    episodes: int = 300
    max_steps: int = 3000
    length: int = 5  # prediction length l
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    hidden: int = 128
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_mu: float = 0.0
    noise_decay: float = 1.0  # sigma multiplier applied after each episode
    optimizer: str = "adam"
    clip_norm: float = 5.0
    discount_predicted: bool = False
    logit_penalty: float = 0.0  # L2 weight on the actor's pre-sigmoid outputs
    r_target: float = 1.2  # calibrated for rate_unit = 1e6
    stop_run: int = 5  # consecutive steps above r_target

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError("tau must lie in (0, 1]")
        if self.capacity < max(self.batch_size, 1) or self.batch_size < 1:
            raise ConfigError("replay capacity must be at least the batch size")
        if self.episodes < 1 or self.max_steps < 1 or self.length < 0:
            raise ConfigError("episodes, max_steps must be >= 1 and length >= 0")
        if self.actor_lr < 0 or self.critic_lr < 0:
            raise ConfigError("learning rates must be nonnegative")
        if self.logit_penalty < 0:
            raise ConfigError("logit_penalty must be nonnegative")


def pddpg_target(rewards, q_next, q_pred, confidence, gamma: float, discount_predicted: bool = False) -> np.ndarray:
    """y = r + (1 - ϱ) γ Q'(S', μ'(S')) + ϱ Q'(S_pre, μ'(S_pre))."""
    rho = np.asarray(confidence, dtype=np.float64)
    pred_weight = rho * gamma if discount_predicted else rho
    return np.asarray(rewards) + (1.0 - rho) * gamma * np.asarray(q_next) + pred_weight * np.asarray(q_pred)


class PddpgAgent:
    def __init__(self, state_dim: int, action_dim: int, hp: AgentHyperParams, seed: int = 0) -> None:
        self.state_dim, self.action_dim, self.hp = state_dim, action_dim, hp
        self.rng = np.random.default_rng(seed)
        h = hp.hidden
        self.actor = MLP([state_dim, h, h, action_dim], ["relu", "relu", "sigmoid"], self.rng, prefix="actor")
        self.critic = MLP([state_dim + action_dim, h, h, 1], ["relu", "relu", "linear"], self.rng, prefix="critic")
        self.actor_target = MLP(self.actor.sizes, ["relu", "relu", "sigmoid"], prefix="actor")
        self.critic_target = MLP(self.critic.sizes, ["relu", "relu", "linear"], prefix="critic")
        self.actor_target.params.assign(self.actor.params)
        self.critic_target.params.assign(self.critic.params)
        self.actor_opt = make_optimizer(hp.optimizer, self.actor.params, hp.actor_lr, hp.clip_norm)
        self.critic_opt = make_optimizer(hp.optimizer, self.critic.params, hp.critic_lr, hp.clip_norm)
        self.noise = OUNoise(action_dim, hp.ou_theta, hp.ou_sigma, hp.ou_mu, self.rng)

    # -- acting ------------------------------------------------------------
    def policy(self, state) -> np.ndarray:
        a = self.actor(np.asarray(state, dtype=np.float64))
        return np.clip(a, ACTION_LOW, ACTION_HIGH)

    def select_action(self, state, explore: bool = True) -> np.ndarray:
        a = self.actor(np.asarray(state, dtype=np.float64))
        if explore:
            a = a + self.noise.sample()
        return np.clip(a, ACTION_LOW, ACTION_HIGH)

    def critic_value(self, states, actions, target: bool = False) -> np.ndarray:
        net = self.critic_target if target else self.critic
        x = np.concatenate([np.atleast_2d(states), np.atleast_2d(actions)], axis=1)
        return net(x)[:, 0]

    # -- learning ----------------------------------------------------------
    def targets(self, batch: Batch) -> np.ndarray:
        q_next = self.critic_value(batch.next_states, self.actor_target(batch.next_states), target=True)
        q_pred = self.critic_value(batch.pred_states, self.actor_target(batch.pred_states), target=True)
        return pddpg_target(batch.rewards, q_next, q_pred, batch.confidence, self.hp.gamma, self.hp.discount_predicted)

    def update_critic(self, batch: Batch, y: np.ndarray) -> float:
        """One step on mean (Q(s, a) - y)^2; returns the loss before the step."""
        x = np.concatenate([batch.states, batch.actions], axis=1)
        q, rec = self.critic.forward(x)
        err = q[:, 0] - y
        loss = float(np.mean(err * err))
        if not np.isfinite(loss):
            warnings.warn("non-finite critic loss; update skipped", RuntimeWarning, stacklevel=2)
            return loss
        self.critic.params.zero_grad()
        self.critic.backward(rec, (2.0 * err / err.size)[:, None])
        self._step(self.critic_opt)
        return loss

    def action_gradient(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """dQ/da of the online critic at (s, a), per sample."""
        x = np.concatenate([states, actions], axis=1)
        q, rec = self.critic.forward(x)
        dx = self.critic.backward(rec, np.ones_like(q))
        self.critic.params.zero_grad()  # only the input gradient is wanted here
        return dx[:, self.state_dim :]

    def update_actor(self, batch: Batch) -> float:
        """Ascent step on mean Q(s, μ(s)) - c·mean|z|², z the pre-sigmoid output.

        The penalty (c = hp.logit_penalty, 0 by default) keeps the sigmoid out
        of saturation, where ∂Q/∂a can no longer move the policy.
        """
        a, rec = self.actor.forward(batch.states)
        dq_da = self.action_gradient(batch.states, a)
        self.actor.params.zero_grad()
        dz = None
        if self.hp.logit_penalty > 0:
            dz = 2.0 * self.hp.logit_penalty * MLP.output_logits(rec) / len(batch)
        self.actor.backward(rec, -dq_da / len(batch), dz)
        norm = self.actor.params.grad_norm()
        self._step(self.actor_opt)
        return norm

    @staticmethod
    def _step(opt) -> None:
        try:
            opt.step()
        except PoisonedUpdateError as exc:
            warnings.warn(str(exc), RuntimeWarning, stacklevel=3)

    def soft_update(self, tau: float | None = None) -> None:
        tau = self.hp.tau if tau is None else tau
        soft_update(self.actor_target.params, self.actor.params, tau)
        soft_update(self.critic_target.params, self.critic.params, tau)

    def learn(self, batch: Batch) -> tuple[float, float]:
        y = self.targets(batch)
        loss = self.update_critic(batch, y)
        norm = self.update_actor(batch)
        self.soft_update()
        return loss, norm

    # -- persistence -------------------------------------------------------
    def save(self, prefix: str, meta: dict | None = None) -> list[str]:
        paths = []
        for tag, net in (("actor", self.actor), ("critic", self.critic)):
            path = f"{prefix}.{tag}.params"
            net.params.save(path, meta)
            paths.append(path)
        return paths

    def load(self, prefix: str) -> None:
        for tag, net, target in (("actor", self.actor, self.actor_target), ("critic", self.critic, self.critic_target)):
            loaded = ParamSet.load(f"{prefix}.{tag}.params")
            net.params.assign(loaded)
            target.params.assign(loaded)


def soft_update(target: ParamSet, online: ParamSet, tau: float) -> None:
    """θ' <- τ θ + (1 - τ) θ'."""
    if not 0.0 < tau <= 1.0:
        raise ConfigError("tau must lie in (0, 1]")
    target.blend_from(online, tau)
