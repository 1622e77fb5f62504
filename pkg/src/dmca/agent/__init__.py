"""Prediction-augmented actor-critic agent."""

from dmca.agent.noise import OUNoise
from dmca.agent.pddpg import ACTION_HIGH, ACTION_LOW, AgentHyperParams, PddpgAgent, pddpg_target, soft_update
from dmca.agent.replay import Batch, ReplayBuffer, Transition, stack
from dmca.agent.train import (
    AgentPolicy,
    EpisodeRecord,
    StateScaler,
    TrainResult,
    observe_vector,
    train,
    write_episode_log,
)

__all__ = [
    "ACTION_HIGH",
    "ACTION_LOW",
    "AgentHyperParams",
    "AgentPolicy",
    "Batch",
    "EpisodeRecord",
    "OUNoise",
    "PddpgAgent",
    "ReplayBuffer",
    "StateScaler",
    "TrainResult",
    "Transition",
    "observe_vector",
    "pddpg_target",
    "soft_update",
    "stack",
    "train",
    "write_episode_log",
]
