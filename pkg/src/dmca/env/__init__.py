"""Channel traces, user model and the stepping environment."""

from dmca.env.channel import (
    ChannelConfig,
    ChannelTrace,
    channel_rate,
    dbm_to_mw,
    generate_synthetic_trace,
    normalized_doppler,
    read_trace,
    write_trace,
)
from dmca.env.core import (
    Decision,
    DmcaEnv,
    PredictionTable,
    StepResult,
    SystemState,
    assemble_state,
    decode_action,
    make_users,
)
from dmca.env.users import BSM, LSM, RequirementGenerator, UserProfile, delay_sensitivity, ppqos_factor, ppqos_rate

__all__ = [
    "BSM",
    "LSM",
    "ChannelConfig",
    "ChannelTrace",
    "Decision",
    "DmcaEnv",
    "PredictionTable",
    "RequirementGenerator",
    "StepResult",
    "SystemState",
    "UserProfile",
    "assemble_state",
    "channel_rate",
    "dbm_to_mw",
    "decode_action",
    "delay_sensitivity",
    "generate_synthetic_trace",
    "make_users",
    "normalized_doppler",
    "ppqos_factor",
    "ppqos_rate",
    "read_trace",
    "write_trace",
]
