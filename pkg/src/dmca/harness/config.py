"""Experiment configuration: an INI file with env / trace / cpm / agent / run sections."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from dmca.agent.pddpg import AgentHyperParams
from dmca.cpm import CpmConfig
from dmca.errors import ConfigError
from dmca.reward import RewardParams

PAPER_SENSITIVITIES = (0.85, 0.95, 0.82, 0.94, 0.63, 1.00, 0.76, 0.91, 0.89, 0.81)


@dataclass
class EnvSection:
    channels: int = 8
    users: int = 3
    sensitivities: tuple[float, ...] = PAPER_SENSITIVITIES[:3]
    beta: float = 0.8
    mode: str = "lsm"
    xi_low: float = 1.5e-7
    xi_high: float = 4e-7
    hold: int = 5
    weight: float = 0.9
    cache_factor: float = 50.0
    rate_unit: float = 1e6  # bits/s per unit of Δ inside the reward
    channel_bandwidth: float = 78125.0
    total_power_dbm: float = 43.0
    noise_dbm: float = -125.0


@dataclass
class TraceSection:
    source: str = "synthetic"  # or "file"
    path: str = ""
    kind: str = "sum-of-sinusoids"
    slots: int = 2000
    scale: float = 1e-6
    paths: int = 16
    doppler: float = 0.005  # normalised f_d / f_s; <0 means derive from v, fc, fs
    v: float = 90.0
    fc: float = 3e9
    fs: float = 200e3
    spread_db: float = 0.0
    noise: float = 0.0
    phi: float = 0.9
    cv: float = 0.3


@dataclass
class RunSection:
    seed: int = 0
    out: str = "runs"
    pretrain_slots: int = 0  # leading slots reserved for CPM pretraining (0 = no predictor)
    train_slots: int = 1500  # agent training range after the pretraining block
    eval_slots: int = 100  # horizon of eval / compare
    lag: int = 0  # decision lag used during training
    horizon: int = 5  # l for the l-slot cadence
    lags: tuple[int, ...] = (0, 1)
    methods: tuple[str, ...] = ("random", "exhaustive", "learning")
    t_one: int = 5
    use_prediction: bool = True


@dataclass
class ConvergeSection:
    dopplers: tuple[float, ...] = (0.005, 0.05)
    learning_rates: tuple[float, ...] = (1e-3, 3e-3)
    seeds: tuple[int, ...] = (0, 1, 2)
    window: int = 10  # consecutive short episodes that define convergence


@dataclass
class ExperimentConfig:
    env: EnvSection = field(default_factory=EnvSection)
    trace: TraceSection = field(default_factory=TraceSection)
    cpm: CpmConfig = field(default_factory=CpmConfig)
    agent: AgentHyperParams = field(default_factory=AgentHyperParams)
    reward: RewardParams = field(default_factory=RewardParams)
    run: RunSection = field(default_factory=RunSection)
    converge: ConvergeSection = field(default_factory=ConvergeSection)

    def __post_init__(self) -> None:
        if self.env.users > self.env.channels:
            raise ConfigError("K (users) must not exceed M (channels)")
        if len(self.env.sensitivities) > self.env.users:
            raise ConfigError("more delay sensitivities than user slots")
        if self.env.mode not in ("lsm", "bsm"):
            raise ConfigError(f"unknown mode {self.env.mode!r}")
        if self.trace.source not in ("synthetic", "file"):
            raise ConfigError(f"unknown trace source {self.trace.source!r}")
        if self.trace.source == "file" and not Path(self.trace.path).exists():
            raise ConfigError(f"trace file not found: {self.trace.path}")
        if self.env.rate_unit <= 0:
            raise ConfigError("rate_unit must be positive")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        """sha256 of the canonical JSON form, first 16 hex digits."""
        blob = json.dumps(self.as_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **sections) -> "ExperimentConfig":
        return dataclasses.replace(self, **sections)


SECTIONS = {
    "env": EnvSection,
    "trace": TraceSection,
    "cpm": CpmConfig,
    "agent": AgentHyperParams,
    "reward": RewardParams,
    "run": RunSection,
    "converge": ConvergeSection,
}


def _coerce(raw: str, current, where: str):
    try:
        if isinstance(current, bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(raw)
            return low in ("true", "yes", "1", "on")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            proto = current[0] if current else ""
            return tuple(_coerce(x, proto, where) for x in items)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(current).__name__}") from None


def _build(cls, values: dict[str, str], section: str):
    obj = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in values.items():
        if key not in names:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        kwargs[key] = _coerce(raw, getattr(obj, key), f"[{section}] {key}")
    return cls(**kwargs)


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    unknown = set(parser.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    parts = {}
    for name, cls in SECTIONS.items():
        values = dict(parser.items(name)) if parser.has_section(name) else {}
        parts[name] = _build(cls, values, name)
    return ExperimentConfig(**parts)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text())


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for name in SECTIONS:
        lines.append(f"[{name}]")
        for key, value in dataclasses.asdict(getattr(cfg, name)).items():
            if isinstance(value, (tuple, list)):
                value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
