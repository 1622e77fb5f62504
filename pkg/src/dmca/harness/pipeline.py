"""Experiment building blocks shared by the CLI and the acceptance suite.

Trace layout: slots ``[0, P)`` pretrain the channel predictors (P may be 0
when prediction is off), ``[P, P + train_slots)`` train the agent, and the
remainder is used for evaluation. The environment covers ``[P, T)``.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dmca.agent import AgentPolicy, PddpgAgent, StateScaler, TrainResult, train, write_episode_log
from dmca.baselines import L_SLOT, ONE_SLOT, ExhaustivePolicy, PolicyMode, RandomPolicy, criterion_for, schedule
from dmca.cpm import ChannelPredictor, build_prediction_table, write_prediction_log
from dmca.env import (
    ChannelConfig,
    ChannelTrace,
    DmcaEnv,
    PredictionTable,
    RequirementGenerator,
    generate_synthetic_trace,
    make_users,
    read_trace,
)
from dmca.errors import CheckpointError, ConfigError, DataError
from dmca.harness.config import ExperimentConfig
from dmca.nn import ParamSet
from dmca.metrics import (
    MetricsRow,
    Trajectory,
    normalize_minmax,
    summarize,
    write_metrics,
    write_trajectory,
)

log = logging.getLogger(__name__)


def header(cfg: ExperimentConfig, seed: int, **extra) -> dict:
    return {"config": cfg.hash(), "seed": seed, **extra}


# -- world construction ----------------------------------------------------
def make_trace(cfg: ExperimentConfig, seed: int) -> ChannelTrace:
    tc = cfg.trace
    if tc.source == "file":
        trace = read_trace(tc.path)
        if trace.channels != cfg.env.channels:
            raise ConfigError(f"trace has {trace.channels} channels, config says {cfg.env.channels}")
        return trace
    return generate_synthetic_trace(
        tc.kind,
        tc.slots,
        cfg.env.channels,
        seed,
        scale=tc.scale,
        paths=tc.paths,
        doppler=None if tc.doppler < 0 else tc.doppler,
        v=tc.v,
        fc=tc.fc,
        fs=tc.fs,
        spread_db=tc.spread_db,
        noise=tc.noise,
        phi=tc.phi,
        cv=tc.cv,
    )


def channel_config(cfg: ExperimentConfig) -> ChannelConfig:
    e = cfg.env
    return ChannelConfig.from_paper(e.channels, e.channel_bandwidth, e.total_power_dbm, e.noise_dbm)


def required_slots(cfg: ExperimentConfig) -> int:
    r = cfg.run
    return r.pretrain_slots + r.train_slots + r.eval_slots + max(r.lags + (r.lag,)) + 2


def check_length(cfg: ExperimentConfig, trace: ChannelTrace) -> None:
    need = required_slots(cfg)
    if trace.slots < need:
        raise DataError(f"trace has {trace.slots} slots but the run layout needs {need}")


def make_env(
    cfg: ExperimentConfig,
    trace: ChannelTrace,
    seed: int,
    predictions: PredictionTable | None = None,
) -> DmcaEnv:
    e = cfg.env
    P = cfg.run.pretrain_slots
    window = trace.window(P, trace.slots)
    users = make_users(list(e.sensitivities), e.users, beta=e.beta, mode=e.mode)
    gen = RequirementGenerator(e.xi_low, e.xi_high, hold=e.hold, weight=e.weight, seed=seed + 7919)
    sens = e.sensitivities or (0.5,)
    return DmcaEnv(
        window,
        channel_config(cfg),
        users,
        gen,
        predictions=predictions,
        seed=seed,
        cache_factor=e.cache_factor,
        sensitivity_range=(min(sens), max(sens)),
    )


def train_range(cfg: ExperimentConfig) -> tuple[int, int]:
    """Training slots in environment coordinates."""
    return 0, cfg.run.train_slots


def eval_start(cfg: ExperimentConfig) -> int:
    return cfg.run.train_slots


# -- predictor -------------------------------------------------------------
@dataclass
class PredictorBundle:
    predictors: list[ChannelPredictor]
    table: PredictionTable
    runs: list = field(default_factory=list)
    val_nmse: list[float] = field(default_factory=list)


def pretrain_predictors(cfg: ExperimentConfig, trace: ChannelTrace, seed: int) -> list[tuple[ChannelPredictor, object]]:
    P = cfg.run.pretrain_slots
    if P < cfg.cpm.window:
        raise ConfigError(f"pretrain_slots ({P}) must be at least the IL window ({cfg.cpm.window})")
    out = []
    for m in range(trace.channels):
        pred = ChannelPredictor(cfg.cpm, seed=seed * 1000 + m)
        result = pred.pretrain(trace.gains[:P, m])
        out.append((pred, result))
    return out


def predictor_bundle(cfg: ExperimentConfig, trace: ChannelTrace, seed: int, predictors=None) -> PredictorBundle:
    val = []
    if predictors is None:
        trained = pretrain_predictors(cfg, trace, seed)
        predictors = [p for p, _ in trained]
        val = [r.val_nmse for _, r in trained]
    table, predictors, runs = build_prediction_table(trace.gains, cfg.cpm, cfg.run.pretrain_slots, seed, predictors)
    return PredictorBundle(predictors, table, runs, val)


def wants_prediction(cfg: ExperimentConfig) -> bool:
    return cfg.run.use_prediction and cfg.run.pretrain_slots > 0


# -- agent -----------------------------------------------------------------
def train_agent(
    cfg: ExperimentConfig,
    env: DmcaEnv,
    seed: int,
    use_prediction: bool | None = None,
    lag: int | None = None,
) -> TrainResult:
    use_prediction = wants_prediction(cfg) if use_prediction is None else use_prediction
    return train(
        env,
        cfg.agent,
        mode=cfg.env.mode,
        reward_params=cfg.reward,
        rate_unit=cfg.env.rate_unit,
        lag=cfg.run.lag if lag is None else lag,
        use_prediction=use_prediction,
        slot_range=train_range(cfg),
        seed=seed,
    )


def save_agent(prefix: Path, result: TrainResult, meta: dict) -> None:
    meta = dict(meta, offset=repr(result.scaler.offset), scale=repr(result.scaler.scale))
    result.agent.save(str(prefix), meta)


def load_agent(prefix: Path, cfg: ExperimentConfig, env: DmcaEnv) -> tuple[PddpgAgent, StateScaler]:
    actor = Path(f"{prefix}.actor.params")
    if not actor.exists():
        raise CheckpointError(f"agent checkpoint not found: {actor}")
    agent = PddpgAgent(env.state_dim, env.k, cfg.agent)
    agent.load(str(prefix))
    meta = ParamSet.read_meta(actor)
    return agent, StateScaler(float(meta["offset"]), float(meta["scale"]))


# -- evaluation ------------------------------------------------------------
def make_policy(method: str, cfg: ExperimentConfig, seed: int, agent=None, scaler=None, use_prediction=None):
    if method == "random":
        return RandomPolicy(seed)
    if method == "exhaustive":
        return ExhaustivePolicy(criterion_for(cfg.env.mode))
    if method == "learning":
        if agent is None:
            raise CheckpointError("learning policy needs a trained agent")
        use_prediction = wants_prediction(cfg) if use_prediction is None else use_prediction
        return AgentPolicy(agent, scaler, use_prediction)
    raise ConfigError(f"unknown method {method!r}")


def evaluate(policy, env: DmcaEnv, cfg: ExperimentConfig, cadence: str, lag: int, T: int | None = None) -> Trajectory:
    env.reset()
    mode = PolicyMode(criterion_for(cfg.env.mode), cadence, cfg.run.horizon, lag)
    return schedule(policy, env, mode, cfg.run.eval_slots if T is None else T, start=eval_start(cfg))


@dataclass
class CompareResult:
    rows: list[MetricsRow]
    trajectories: dict[tuple[str, str, int], Trajectory]
    files: list[Path]


def compare(
    cfg: ExperimentConfig,
    env: DmcaEnv,
    seed: int,
    agent=None,
    scaler=None,
    out: Path | None = None,
) -> CompareResult:
    """All methods × {one-slot, l-slot} × lags; min-max S_ta across the 12 cells."""
    rows, trajs, files = [], {}, []
    hdr = header(cfg, seed)
    for method in cfg.run.methods:
        for cadence in (ONE_SLOT, L_SLOT):
            for lag in cfg.run.lags:
                policy = make_policy(method, cfg, seed, agent, scaler)
                traj = evaluate(policy, env, cfg, cadence, lag)
                trajs[(method, cadence, lag)] = traj
                rows.append(summarize(traj, method, cadence, lag, cfg.run.t_one))
                if out is not None:
                    path = out / f"trajectory_{method}_{cadence}_lag{lag}.csv"
                    write_trajectory(path, traj, dict(hdr, method=method, mode=cadence, lag=lag))
                    files.append(path)
    finite = {i: r.s_ta_raw for i, r in enumerate(rows) if np.isfinite(r.s_ta_raw)}
    if finite:
        for i, v in normalize_minmax(finite).items():
            rows[i].s_ta_norm = v
    if out is not None:
        path = out / "metrics.csv"
        write_metrics(path, rows, hdr)
        files.append(path)
        path = out / "throughput.csv"
        write_throughput(path, trajs, hdr)
        files.append(path)
    return CompareResult(rows, trajs, files)


def write_throughput(path: Path, trajs: dict, hdr: dict) -> None:
    keys = sorted(trajs)
    lines = [f"# {k}={v}" for k, v in hdr.items()]
    lines.append("slot," + ",".join(f"{m}_{c}_lag{l}" for m, c, l in keys))
    first = trajs[keys[0]]
    series = [trajs[k].throughput for k in keys]
    for i in range(len(first)):
        lines.append(f"{i}," + ",".join(repr(float(s[i])) for s in series))
    path.write_text("\n".join(lines) + "\n")


# -- convergence -----------------------------------------------------------
def convergence_episode(steps, length: int, window: int = 10) -> int | None:
    """First episode opening a run of ``window`` episodes that each stop within ``length`` steps."""
    run = 0
    for i, s in enumerate(steps):
        run = run + 1 if s <= length else 0
        if run >= window:
            return i - window + 1
    return None


@dataclass
class ConvergenceCell:
    doppler: float
    lr: float
    prediction: bool
    seed: int
    steps: list[int]
    episode: int | None  # None = censored


def convergence_study(cfg: ExperimentConfig, dopplers=None, learning_rates=None, seeds=None) -> list[ConvergenceCell]:
    """Train from scratch per (doppler, lr, ±prediction, seed) and record steps-to-stop.

    The learning rate sets the critic rate; the actor rate keeps its
    configured ratio to it.
    """
    cc = cfg.converge
    dopplers = cc.dopplers if dopplers is None else dopplers
    learning_rates = cc.learning_rates if learning_rates is None else learning_rates
    seeds = cc.seeds if seeds is None else seeds
    ratio = cfg.agent.actor_lr / cfg.agent.critic_lr
    cells = []
    for fd in dopplers:
        for seed in seeds:
            trace_cfg = cfg.replace(trace=dataclasses.replace(cfg.trace, doppler=fd))
            trace = make_trace(trace_cfg, seed)
            check_length(trace_cfg, trace)
            bundle = predictor_bundle(trace_cfg, trace, seed) if cfg.run.pretrain_slots > 0 else None
            for lr in learning_rates:
                agent_cfg = dataclasses.replace(cfg.agent, critic_lr=lr, actor_lr=lr * ratio)
                run_cfg = trace_cfg.replace(agent=agent_cfg)
                for pred in (False, True):
                    if pred and bundle is None:
                        continue
                    env = make_env(run_cfg, trace, seed, bundle.table if bundle else None)
                    res = train_agent(run_cfg, env, seed, use_prediction=pred)
                    steps = res.steps.tolist()
                    ep = convergence_episode(steps, cfg.agent.length, cc.window)
                    cells.append(ConvergenceCell(fd, lr, pred, seed, steps, ep))
                    log.info("doppler=%g lr=%g prediction=%s seed=%d -> %s", fd, lr, pred, seed, ep)
    return cells


def median_convergence(cells: list[ConvergenceCell], episodes: int) -> dict[tuple[float, float, bool], float]:
    """Median convergence episode per cell; censored runs count as ``episodes``."""
    groups: dict = {}
    for c in cells:
        groups.setdefault((c.doppler, c.lr, c.prediction), []).append(episodes if c.episode is None else c.episode)
    return {k: float(np.median(v)) for k, v in groups.items()}


def write_convergence(path: Path, cells: list[ConvergenceCell], episodes: int, hdr: dict) -> None:
    lines = [f"# {k}={v}" for k, v in hdr.items()]
    lines.append("doppler,lr,prediction,seed,convergence_episode,censored")
    for c in cells:
        ep = episodes if c.episode is None else c.episode
        lines.append(f"{float(c.doppler)!r},{float(c.lr)!r},{int(c.prediction)},{c.seed},{ep},{int(c.episode is None)}")
    path.write_text("\n".join(lines) + "\n")


def write_convergence_steps(path: Path, cells: list[ConvergenceCell], hdr: dict) -> None:
    lines = [f"# {k}={v}" for k, v in hdr.items()]
    lines.append("doppler,lr,prediction,seed,episode,steps,steps_median10")
    for c in cells:
        s = np.array(c.steps, dtype=float)
        for i, v in enumerate(c.steps):
            smooth = float(np.median(s[max(0, i - 9) : i + 1]))
            lines.append(f"{float(c.doppler)!r},{float(c.lr)!r},{int(c.prediction)},{c.seed},{i},{v},{smooth!r}")
    path.write_text("\n".join(lines) + "\n")


__all__ = [
    "CompareResult",
    "ConvergenceCell",
    "PredictorBundle",
    "check_length",
    "compare",
    "convergence_episode",
    "convergence_study",
    "evaluate",
    "header",
    "load_agent",
    "make_env",
    "make_policy",
    "make_trace",
    "median_convergence",
    "predictor_bundle",
    "save_agent",
    "train_agent",
    "write_convergence",
    "write_episode_log",
    "write_prediction_log",
]
