"""Command line entry point: ``dmca <subcommand> --config FILE [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from dmca.baselines import L_SLOT, ONE_SLOT
from dmca.cpm import ChannelPredictor, write_prediction_log
from dmca.env import write_trace
from dmca.errors import CheckpointError, ConfigError, DataError, DmcaError
from dmca.harness import pipeline as pl
from dmca.harness.config import ExperimentConfig, dump_config, load_config
from dmca.metrics import summarize, write_metrics, write_trajectory

log = logging.getLogger("dmca")

EXIT_CONFIG = 2
EXIT_CHECKPOINT = 3
EXIT_DATA = 4
EXIT_OTHER = 1
LOG_ENV = "DMCA_LOG_LEVEL"


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    out = Path(args.out or cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _trace(cfg: ExperimentConfig, seed: int):
    trace = pl.make_trace(cfg, seed)
    pl.check_length(cfg, trace)
    return trace


def _bundle(cfg: ExperimentConfig, trace, seed: int, out: Path, load: bool):
    """Prediction bundle from saved predictors (``load``) or freshly pretrained ones."""
    if not pl.wants_prediction(cfg):
        return None
    predictors = None
    if load:
        predictors = []
        for m in range(trace.channels):
            path = out / f"cpm_{m}.params"
            if not path.exists():
                raise CheckpointError(f"predictor checkpoint not found: {path} (run pretrain-cpm first)")
            predictors.append(ChannelPredictor.load(path, cfg.cpm))
    return pl.predictor_bundle(cfg, trace, seed, predictors)


def cmd_gen_trace(args, cfg, seed, out) -> None:
    trace = pl.make_trace(cfg, seed)
    path = out / "trace.csv"
    write_trace(path, trace, pl.header(cfg, seed))
    log.info("wrote %s (%d slots x %d channels)", path, trace.slots, trace.channels)


def cmd_pretrain_cpm(args, cfg, seed, out) -> None:
    trace = _trace(cfg, seed)
    hdr = pl.header(cfg, seed)
    lines = [f"# {k}={v}" for k, v in hdr.items()] + ["channel,iteration,train_loss,val_loss,val_nmse"]
    for m, (pred, res) in enumerate(pl.pretrain_predictors(cfg, trace, seed)):
        pred.save(out / f"cpm_{m}.params", dict(hdr, channel=m))
        for i, (tl, vl) in enumerate(zip(res.train_loss, res.val_loss)):
            lines.append(f"{m},{i},{float(tl)!r},{float(vl)!r},{float(res.val_nmse)!r}")
    (out / "cpm_pretrain.csv").write_text("\n".join(lines) + "\n")
    log.info("pretrained %d predictors into %s", trace.channels, out)


def cmd_train(args, cfg, seed, out) -> None:
    trace = _trace(cfg, seed)
    bundle = _bundle(cfg, trace, seed, out, load=args.reuse_cpm)
    if bundle is not None:
        for m, run in enumerate(bundle.runs):
            write_prediction_log(out / f"cpm_online_{m}.csv", run.records, pl.header(cfg, seed, channel=m))
    env = pl.make_env(cfg, trace, seed, bundle.table if bundle else None)
    result = pl.train_agent(cfg, env, seed)
    hdr = pl.header(cfg, seed)
    pl.save_agent(out / "agent", result, hdr)
    pl.write_episode_log(out / "episodes.csv", result.episodes, hdr)
    log.info("trained %d episodes; median steps last 10: %s", len(result.episodes), sorted(result.steps[-10:]))


def cmd_eval(args, cfg, seed, out) -> None:
    trace = _trace(cfg, seed)
    agent = scaler = None
    bundle = None
    if args.method == "learning":
        if not Path(f"{out / 'agent'}.actor.params").exists():
            raise CheckpointError(f"agent checkpoint not found under {out} (run train first)")
        bundle = _bundle(cfg, trace, seed, out, load=args.reuse_cpm)
    env = pl.make_env(cfg, trace, seed, bundle.table if bundle else None)
    if args.method == "learning":
        agent, scaler = pl.load_agent(out / "agent", cfg, env)
    policy = pl.make_policy(args.method, cfg, seed, agent, scaler)
    lag = cfg.run.lag if args.lag is None else args.lag
    traj = pl.evaluate(policy, env, cfg, args.cadence, lag)
    hdr = dict(pl.header(cfg, seed), method=args.method, mode=args.cadence, lag=lag)
    stem = f"{args.method}_{args.cadence}_lag{lag}"
    write_trajectory(out / f"trajectory_{stem}.csv", traj, hdr)
    row = summarize(traj, args.method, args.cadence, lag, cfg.run.t_one)
    write_metrics(out / f"metrics_{stem}.csv", [row], hdr)
    print(f"{stem}: kappa={row.kappa:.3f} mean_throughput={row.mean_throughput:.1f}")


def cmd_compare(args, cfg, seed, out) -> None:
    trace = _trace(cfg, seed)
    agent = scaler = None
    bundle = None
    env = None
    if "learning" in cfg.run.methods:
        prefix = out / "agent"
        bundle = _bundle(cfg, trace, seed, out, load=args.reuse_cpm)
        env = pl.make_env(cfg, trace, seed, bundle.table if bundle else None)
        if Path(f"{prefix}.actor.params").exists():
            agent, scaler = pl.load_agent(prefix, cfg, env)
        elif args.train:
            result = pl.train_agent(cfg, env, seed)
            pl.save_agent(prefix, result, pl.header(cfg, seed))
            pl.write_episode_log(out / "episodes.csv", result.episodes, pl.header(cfg, seed))
            agent, scaler = result.agent, result.scaler
        else:
            raise CheckpointError(f"agent checkpoint not found under {out} (run train first or pass --train)")
    env = env or pl.make_env(cfg, trace, seed)
    res = pl.compare(cfg, env, seed, agent, scaler, out)
    for r in res.rows:
        print(f"{r.method:>10} {r.mode:>8} lag{r.lag}: kappa={r.kappa:.3f} S_ta={r.s_ta_norm:.3f} rho={r.mean_throughput:.1f}")
    if args.plots:
        from dmca.harness.plots import plot_compare

        plot_compare(out)


def cmd_converge(args, cfg, seed, out) -> None:
    seeds = cfg.converge.seeds if args.seed is None else (seed,)
    cells = pl.convergence_study(cfg, seeds=seeds)
    hdr = pl.header(cfg, seed, seeds=",".join(map(str, seeds)))
    pl.write_convergence(out / "convergence.csv", cells, cfg.agent.episodes, hdr)
    pl.write_convergence_steps(out / "convergence_steps.csv", cells, hdr)
    for key, med in sorted(pl.median_convergence(cells, cfg.agent.episodes).items()):
        fd, lr, pred = key
        print(f"doppler={fd:g} lr={lr:g} prediction={int(pred)}: median convergence episode {med:g}")
    if args.plots:
        from dmca.harness.plots import plot_convergence

        plot_convergence(out)


COMMANDS = {
    "gen-trace": cmd_gen_trace,
    "pretrain-cpm": cmd_pretrain_cpm,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "converge": cmd_converge,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dmca", description="Dynamic multi-channel access experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="INI experiment config")
        s.add_argument("--seed", type=int, default=None, help="overrides [run] seed")
        s.add_argument("--out", default=None, help="output directory (default: [run] out)")
        if name in ("train", "eval", "compare"):
            s.add_argument("--reuse-cpm", action="store_true", help="load predictors saved by pretrain-cpm")
        if name == "eval":
            s.add_argument("--method", choices=("random", "exhaustive", "learning"), default="exhaustive")
            s.add_argument("--cadence", choices=(ONE_SLOT, L_SLOT), default=ONE_SLOT)
            s.add_argument("--lag", type=int, default=None)
        if name == "compare":
            s.add_argument("--train", action="store_true", help="train an agent when no checkpoint exists")
        if name in ("compare", "converge"):
            s.add_argument("--plots", action="store_true", help="render PNGs from the CSVs (needs matplotlib)")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=os.environ.get(LOG_ENV, "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        cfg = load_config(args.config)
        seed = cfg.run.seed if args.seed is None else args.seed
        out = _out_dir(args, cfg)
        (out / "config.ini").write_text(f"# config={cfg.hash()}\n# seed={seed}\n" + dump_config(cfg))
        COMMANDS[args.command](args, cfg, seed, out)
    except ConfigError as exc:
        print(f"dmca: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"dmca: checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except DataError as exc:
        print(f"dmca: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DmcaError as exc:
        print(f"dmca: {exc}", file=sys.stderr)
        return EXIT_OTHER
    return 0


if __name__ == "__main__":
    sys.exit(main())
