import itertools
from pathlib import Path

import numpy as np
import pytest

from dmca.env import ChannelTrace, write_trace
from dmca.errors import ConfigError
from dmca.harness.cli import EXIT_CHECKPOINT, EXIT_CONFIG, EXIT_DATA, main
from dmca.harness.config import ExperimentConfig, dump_config, load_config, parse_config
from dmca.harness.pipeline import convergence_episode, median_convergence, ConvergenceCell
from dmca.metrics import read_trajectory

ROOT = Path(__file__).resolve().parents[1]

TINY = """
[env]
channels = 5
users = 3
sensitivities = 0.85, 0.95

[trace]
slots = 170
doppler = 0.02

[agent]
episodes = 3
max_steps = 10
hidden = 8
warmup = 8
batch_size = 8
capacity = 64

[run]
train_slots = 60
eval_slots = 100
use_prediction = false
"""


def write_cfg(tmp_path, text=TINY, name="tiny.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_defaults_and_round_trip():
    cfg = ExperimentConfig()
    assert cfg.agent.gamma == 0.92 and cfg.agent.capacity == 2000 and cfg.agent.episodes == 300
    assert cfg.cpm.time_step == 5 and cfg.cpm.conf_max == 0.95
    back = parse_config(dump_config(cfg))
    assert back == cfg and back.hash() == cfg.hash()


@pytest.mark.parametrize("name", ["desk.ini", "paper.ini"])
def test_shipped_configs_parse(name):
    cfg = load_config(ROOT / "configs" / name)
    assert cfg.env.users <= cfg.env.channels


@pytest.mark.parametrize(
    "text",
    [
        "[env]\nusers = 9\nchannels = 4\n",
        "[env]\nbogus = 1\n",
        "[nonsense]\nx = 1\n",
        "[agent]\ngamma = fast\n",
        "no section header\n",
        "[trace]\nsource = file\npath = /does/not/exist.csv\n",
    ],
)
def test_malformed_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_cli_exit_codes(tmp_path, capsys):
    bad = write_cfg(tmp_path, "[env]\nusers = 99\n", "bad.ini")
    assert main(["compare", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    cfg = write_cfg(tmp_path)
    out = tmp_path / "run"
    assert main(["eval", "--config", str(cfg), "--out", str(out), "--method", "learning"]) == EXIT_CHECKPOINT
    short = write_cfg(tmp_path, TINY.replace("slots = 170", "slots = 50"), "short.ini")
    assert main(["eval", "--config", str(short), "--out", str(out)]) == EXIT_DATA
    err = capsys.readouterr().err
    assert "config error" in err and "checkpoint" in err and "data error" in err


def test_compare_emits_twelve_trajectories_and_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path)
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["compare", "--config", str(cfg), "--out", str(out), "--seed", "4", "--train"]) == 0
        outs.append(out)
    files = sorted(p.name for p in outs[0].glob("trajectory_*.csv"))
    expected = {
        f"trajectory_{m}_{c}_lag{l}.csv"
        for m, c, l in itertools.product(("random", "exhaustive", "learning"), ("one-slot", "l-slot"), (0, 1))
    }
    assert set(files) == expected and len(files) == 12
    for name in ["metrics.csv", "throughput.csv", *files]:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    head = (outs[0] / "metrics.csv").read_text().splitlines()[:2]
    assert head[0].startswith("# config=") and head[1] == "# seed=4"
    rows = [ln.split(",") for ln in (outs[0] / "metrics.csv").read_text().splitlines() if ln[0] != "#"][1:]
    kappa = {(r[0], r[1], r[2]): float(r[3]) for r in rows}
    assert all(kappa[("exhaustive", "one-slot", "0")] >= kappa[("random", c, l)] for c in ("one-slot", "l-slot") for l in "01")


def test_train_then_eval_learning(tmp_path):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "agent.actor.params").exists() and (out / "episodes.csv").exists()
    assert main(["eval", "--config", str(cfg), "--out", str(out), "--method", "learning", "--lag", "1"]) == 0
    assert (out / "trajectory_learning_one-slot_lag1.csv").exists()


def test_gen_trace_writes_header(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["gen-trace", "--config", str(cfg), "--out", str(tmp_path / "g"), "--seed", "2"]) == 0
    text = (tmp_path / "g" / "trace.csv").read_text()
    assert text.startswith("# config=") and "# seed=2" in text


def test_exhaustive_eval_reaches_full_service_on_feasible_trace(tmp_path):
    # strong constant channels: every user can be satisfied in every slot
    gains = np.tile(np.linspace(2e-6, 3e-6, 5), (170, 1))
    trace_path = tmp_path / "strong.csv"
    write_trace(trace_path, ChannelTrace(gains, fs=200e3))
    text = TINY.replace("slots = 170\ndoppler = 0.02", f"source = file\npath = {trace_path}")
    cfg = write_cfg(tmp_path, text, "feasible.ini")
    out = tmp_path / "ev"
    assert main(["eval", "--config", str(cfg), "--out", str(out), "--method", "exhaustive"]) == 0
    traj = read_trajectory(out / "trajectory_exhaustive_one-slot_lag0.csv")
    assert np.all(traj.theta == 1.0)
    # every real user got at least its requirement
    for t in range(0, 100, 17):
        rates = traj.rates[t]
        assert np.all(rates[traj.real] >= traj.requirements[t][traj.real])


def test_pretrain_cpm_and_reuse(tmp_path):
    text = TINY.replace("use_prediction = false", "use_prediction = true\npretrain_slots = 60")
    text = text.replace("slots = 170", "slots = 230") + "\n[cpm]\nwindow = 40\npretrain_iters = 5\nlength = 2\n"
    cfg = write_cfg(tmp_path, text, "pred.ini")
    out = tmp_path / "p"
    assert main(["pretrain-cpm", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(list(out.glob("cpm_*.params"))) == 5 and (out / "cpm_pretrain.csv").exists()
    assert main(["train", "--config", str(cfg), "--out", str(out), "--reuse-cpm"]) == 0
    assert (out / "cpm_online_0.csv").exists()


def test_convergence_episode_rule():
    steps = [50, 40] + [5] * 9 + [7] + [5] * 10
    assert convergence_episode(steps, 5, 10) == 12
    assert convergence_episode([5] * 9, 5, 10) is None
    cells = [ConvergenceCell(0.005, 1e-3, True, s, [], ep) for s, ep in enumerate((3, None, 10))]
    assert median_convergence(cells, 300) == {(0.005, 1e-3, True): 10.0}


def test_compare_plots(tmp_path):
    pytest.importorskip("matplotlib")
    cfg = write_cfg(tmp_path)
    out = tmp_path / "pl"
    assert main(["compare", "--config", str(cfg), "--out", str(out), "--train", "--plots"]) == 0
    assert (out / "metrics.png").stat().st_size > 0 and (out / "throughput.png").exists()


def test_converge_writes_both_prediction_arms(tmp_path):
    text = TINY.replace("use_prediction = false", "use_prediction = true\npretrain_slots = 60")
    text = text.replace("slots = 170", "slots = 230") + (
        "\n[cpm]\nwindow = 40\npretrain_iters = 5\nlength = 2\n"
        "\n[converge]\ndopplers = 0.02\nlearning_rates = 0.001\nseeds = 0\n"
    )
    cfg = write_cfg(tmp_path, text, "conv.ini")
    out = tmp_path / "c"
    assert main(["converge", "--config", str(cfg), "--out", str(out)]) == 0
    rows = [ln for ln in (out / "convergence.csv").read_text().splitlines() if not ln.startswith("#")]
    assert rows[0] == "doppler,lr,prediction,seed,convergence_episode,censored"
    assert sorted(r.split(",")[2] for r in rows[1:]) == ["0", "1"]
    steps = [ln for ln in (out / "convergence_steps.csv").read_text().splitlines() if not ln.startswith("#")]
    assert len(steps) == 1 + 2 * 3  # header + two arms x three episodes
