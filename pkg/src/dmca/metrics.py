"""Evaluation functionals over per-slot trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dmca.errors import DataError

# returned by non_instant_decision_error when the lagged performance is zero
UNDEFINED = float("nan")


@dataclass
class Trajectory:
    """Per-slot outcomes of one policy run; arrays are (T, K) unless noted."""

    slots: np.ndarray  # (T,) execution slot indices
    channels: np.ndarray  # decisions, int
    rates: np.ndarray  # delivered rate per user (0 for collision losers)
    requirements: np.ndarray
    delta: np.ndarray
    served: np.ndarray  # bool
    real: np.ndarray  # (K,) bool

    def __post_init__(self) -> None:
        T = self.slots.size
        for name in ("channels", "rates", "requirements", "delta", "served"):
            arr = getattr(self, name)
            if arr.shape != (T, self.real.size):
                raise DataError(f"trajectory field {name} has shape {arr.shape}, expected {(T, self.real.size)}")
        if T > 1 and np.any(np.diff(self.slots) != 1):
            raise DataError("trajectory slots must be contiguous")

    def __len__(self) -> int:
        return self.slots.size

    @property
    def n_real(self) -> int:
        return int(self.real.sum())

    @property
    def theta(self) -> np.ndarray:
        return np.array([service_success_rate(d, self.real, s) for d, s in zip(self.delta, self.served)])

    @property
    def throughput(self) -> np.ndarray:
        return np.array([slot_throughput(r, s) for r, s in zip(self.rates, self.served)])

    @classmethod
    def from_results(cls, results, decisions, real) -> "Trajectory":
        return cls(
            slots=np.array([r.slot for r in results], dtype=np.int64),
            channels=np.array([d.channels for d in decisions], dtype=np.int64).reshape(len(results), -1),
            rates=np.array([r.rates for r in results]).reshape(len(results), -1),
            requirements=np.array([r.requirements for r in results]).reshape(len(results), -1),
            delta=np.array([r.delta for r in results]).reshape(len(results), -1),
            served=np.array([r.served for r in results], dtype=bool).reshape(len(results), -1),
            real=np.asarray(real, dtype=bool),
        )


def slot_throughput(rates: np.ndarray, served: np.ndarray) -> float:
    """ρ(S(t)): total delivered rate of served (real) users in one slot."""
    return float(rates[served].sum())


def service_success_rate(delta, real=None, served=None) -> float:
    """ϑ: share of real users with Δ >= 0; ``served`` (if given) marks collision losers as failures."""
    delta = np.asarray(delta, dtype=np.float64)
    ok = delta >= 0 if served is None else np.asarray(served, dtype=bool) & (delta >= 0)
    if real is not None:
        real = np.asarray(real, dtype=bool)
        ok, n = ok[real], int(real.sum())
    else:
        n = delta.size
    if n < 1:
        raise DataError("need at least one real user")
    return float(ok.sum()) / n


def service_arrival_rate(theta, T: int | None = None) -> float:
    """κ(T): share of the first T slots in which every real user is served."""
    theta = np.asarray(theta, dtype=np.float64)
    T = theta.size if T is None else T
    if T < 1 or T > theta.size:
        raise DataError(f"horizon {T} outside 1..{theta.size}")
    return float(np.sum(theta[:T] == 1.0)) / T


def non_instant_decision_error(rho_now: float, rho_lagged: float) -> float:
    """Ω = |ρ_now - ρ_lagged| / ρ_lagged; :data:`UNDEFINED` when ρ_lagged is 0."""
    if rho_lagged == 0:
        return UNDEFINED
    return abs(rho_now - rho_lagged) / rho_lagged


@dataclass
class BiasSummary:
    w: np.ndarray  # (T, N) per-slot biases of real users
    mean: float
    min: float


def ppqos_bias(traj: Trajectory, T: int | None = None) -> BiasSummary:
    T = len(traj) if T is None else T
    if T < 1 or T > len(traj):
        raise DataError(f"horizon {T} outside 1..{len(traj)}")
    w = traj.delta[:T][:, traj.real]
    return BiasSummary(w=w, mean=float(np.mean(w)), min=float(np.min(w)))


def extreme_count(x) -> int:
    """Number of strict local maxima and minima among interior points."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 3:
        return 0
    mid, left, right = x[1:-1], x[:-2], x[2:]
    peaks = (mid > left) & (mid > right)
    troughs = (mid < left) & (mid < right)
    return int(np.sum(peaks | troughs))


def fluctuation(x) -> float:
    """Extreme count times the unbiased sample variance."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        return 0.0
    return extreme_count(x) * float(np.var(x, ddof=1))


@dataclass
class StabilityResult:
    raw: float
    switches: int
    windows: int
    fluctuation: float  # mean over real users of F_strategy - F_user


def service_stability(traj: Trajectory, t_one: int) -> StabilityResult:
    """S_ta = switches × (T / T_one) × mean_n(F_strategy,n − F_user,n).

    Switches are counted between the decisions in force at the starts of
    consecutive non-overlapping windows of ``t_one`` slots (real users only);
    a trailing partial window is dropped and T shrinks to whole windows.
    """
    if t_one < 1:
        raise DataError("t_one must be >= 1")
    windows = len(traj) // t_one
    if windows < 2:
        raise DataError(f"need at least {2 * t_one} slots, got {len(traj)}")
    T = windows * t_one
    real = traj.real
    starts = traj.channels[: T : t_one][:, real]
    switches = int(np.count_nonzero(starts[1:] - starts[:-1]))
    diffs = [fluctuation(traj.rates[:T, n]) - fluctuation(traj.requirements[:T, n]) for n in np.flatnonzero(real)]
    fl = float(np.mean(diffs))
    return StabilityResult(raw=switches * windows * fl, switches=switches, windows=windows, fluctuation=fl)


def normalize_minmax(values: dict[str, float]) -> dict[str, float]:
    """Min-max scale across methods; all zeros when every value is equal."""
    vals = np.array(list(values.values()), dtype=np.float64)
    lo, hi = float(np.min(vals)), float(np.max(vals))
    if hi == lo:
        return {k: 0.0 for k in values}
    return {k: (v - lo) / (hi - lo) for k, v in values.items()}


def throughput_deficit(reference: np.ndarray, method: np.ndarray) -> float:
    """Mean positive shortfall of ``method`` throughput below ``reference``, slot by slot."""
    reference, method = np.asarray(reference), np.asarray(method)
    if reference.shape != method.shape:
        raise DataError("throughput series must have equal length")
    return float(np.mean(np.maximum(reference - method, 0.0)))


# -- persistence -----------------------------------------------------------
def write_trajectory(path: str | Path, traj: Trajectory, header: dict | None = None) -> None:
    lines = [f"# {k}={v}" for k, v in (header or {}).items()]
    lines.append("# real=" + ",".join(str(int(x)) for x in traj.real))
    lines.append("slot,user,channel,rate,requirement,delta,served")
    for i, slot in enumerate(traj.slots):
        for n in range(traj.real.size):
            lines.append(
                f"{slot},{n},{traj.channels[i, n]},{float(traj.rates[i, n])!r},{float(traj.requirements[i, n])!r},"
                f"{float(traj.delta[i, n])!r},{int(traj.served[i, n])}"
            )
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory(path: str | Path) -> Trajectory:
    real = None
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# real="):
            real = np.array([c == "1" for c in line[len("# real=") :].split(",")])
        elif line and not line.startswith("#") and not line.startswith("slot,"):
            rows.append(line.split(","))
    if real is None or not rows:
        raise DataError(f"{path}: not a trajectory file")
    K = real.size
    if len(rows) % K:
        raise DataError(f"{path}: row count is not a multiple of K={K}")
    T = len(rows) // K

    def col(j, kind):
        return np.array([kind(r[j]) for r in rows]).reshape(T, K)

    return Trajectory(
        slots=col(0, int)[:, 0].astype(np.int64),
        channels=col(2, int).astype(np.int64),
        rates=col(3, float),
        requirements=col(4, float),
        delta=col(5, float),
        served=col(6, int).astype(bool),
        real=real,
    )


@dataclass
class MetricsRow:
    method: str
    mode: str
    lag: int
    kappa: float
    mean_bias: float
    s_ta_raw: float
    s_ta_norm: float
    mean_throughput: float


def summarize(traj: Trajectory, method: str, mode: str, lag: int, t_one: int, kappa_horizon: int | None = None) -> MetricsRow:
    try:
        s_ta = service_stability(traj, t_one).raw
    except DataError:
        s_ta = math.nan
    return MetricsRow(
        method=method,
        mode=mode,
        lag=lag,
        kappa=service_arrival_rate(traj.theta, kappa_horizon),
        mean_bias=ppqos_bias(traj).mean,
        s_ta_raw=s_ta,
        s_ta_norm=math.nan,
        mean_throughput=float(np.mean(traj.throughput)),
    )


def write_metrics(path: str | Path, rows: list[MetricsRow], header: dict | None = None) -> None:
    lines = [f"# {k}={v}" for k, v in (header or {}).items()]
    lines.append("method,mode,lag,kappa,mean_bias,S_ta_raw,S_ta_norm,mean_throughput")
    for r in rows:
        lines.append(
            f"{r.method},{r.mode},{r.lag},{float(r.kappa)!r},{float(r.mean_bias)!r},{float(r.s_ta_raw)!r},{float(r.s_ta_norm)!r},{float(r.mean_throughput)!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
