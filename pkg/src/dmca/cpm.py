"""Online LSTM channel predictor with incremental learning.

One predictor handles one scalar gain series. Values are mapped to [0, 1]
with the min/max seen during pretraining before they reach the network.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dmca.env.core import PredictionTable
from dmca.errors import ConfigError, DataError
from dmca.nn import LstmRegressor, ParamSet, make_optimizer

log = logging.getLogger(__name__)


@dataclass
class CpmConfig:
    time_step: int = 5
    length: int = 1  # 1 = single-point, >1 = recursive multi-point
    units: int = 5
    window: int = 200  # N_IL
    lr: float = 0.06
    pretrain_iters: int = 200
    il_iters: int = 1
    batch_size: int = 0  # 0 = full batch per iteration
    optimizer: str = "adam"
    train_fraction: float = 0.75
    conf_window: int = 50
    conf_max: float = 0.95
    conf_default: float = 0.5
    residual: bool = False  # model the step from the last input instead of the level

    def __post_init__(self) -> None:
        if self.time_step < 1 or self.length < 1 or self.units < 1:
            raise ConfigError("time_step, length and units must be >= 1")
        if self.window < self.time_step + 1:
            raise ConfigError("IL window must be at least time_step + 1")
        if self.lr < 0 or self.pretrain_iters < 0 or self.il_iters < 0:
            raise ConfigError("lr and iteration counts must be nonnegative")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigError("train_fraction must lie in (0, 1]")
        if not 0.0 <= self.conf_default <= self.conf_max <= 1.0:
            raise ConfigError("need 0 <= conf_default <= conf_max <= 1")


def sliding_samples(series: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """(n-k, k) input windows and the (n-k,) values that follow each."""
    series = np.asarray(series, dtype=np.float64)
    if series.size < k + 1:
        raise DataError(f"need at least {k + 1} values, got {series.size}")
    X = np.lib.stride_tricks.sliding_window_view(series[:-1], k)
    return X.copy(), series[k:].copy()


def nmse(predicted, realized) -> float:
    """Mean squared error normalised by the variance of the realised values."""
    p = np.asarray(predicted, dtype=np.float64)
    r = np.asarray(realized, dtype=np.float64)
    mse = float(np.mean((p - r) ** 2))
    var = float(np.var(r))
    if var <= 0.0:
        return 0.0 if mse == 0.0 else float("inf")
    return mse / var


def prediction_confidence(predicted, realized, window: int = 50, conf_max: float = 0.95, default: float = 0.5) -> float:
    """ϱ = clamp(1 - NMSE over the last ``window`` realised forecasts, 0, conf_max)."""
    p = np.asarray(predicted, dtype=np.float64)
    r = np.asarray(realized, dtype=np.float64)
    if p.size < window:
        return default
    err = nmse(p[-window:], r[-window:])
    return float(min(max(1.0 - err, 0.0), conf_max))


def persistence_forecast(series: np.ndarray, k: int) -> np.ndarray:
    """Predict-last-value baseline aligned with :func:`sliding_samples` targets."""
    series = np.asarray(series, dtype=np.float64)
    return series[k - 1 : -1].copy()


@dataclass
class PretrainResult:
    train_loss: list[float]
    val_loss: list[float]
    val_nmse: float


@dataclass
class PredictionRecord:
    slot: int  # slot being forecast
    horizon: int
    predicted: float
    realized: float | None = None

    @property
    def sq_error(self) -> float | None:
        return None if self.realized is None else (self.predicted - self.realized) ** 2


@dataclass
class ChannelPredictor:
    cfg: CpmConfig
    seed: int = 0
    lo: float = 0.0
    hi: float = 1.0
    il_log: list[tuple[int, int]] = field(default_factory=list)
    deferred: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.rng = np.random.default_rng(self.seed)
        self.model = LstmRegressor(self.cfg.time_step, self.cfg.units, self.rng)
        self.opt = make_optimizer(self.cfg.optimizer, self.model.params, self.cfg.lr)

    @property
    def params(self) -> ParamSet:
        return self.model.params

    # -- scaling -----------------------------------------------------------
    def _scale(self, x):
        return (np.asarray(x, dtype=np.float64) - self.lo) / (self.hi - self.lo)

    def _unscale(self, z):
        return np.asarray(z) * (self.hi - self.lo) + self.lo

    def fit_scaler(self, series: np.ndarray) -> None:
        lo, hi = float(np.min(series)), float(np.max(series))
        if hi <= lo:
            hi = lo + max(abs(lo), 1.0) * 1e-3  # constant series: any nonzero span
        self.lo, self.hi = lo, hi

    def _samples(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        X, y = sliding_samples(z, self.cfg.time_step)
        return (X, y - X[:, -1]) if self.cfg.residual else (X, y)

    def _forward_value(self, X: np.ndarray) -> np.ndarray:
        out = self.model(X)
        return out + X[:, -1] if self.cfg.residual else out

    # -- training ----------------------------------------------------------
    def _epoch(self, X: np.ndarray, y: np.ndarray) -> float:
        n = X.shape[0]
        bs = self.cfg.batch_size or n
        order = self.rng.permutation(n) if bs < n else np.arange(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            pred, rec = self.model.forward(X[idx])
            err = pred - y[idx]
            total += float(np.sum(err * err))
            self.params.zero_grad()
            self.model.backward(rec, 2.0 * err / idx.size)
            self.opt.step()
        return total / n

    def loss(self, X: np.ndarray, y: np.ndarray) -> float:
        err = self.model(X) - y
        return float(np.mean(err * err))

    def pretrain(self, history) -> PretrainResult:
        """Fit on sliding windows of ``history``; the tail is held out for validation."""
        history = np.asarray(history, dtype=np.float64)
        k = self.cfg.time_step
        if history.size < k + 1:
            raise DataError(f"pretraining needs at least {k + 1} values, got {history.size}")
        if not np.all(np.isfinite(history)):
            raise DataError("pretraining history contains non-finite values")
        n_train = max(int(round(history.size * self.cfg.train_fraction)), k + 1)
        self.fit_scaler(history[:n_train])
        z = self._scale(history)
        X, y = self._samples(z[:n_train])
        has_val = history.size - n_train >= 1
        if has_val:
            # validation windows may reach back into the training tail for their inputs
            Xv, yv = self._samples(z[n_train - k :])
        train_curve, val_curve = [], []
        for _ in range(self.cfg.pretrain_iters):
            train_curve.append(self._epoch(X, y))
            if has_val:
                val_curve.append(self.loss(Xv, yv))
        val_nmse = float("nan")
        if has_val:
            base = Xv[:, -1] if self.cfg.residual else 0.0
            val_nmse = nmse(self.model(Xv) + base, yv + base)
        return PretrainResult(train_curve, val_curve, val_nmse)

    def il_update(self, window, slot: int | None = None) -> bool:
        """Incremental update on exactly the latest N_IL values.

        Returns False (and records the slot) when fewer than N_IL values are
        available; the update is then deferred to a later call.
        """
        window = np.asarray(window, dtype=np.float64)
        n = self.cfg.window
        if window.size < n:
            self.deferred.append(-1 if slot is None else slot)
            log.debug("IL update deferred at slot %s: %d < %d values", slot, window.size, n)
            return False
        window = window[-n:]
        X, y = self._samples(self._scale(window))
        for _ in range(self.cfg.il_iters):
            self._epoch(X, y)
        if slot is not None:
            self.il_log.append((slot - n + 1, slot))
        return True

    # -- prediction --------------------------------------------------------
    def _check_inputs(self, last) -> np.ndarray:
        last = np.asarray(last, dtype=np.float64).ravel()
        if last.size != self.cfg.time_step:
            raise DataError(f"need exactly {self.cfg.time_step} values, got {last.size}")
        if not np.all(np.isfinite(last)):
            raise DataError("prediction input contains non-finite values")
        return last

    def predict_single(self, last) -> float:
        last = self._check_inputs(last)
        return float(self._unscale(self._forward_value(self._scale(last)[None, :])[0]))

    def predict_multi(self, last, length: int | None = None) -> np.ndarray:
        """Recursive forecast: each output is appended to the input window."""
        length = self.cfg.length if length is None else length
        if length < 1:
            raise ConfigError("prediction length must be >= 1")
        z = list(self._scale(self._check_inputs(last)))
        out = np.empty(length)
        for h in range(length):
            nxt = float(self._forward_value(np.array(z[-self.cfg.time_step :])[None, :])[0])
            out[h] = nxt
            z.append(nxt)
        return self._unscale(out)

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        info = {"lo": repr(self.lo), "hi": repr(self.hi), "time_step": self.cfg.time_step, "units": self.cfg.units}
        info.update(meta or {})
        self.params.save(path, info)

    @classmethod
    def load(cls, path: str | Path, cfg: CpmConfig) -> "ChannelPredictor":
        meta = ParamSet.read_meta(path)
        loaded = ParamSet.load(path)
        pred = cls(cfg)
        pred.params.assign(loaded)
        pred.lo, pred.hi = float(meta["lo"]), float(meta["hi"])
        return pred


@dataclass
class OnlineRun:
    """Forecasts from a sequential predict / IL-update pass over one series."""

    forecasts: np.ndarray  # (T, l): row t holds forecasts for t+1..t+l
    confidence: np.ndarray  # (T,)
    records: list[PredictionRecord]


def run_online(predictor: ChannelPredictor, series, start: int, stop: int | None = None) -> OnlineRun:
    """Alternate IL updates and forecasts from slot ``start`` on.

    At slot t the predictor has seen values up to t. An IL update on the
    latest N_IL values runs at t = start, start + l, start + 2l, ...; a
    forecast of t+1..t+l is issued every slot. ϱ(t) uses the one-step
    forecasts whose targets are already realised.
    """
    series = np.asarray(series, dtype=np.float64)
    T = series.size
    stop = T if stop is None else stop
    cfg = predictor.cfg
    k, l = cfg.time_step, cfg.length
    if start < k - 1:
        raise DataError(f"online run needs {k} values of history before the first forecast")
    fc = np.full((T, l), np.nan)
    conf = np.full(T, cfg.conf_default)
    records: list[PredictionRecord] = []
    one_step_pred: list[float] = []
    one_step_real: list[float] = []
    for t in range(start, stop):
        if t > start and np.isfinite(fc[t - 1, 0]):
            one_step_pred.append(fc[t - 1, 0])
            one_step_real.append(series[t])
        conf[t] = prediction_confidence(one_step_pred, one_step_real, cfg.conf_window, cfg.conf_max, cfg.conf_default)
        if (t - start) % l == 0:
            predictor.il_update(series[max(0, t - cfg.window + 1) : t + 1], slot=t)
        fc[t] = predictor.predict_multi(series[t - k + 1 : t + 1], l)
        for h in range(l):
            target = t + 1 + h
            realized = float(series[target]) if target < T else None
            records.append(PredictionRecord(target, h + 1, float(fc[t, h]), realized))
    return OnlineRun(fc, conf, records)


def build_prediction_table(
    gains: np.ndarray,
    cfg: CpmConfig,
    pretrain_slots: int,
    seed: int = 0,
    predictors: list[ChannelPredictor] | None = None,
) -> tuple[PredictionTable, list[ChannelPredictor], list[OnlineRun]]:
    """Pretrain one predictor per channel on the first ``pretrain_slots`` slots,
    then run online over the rest. Table rows cover slots ``pretrain_slots..T-1``."""
    gains = np.asarray(gains, dtype=np.float64)
    T, M = gains.shape
    if pretrain_slots < cfg.window or pretrain_slots >= T:
        raise DataError(f"pretrain_slots must lie in [{cfg.window}, {T})")
    runs = []
    if predictors is None:
        predictors = []
        for m in range(M):
            p = ChannelPredictor(cfg, seed=seed * 1000 + m)
            p.pretrain(gains[:pretrain_slots, m])
            predictors.append(p)
    for m, p in enumerate(predictors):
        runs.append(run_online(p, gains[:, m], pretrain_slots))
    fc = np.stack([r.forecasts[pretrain_slots:] for r in runs], axis=2)
    conf = np.mean([r.confidence[pretrain_slots:] for r in runs], axis=0)
    return PredictionTable(fc, conf), predictors, runs


def write_prediction_log(path: str | Path, records: list[PredictionRecord], header: dict | None = None) -> None:
    lines = [f"# {k}={v}" for k, v in (header or {}).items()]
    lines.append("slot,horizon,predicted,realized,sq_error")
    for r in records:
        real = "" if r.realized is None else repr(r.realized)
        err = "" if r.sq_error is None else repr(r.sq_error)
        lines.append(f"{r.slot},{r.horizon},{float(r.predicted)!r},{real},{err}")
    Path(path).write_text("\n".join(lines) + "\n")
