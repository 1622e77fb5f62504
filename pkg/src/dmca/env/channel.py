"""Channel radio constants, rate formula, traces and synthetic generators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dmca.errors import ConfigError, DataError

SPEED_OF_LIGHT = 299_792_458.0
PAPER_CHANNEL_BANDWIDTH_HZ = 78_125.0
PAPER_TOTAL_POWER_DBM = 43.0
PAPER_NOISE_DBM = -125.0


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


@dataclass(frozen=True)
class ChannelConfig:
    """Radio constants for M equal-share channels.

    The band and the power budget are split evenly, so per-channel bandwidth
    and power are derived rather than stored.
    """

    channels: int
    total_bandwidth: float
    total_power_mw: float
    noise_mw: float

    def __post_init__(self) -> None:
        if self.channels < 1:
            raise ConfigError("need at least one channel")
        if min(self.total_bandwidth, self.total_power_mw, self.noise_mw) <= 0:
            raise ConfigError("bandwidth, power and noise must be positive")

    @classmethod
    def from_paper(
        cls,
        channels: int,
        channel_bandwidth: float = PAPER_CHANNEL_BANDWIDTH_HZ,
        total_power_dbm: float = PAPER_TOTAL_POWER_DBM,
        noise_dbm: float = PAPER_NOISE_DBM,
    ) -> "ChannelConfig":
        return cls(
            channels=channels,
            total_bandwidth=channel_bandwidth * channels,
            total_power_mw=dbm_to_mw(total_power_dbm),
            noise_mw=dbm_to_mw(noise_dbm),
        )

    @property
    def bandwidth(self) -> float:
        return self.total_bandwidth / self.channels

    @property
    def power_mw(self) -> float:
        return self.total_power_mw / self.channels

    @property
    def snr_per_unit_gain(self) -> float:
        """P_m / sigma^2: the SNR produced by a unit channel-gain magnitude."""
        return self.power_mw / self.noise_mw


def channel_rate(gain, cfg: ChannelConfig) -> np.ndarray | float:
    """Shannon rate in bits/s for channel-gain magnitude(s) ``gain``."""
    g = np.asarray(gain, dtype=np.float64)
    if np.any(g < 0):
        raise ValueError("channel gain magnitude must be nonnegative")
    r = cfg.bandwidth * np.log2(1.0 + g * g * cfg.snr_per_unit_gain)
    return float(r) if r.ndim == 0 else r


@dataclass
class ChannelTrace:
    """Per-slot gain magnitudes, shape (T, M), with capture metadata."""

    gains: np.ndarray
    fs: float | None = None
    fc: float | None = None
    v: float | None = None
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        g = np.asarray(self.gains, dtype=np.float64)
        if g.ndim == 1:
            g = g[:, None]
        if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
            raise DataError(f"trace must be (T, M) with T, M >= 1, got {g.shape}")
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise DataError("trace gains must be finite and nonnegative")
        self.gains = g

    @property
    def slots(self) -> int:
        return self.gains.shape[0]

    @property
    def channels(self) -> int:
        return self.gains.shape[1]

    @property
    def slot_duration(self) -> float:
        return 1.0 / self.fs if self.fs else 1.0

    def window(self, start: int, stop: int) -> "ChannelTrace":
        return ChannelTrace(self.gains[start:stop].copy(), self.fs, self.fc, self.v, dict(self.meta))


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trace(path: str | Path, trace: ChannelTrace, header: dict[str, object] | None = None) -> None:
    """Write the CSV trace format (metadata comments, then ``slot,h_1..h_M``)."""
    lines = []
    for key, value in (header or {}).items():
        lines.append(f"# {key}={value}")
    for key in ("fs", "fc", "v"):
        value = getattr(trace, key)
        if value is not None:
            lines.append(f"# {key}={_fmt(value)}")
    lines.append("slot," + ",".join(f"h_{m + 1}" for m in range(trace.channels)))
    for t, row in enumerate(trace.gains):
        lines.append(f"{t}," + ",".join(_fmt(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace(path: str | Path) -> ChannelTrace:
    """Parse a trace file. Complex entries (``a+bj``) are reduced to magnitude."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"trace file not found: {path}")
    meta: dict[str, str] = {}
    header: list[str] | None = None
    rows: list[list[float]] = []
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                meta[k.strip()] = v.strip()
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            if cells[0] != "slot" or len(cells) < 2:
                raise DataError(f"{path}:{lineno}: expected header 'slot,h_1,...'")
            header = cells
            continue
        if len(cells) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} columns, got {len(cells)}")
        try:
            rows.append([abs(complex(c.replace(" ", ""))) for c in cells[1:]])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    if header is None or not rows:
        raise DataError(f"{path}: no trace rows")

    def num(key):
        return float(meta.pop(key)) if key in meta else None

    fs, fc, v = num("fs"), num("fc"), num("v")
    return ChannelTrace(np.array(rows), fs=fs, fc=fc, v=v, meta=meta)


def normalized_doppler(v_kmh: float, fc: float, fs: float) -> float:
    """Maximum Doppler shift per sample, f_d / f_s."""
    return (v_kmh / 3.6) * fc / SPEED_OF_LIGHT / fs


def generate_synthetic_trace(
    kind: str,
    slots: int,
    channels: int,
    seed: int,
    *,
    scale: float = 1e-6,
    paths: int = 16,
    doppler: float | None = None,
    v: float = 90.0,
    fc: float = 3e9,
    fs: float = 200e3,
    spread_db: float = 0.0,
    noise: float = 0.0,
    phi: float = 0.9,
    cv: float = 0.3,
) -> ChannelTrace:
    """Reproducible synthetic fading trace.

    ``sum-of-sinusoids``: per channel, ``paths`` unit phasors with random
    arrival angles and phases rotating at ``doppler * cos(angle)`` cycles per
    slot, each of amplitude ``scale_m / sqrt(paths)``. ``doppler`` defaults to
    the value implied by ``v`` (km/h), ``fc`` and ``fs``. ``spread_db`` draws a
    per-channel mean level uniformly in +-spread_db/2 dB.

    ``autoregressive``: real AR(1) on the magnitude around ``scale`` with
    coefficient ``phi`` and stationary std ``cv * scale``, clamped at zero.
    """
    if slots < 1 or channels < 1:
        raise ConfigError("slots and channels must be >= 1")
    if scale <= 0:
        raise ConfigError("scale must be positive")
    rng = np.random.default_rng(seed)
    t = np.arange(slots, dtype=np.float64)
    levels = scale * 10.0 ** (rng.uniform(-0.5, 0.5, channels) * spread_db / 20.0)

    if kind == "sum-of-sinusoids":
        if paths < 1:
            raise ConfigError("paths must be >= 1")
        fd = normalized_doppler(v, fc, fs) if doppler is None else doppler
        if not (fd >= 0 and math.isfinite(fd)):
            raise ConfigError("doppler must be finite and nonnegative")
        gains = np.empty((slots, channels))
        for m in range(channels):
            angles = rng.uniform(0.0, 2.0 * np.pi, paths)
            phases = rng.uniform(0.0, 2.0 * np.pi, paths)
            freqs = fd * np.cos(angles)
            h = np.exp(1j * (2.0 * np.pi * np.outer(t, freqs) + phases)).sum(axis=1)
            gains[:, m] = levels[m] / np.sqrt(paths) * np.abs(h)
        if noise > 0:
            gains = np.abs(gains + noise * scale * rng.standard_normal(gains.shape))
        meta_v = v if doppler is None else None
        return ChannelTrace(gains, fs=fs, fc=fc, v=meta_v)

    if kind == "autoregressive":
        if not 0.0 <= phi < 1.0:
            raise ConfigError("phi must lie in [0, 1)")
        std = cv * levels
        x = np.empty((slots, channels))
        x[0] = levels + std * rng.standard_normal(channels)
        innov = std * np.sqrt(1.0 - phi * phi)
        for k in range(1, slots):
            x[k] = levels + phi * (x[k - 1] - levels) + innov * rng.standard_normal(channels)
        return ChannelTrace(np.maximum(x, 0.0), fs=fs, fc=fc, v=None)

    raise ConfigError(f"unknown synthetic trace kind {kind!r}")
