"""Series ingestion, [-1, 1] scaling, sliding windows and synthetic data.

CSV files use the Yahoo S5 layout ``timestamp,value,is_anomaly``; the
label column is optional.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DegenerateDataError, IngestionError
from .tensor_core import Rng

CSV_HEADER = ("timestamp", "value", "is_anomaly")
MAX_ANOMALY_RATE = 0.05
MIN_ANOMALY_MAGNITUDE = 3.0


@dataclass
class TimeSeries:
    values: np.ndarray  # (T, N)
    labels: np.ndarray | None = None  # (T,) of 0/1
    name: str = "series"
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1:
            raise DataError(f"series {self.name!r} needs shape (T, N) with T >= 1, got {v.shape}")
        self.values = v
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if lab.shape[0] != v.shape[0]:
                raise DataError(f"series {self.name!r}: {lab.shape[0]} labels for {v.shape[0]} points")
            if np.any((lab != 0) & (lab != 1)):
                raise DataError(f"series {self.name!r}: labels must be 0 or 1")
            self.labels = lab
        if self.timestamps is None:
            self.timestamps = np.arange(v.shape[0], dtype=np.int64)

    def __len__(self):
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(values, self.labels, self.name, self.timestamps)


@dataclass(frozen=True)
class NormParams:
    min: tuple
    max: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in np.atleast_1d(self.min))
        hi = tuple(float(x) for x in np.atleast_1d(self.max))
        if len(lo) != len(hi):
            raise DataError("min and max must have one entry per dimension")
        if any(h < l for l, h in zip(lo, hi)):
            raise DataError("max must be >= min in every dimension")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    def to_dict(self) -> dict:
        return {"min": list(self.min), "max": list(self.max)}


@dataclass
class WindowSet:
    windows: np.ndarray  # (W, L, N)
    origins: np.ndarray  # (W,)
    window_len: int
    step: int

    def __len__(self):
        return self.windows.shape[0]


@dataclass(frozen=True)
class SyntheticSpec:
    length: int = 10_000
    periods: tuple = (24.0,)
    amplitudes: tuple = (1.0,)
    trend: float = 0.0
    noise: float = 0.1
    anomaly_rate: float = 0.005
    anomaly_magnitude: float = 5.0
    seed: int = 0
    name: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(self, "periods", tuple(float(p) for p in self.periods))
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))
        if self.length < 1:
            raise ConfigError("length must be >= 1")
        if len(self.periods) != len(self.amplitudes):
            raise ConfigError("periods and amplitudes must have the same length")
        if any(p <= 0 for p in self.periods):
            raise ConfigError("periods must be positive")
        if self.noise <= 0:
            raise ConfigError("noise sigma must be positive")
        if not 0.0 <= self.anomaly_rate <= MAX_ANOMALY_RATE:
            raise ConfigError(f"anomaly rate must lie in [0, {MAX_ANOMALY_RATE}], got {self.anomaly_rate}")
        if self.anomaly_magnitude < MIN_ANOMALY_MAGNITUDE:
            raise ConfigError(f"anomaly magnitude must be >= {MIN_ANOMALY_MAGNITUDE}, got {self.anomaly_magnitude}")


def load_csv(path) -> TimeSeries:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        cols = [h.strip() for h in header]
        try:
            i_ts, i_val = cols.index("timestamp"), cols.index("value")
        except ValueError:
            raise IngestionError(f"{path}: header must contain 'timestamp' and 'value', got {cols}", 1)
        i_lab = cols.index("is_anomaly") if "is_anomaly" in cols else None
        ts, vals, labs = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                ts.append(float(row[i_ts]))
                vals.append(float(row[i_val]))
                if i_lab is not None:
                    lab = int(float(row[i_lab]))
                    if lab not in (0, 1):
                        raise ValueError(f"is_anomaly must be 0 or 1, got {row[i_lab]!r}")
                    labs.append(lab)
            except (ValueError, IndexError) as exc:
                raise IngestionError(f"{path}: cannot parse row {row!r} ({exc})", lineno) from None
    if not vals:
        raise DataError(f"{path}: no data rows")
    ts = np.asarray(ts)
    order = np.argsort(ts, kind="stable")
    labels = np.asarray(labs, dtype=np.int64)[order] if i_lab is not None else None
    timestamps = ts[order]
    if np.all(timestamps == np.round(timestamps)):
        timestamps = timestamps.astype(np.int64)
    return TimeSeries(np.asarray(vals)[order], labels, path.stem, timestamps)


def write_csv(series: TimeSeries, path) -> None:
    if series.dim != 1:
        raise DataError("CSV output holds a single value column")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        has_labels = series.labels is not None
        w.writerow(CSV_HEADER if has_labels else CSV_HEADER[:2])
        for k in range(len(series)):
            row = [series.timestamps[k], repr(float(series.values[k, 0]))]
            if has_labels:
                row.append(int(series.labels[k]))
            w.writerow(row)


def normalize(series: TimeSeries, params: NormParams | None = None):
    """Affine map of each dimension onto [-1, 1]; out-of-range values are kept."""
    v = series.values
    if params is None:
        lo, hi = v.min(axis=0), v.max(axis=0)
        if np.any(hi == lo):
            dims = np.flatnonzero(hi == lo).tolist()
            raise DegenerateDataError(f"series {series.name!r} is constant in dimension(s) {dims}")
        params = NormParams(tuple(lo), tuple(hi))
    lo, hi = np.asarray(params.min), np.asarray(params.max)
    if lo.shape[0] != series.dim:
        raise DataError(f"normalization has {lo.shape[0]} dims, series has {series.dim}")
    if np.any(hi == lo):
        raise DegenerateDataError("normalization range is empty in some dimension")
    return series.with_values(2.0 * (v - lo) / (hi - lo) - 1.0), params


def denormalize(series: TimeSeries, params: NormParams) -> TimeSeries:
    lo, hi = np.asarray(params.min), np.asarray(params.max)
    return series.with_values((series.values + 1.0) * (hi - lo) / 2.0 + lo)


def make_windows(series, window_len: int, step: int = 1) -> WindowSet:
    v = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=np.float64)
    if v.ndim == 1:
        v = v[:, None]
    if window_len < 1 or step < 1:
        raise ConfigError("window length and step must be >= 1")
    T = v.shape[0]
    if T < window_len:
        raise DataError(f"series of length {T} is shorter than the window ({window_len})")
    origins = np.arange(0, T - window_len + 1, step)
    idx = origins[:, None] + np.arange(window_len)[None, :]
    return WindowSet(v[idx], origins, window_len, step)


def synthetic_base(spec: SyntheticSpec) -> np.ndarray:
    """The noiseless sinusoid + trend component of a synthetic series."""
    t = np.arange(spec.length, dtype=np.float64)
    base = spec.trend * t
    for period, amp in zip(spec.periods, spec.amplitudes):
        base = base + amp * np.sin(2.0 * math.pi * t / period)
    return base


def generate_synthetic(spec: SyntheticSpec) -> TimeSeries:
    """Sinusoids + trend + Gaussian noise with labeled point spikes.

    Exactly ``ceil(rate * T)`` distinct points are replaced by
    ``base +- magnitude * noise``, so every spike sits at a known distance
    from the clean signal.
    """
    T = spec.length
    rng = Rng(spec.seed)
    base = synthetic_base(spec)
    # Box-Muller from the package RNG keeps the stream platform independent
    u1 = rng.uniform(T)
    u2 = rng.uniform(T)
    noise = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * math.pi * u2)
    values = base + spec.noise * noise

    n_anom = math.ceil(round(spec.anomaly_rate * T, 9))
    labels = np.zeros(T, dtype=np.int64)
    if n_anom:
        idx = rng.choice(T, n_anom)
        signs = np.where(rng.uniform(n_anom) < 0.5, -1.0, 1.0)
        values[idx] = base[idx] + signs * spec.anomaly_magnitude * spec.noise
        labels[idx] = 1
    return TimeSeries(values, labels, spec.name)
