"""Data pipeline: CSV ingestion, alignment, features, scaling, windows.

Frames are pandas DataFrames with a strictly increasing DatetimeIndex
named "timestamp" and float columns; every loader validates that shape.
The flow mirrors the experiment: load -> interpolate to a uniform step ->
append temporal and lagged features -> chronological 80/20 split ->
min-max scale with train-only ranges -> rolling windows -> batches.

synth_solar generates a deterministic stand-in dataset.  Its closed forms
are documented in the docstring so tests can recompute exact values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, StateError

SCHEMAS = {
    "real_plant": (
        "dc_power",
        "ac_power",
        "daily_yield",
        "total_yield",
        "ambient_temperature",
        "module_temperature",
        "irradiation",
    ),
    "simulated": (
        "power",
        "temperature",
        "dhi",
        "cloud_type",
        "relative_humidity",
        "dew_point",
        "pressure",
        "windspeed",
        "solar_zenith_angle",
    ),
}

_TIMESTAMP_NAMES = ("timestamp", "date_time", "datetime")

TEMPORAL_COLUMNS = ("hour", "day", "month", "day_of_week")


def _normalize_header(name: str) -> str:
    return name.strip().lower().replace(" ", "_")


def _validate_frame(frame: pd.DataFrame) -> None:
    if not isinstance(frame.index, pd.DatetimeIndex):
        raise DataError("frame must be indexed by timestamps")
    if frame.index.has_duplicates:
        dup = frame.index[frame.index.duplicated()][0]
        raise DataError(f"duplicate timestamp {dup}")
    if not frame.index.is_monotonic_increasing:
        raise DataError("timestamps are not in increasing order")
    if frame.isna().any().any():
        col = frame.columns[frame.isna().any()][0]
        row = frame.index[frame[col].isna()][0]
        raise DataError(f"missing value in column {col!r} at row {row}")


def load_csv(path, schema: str) -> pd.DataFrame:
    """Read and validate one of the two dataset layouts.

    Headers are normalized to snake_case; columns outside the schema are
    dropped.  real_plant timestamps may use either YYYY-MM-DD HH:MM:SS or
    DD-MM-YYYY HH:MM.
    """
    if schema not in SCHEMAS:
        raise ConfigError(f"schema must be one of {sorted(SCHEMAS)}, got {schema!r}")
    try:
        raw = pd.read_csv(path)
    except FileNotFoundError:
        raise DataError(f"no such file: {path}")
    except pd.errors.ParserError as exc:
        raise DataError(f"cannot parse {path}: {exc}")
    raw.columns = [_normalize_header(c) for c in raw.columns]
    ts_col = next((c for c in _TIMESTAMP_NAMES if c in raw.columns), None)
    if ts_col is None:
        raise DataError(f"no timestamp column found (expected one of {_TIMESTAMP_NAMES})")
    missing = [c for c in SCHEMAS[schema] if c not in raw.columns]
    if missing:
        raise DataError(f"schema {schema!r} requires missing column(s) {missing}")

    formats = ["%Y-%m-%d %H:%M:%S"]
    if schema == "real_plant":
        formats.append("%d-%m-%Y %H:%M")
    stamps = None
    for fmt in formats:
        parsed = pd.to_datetime(raw[ts_col], format=fmt, errors="coerce")
        if not parsed.isna().any():
            stamps = parsed
            break
    if stamps is None:
        parsed = pd.to_datetime(raw[ts_col], format=formats[0], errors="coerce")
        bad = int(np.flatnonzero(parsed.isna().to_numpy())[0])
        raise DataError(
            f"unparseable timestamp {raw[ts_col].iloc[bad]!r} in column {ts_col!r}, data row {bad + 1}"
        )

    frame = pd.DataFrame(index=pd.DatetimeIndex(stamps, name="timestamp"))
    for col in SCHEMAS[schema]:
        values = pd.to_numeric(raw[col], errors="coerce")
        fresh_nan = values.isna() & ~raw[col].isna()
        if fresh_nan.any():
            bad = int(np.flatnonzero(fresh_nan.to_numpy())[0])
            raise DataError(
                f"non-numeric value {raw[col].iloc[bad]!r} in column {col!r}, data row {bad + 1}"
            )
        frame[col] = values.to_numpy(dtype=float)
    _validate_frame(frame)
    return frame


def load_processed(path) -> pd.DataFrame:
    """Read back a frame written by save_frame (engineered/scaled CSVs)."""
    try:
        frame = pd.read_csv(path, index_col=0, parse_dates=True)
    except FileNotFoundError:
        raise DataError(f"no such file: {path}")
    frame.index.name = "timestamp"
    frame = frame.astype(float)
    _validate_frame(frame)
    return frame


def save_frame(frame: pd.DataFrame, path) -> None:
    frame.to_csv(path, index_label="timestamp")


def frame_step(frame: pd.DataFrame) -> pd.Timedelta:
    """The frame's uniform sampling step; error if spacing varies."""
    if len(frame) < 2:
        raise DataError("need at least 2 rows to determine spacing")
    deltas = frame.index.to_series().diff().dropna().unique()
    if len(deltas) != 1:
        raise DataError(f"frame spacing is not uniform: found steps {list(deltas)[:3]}")
    return pd.Timedelta(deltas[0])


def interpolate_to_target(frame: pd.DataFrame, target_step) -> pd.DataFrame:
    """Linear interpolation onto a uniform target_step grid.

    The input spacing must be an integer multiple of target_step; original
    sample points are preserved bit-exactly.
    """
    target = pd.Timedelta(target_step)
    if target <= pd.Timedelta(0):
        raise ConfigError(f"target_step must be positive, got {target_step}")
    step = frame_step(frame)
    if step % target != pd.Timedelta(0):
        raise DataError(f"spacing {step} is not an integer multiple of {target}")
    if step == target:
        return frame.copy()
    new_index = pd.date_range(frame.index[0], frame.index[-1], freq=target, name="timestamp")
    x_old = (frame.index - frame.index[0]).total_seconds().to_numpy()
    x_new = (new_index - new_index[0]).total_seconds().to_numpy()
    out = pd.DataFrame(index=new_index)
    for col in frame.columns:
        out[col] = np.interp(x_new, x_old, frame[col].to_numpy())
    return out


def engineer_features(frame: pd.DataFrame, lags=(1, 2, 3)) -> pd.DataFrame:
    """Append hour/day/month/day-of-week plus lag-k copies of every column.

    Lagged values shift history forward (row t holds the value from t-k);
    the first max(lag) rows, whose lags are undefined, are dropped.
    """
    lags = [int(k) for k in lags]
    if any(k < 1 for k in lags):
        raise ConfigError(f"lags must be >= 1, got {lags}")
    if lags and max(lags) >= len(frame):
        raise DataError(f"max lag {max(lags)} needs more than {len(frame)} rows")
    base_cols = list(frame.columns)
    out = frame.copy()
    idx = out.index
    out["hour"] = idx.hour.astype(float)
    out["day"] = idx.day.astype(float)
    out["month"] = idx.month.astype(float)
    out["day_of_week"] = idx.dayofweek.astype(float)
    for col in base_cols:
        for k in lags:
            out[f"{col}_lag{k}"] = frame[col].shift(k)
    if lags:
        out = out.iloc[max(lags):]
    return out


@dataclass(frozen=True)
class ScalerParams:
    """Per-column min/max fitted on the training partition only."""

    mins: dict[str, float]
    maxs: dict[str, float]

    def __post_init__(self):
        if set(self.mins) != set(self.maxs):
            raise ConfigError("mins and maxs must cover the same columns")
        for col, lo in self.mins.items():
            if self.maxs[col] < lo:
                raise ConfigError(f"column {col!r} has max < min")

    @property
    def columns(self) -> list[str]:
        return list(self.mins)

    @property
    def constant_columns(self) -> list[str]:
        return [c for c in self.mins if self.maxs[c] == self.mins[c]]

    def to_dict(self) -> dict:
        return {c: {"min": self.mins[c], "max": self.maxs[c]} for c in sorted(self.mins)}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(
            mins={c: float(v["min"]) for c, v in d.items()},
            maxs={c: float(v["max"]) for c, v in d.items()},
        )


def fit_scaler(train_frame: pd.DataFrame) -> ScalerParams:
    return ScalerParams(
        mins={c: float(train_frame[c].min()) for c in train_frame.columns},
        maxs={c: float(train_frame[c].max()) for c in train_frame.columns},
    )


def transform(frame: pd.DataFrame, scaler: ScalerParams) -> pd.DataFrame:
    """(x - min) / (max - min) per column; constant columns map to 0."""
    out = pd.DataFrame(index=frame.index)
    for col in frame.columns:
        if col not in scaler.mins:
            raise StateError(f"scaler was not fitted for column {col!r}")
        lo, hi = scaler.mins[col], scaler.maxs[col]
        if hi == lo:
            out[col] = np.zeros(len(frame))
        else:
            out[col] = (frame[col].to_numpy() - lo) / (hi - lo)
    return out


def inverse_transform(values, scaler: ScalerParams, column: str) -> np.ndarray:
    """Undo transform for one column; constant columns invert to their min."""
    if column not in scaler.mins:
        raise StateError(f"scaler was not fitted for column {column!r}")
    values = np.asarray(values, dtype=float)
    lo, hi = scaler.mins[column], scaler.maxs[column]
    if hi == lo:
        return np.full_like(values, lo)
    return lo + values * (hi - lo)


def split_chronological(frame: pd.DataFrame, ratio: float = 0.8):
    """First floor(ratio*N) rows train, the rest test; order untouched."""
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"ratio must lie in (0, 1), got {ratio}")
    if len(frame) < 2:
        raise DataError("need at least 2 rows to split")
    k = math.floor(ratio * len(frame))
    return frame.iloc[:k], frame.iloc[k:]


@dataclass
class WindowedDataset:
    """Supervised windows: inputs [N, window, features], next-step targets."""

    inputs: np.ndarray
    targets: np.ndarray
    window: int
    feature_names: list[str]
    target_name: str
    scaler: ScalerParams | None = field(default=None)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        n = self.inputs.shape[0]
        if self.inputs.ndim != 3 or self.targets.shape != (n,):
            raise ConfigError(
                f"inputs {self.inputs.shape} and targets {self.targets.shape} are inconsistent"
            )
        if self.inputs.shape[1] != self.window:
            raise ConfigError(f"window {self.window} does not match inputs {self.inputs.shape}")
        if self.inputs.shape[2] != len(self.feature_names):
            raise ConfigError("feature_names length does not match inputs")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]


def make_windows(
    frame: pd.DataFrame,
    window: int = 8,
    target_column: str = "power",
    feature_names=None,
    scaler: ScalerParams | None = None,
) -> WindowedDataset:
    """Sample k: rows [k, k+window) predict target_column at row k+window."""
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    if target_column not in frame.columns:
        raise DataError(f"target column {target_column!r} not in frame")
    if feature_names is None:
        feature_names = list(frame.columns)
    else:
        feature_names = list(feature_names)
        missing = [c for c in feature_names if c not in frame.columns]
        if missing:
            raise DataError(f"feature column(s) {missing} not in frame")
    n = len(frame) - window
    if n < 1:
        raise DataError(f"need more than window={window} rows, got {len(frame)}")
    values = frame[feature_names].to_numpy(dtype=float)
    target = frame[target_column].to_numpy(dtype=float)
    inputs = np.stack([values[k : k + window] for k in range(n)])
    return WindowedDataset(
        inputs=inputs,
        targets=target[window:],
        window=window,
        feature_names=feature_names,
        target_name=target_column,
        scaler=scaler,
    )


def batch_indices(n: int, batch_size: int, shuffle: bool, rng=None) -> list[np.ndarray]:
    """Index arrays covering range(n) once; shuffled order if requested."""
    if n < 1:
        raise DataError(f"need at least one sample, got {n}")
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if shuffle:
        if rng is None:
            raise ConfigError("shuffle requires an rng")
        order = rng.permutation(n)
    else:
        order = np.arange(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def batches(ds: WindowedDataset, batch_size: int = 32, shuffle: bool = False, seed: int = 0):
    """(inputs, targets) batches; the final batch may be smaller."""
    rng = np.random.default_rng(seed) if shuffle else None
    return [
        (ds.inputs[idx], ds.targets[idx])
        for idx in batch_indices(ds.n, batch_size, shuffle, rng)
    ]


def synth_solar(
    days: int,
    step="5min",
    seed: int = 0,
    noise_sd: float = 0.05,
    peak_mw: float = 150.0,
) -> pd.DataFrame:
    """Deterministic synthetic plant data in the simulated schema.

    Closed forms, with h the fractional hour, d the day of year, and
    elev = max(0, sin(pi * (h - 6) / 12)):

        seasonal = 1 - 0.3 * cos(2*pi*(d - 1)/365)
        clean    = peak_mw * seasonal * elev
        power    = max(0, clean + (elev > 0) * noise_sd * peak_mw * gauss)

        temperature         = 15 + 10 * seasonal * elev
        dhi                 = 100 + 800 * elev
        cloud_type          = floor(4 + 3 * sin(2*pi*d/7))
        relative_humidity   = 70 - 30 * elev
        dew_point           = temperature - 5
        pressure            = 1013 + 5 * sin(2*pi*d/365)
        windspeed           = 3 + 2 * sin(2*pi*h/24)
        solar_zenith_angle  = 90 - 60 * elev

    Noise is gated by daylight (elev > 0), so nighttime rows are exactly 0,
    and with noise_sd=0 the noon value equals peak_mw * seasonal.
    The series starts 2006-01-01 00:00:00.
    """
    if days < 1:
        raise ConfigError(f"days must be >= 1, got {days}")
    step = pd.Timedelta(step)
    per_day = pd.Timedelta("1D") / step
    if per_day != int(per_day):
        raise ConfigError(f"step {step} must divide 24 hours")
    index = pd.date_range("2006-01-01", periods=days * int(per_day), freq=step, name="timestamp")
    h = (
        index.hour.to_numpy(dtype=float)
        + index.minute.to_numpy(dtype=float) / 60.0
        + index.second.to_numpy(dtype=float) / 3600.0
    )
    d = index.dayofyear.to_numpy(dtype=float)
    elev = np.maximum(0.0, np.sin(np.pi * (h - 6.0) / 12.0))
    seasonal = 1.0 - 0.3 * np.cos(2.0 * np.pi * (d - 1.0) / 365.0)
    clean = peak_mw * seasonal * elev
    rng = np.random.default_rng(seed)
    noise = noise_sd * peak_mw * rng.standard_normal(len(index))
    power = np.maximum(0.0, clean + (elev > 0.0) * noise)
    temperature = 15.0 + 10.0 * seasonal * elev
    frame = pd.DataFrame(
        {
            "power": power,
            "temperature": temperature,
            "dhi": 100.0 + 800.0 * elev,
            "cloud_type": np.floor(4.0 + 3.0 * np.sin(2.0 * np.pi * d / 7.0)),
            "relative_humidity": 70.0 - 30.0 * elev,
            "dew_point": temperature - 5.0,
            "pressure": 1013.0 + 5.0 * np.sin(2.0 * np.pi * d / 365.0),
            "windspeed": 3.0 + 2.0 * np.sin(2.0 * np.pi * h / 24.0),
            "solar_zenith_angle": 90.0 - 60.0 * elev,
        },
        index=index,
    )
    return frame
