"""Series ingestion, splitting, windowing, scaling and synthetic drift.

Time indices are 1-based everywhere outside :class:`SeriesFrame`: ``X_t``
ends at ``v_t`` and ``Y_t`` starts at ``v_{t+1}``. The frame accessors are
the only place that converts to 0-based storage.
"""
import math
import os
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from typing import Iterator, List, Optional, Sequence, Tuple, Union, overload

import numpy as np
import pandas as pd
from loguru import logger
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.preprocessing import StandardScaler

from driftcast import metrics
from driftcast.exceptions import (
    BadSchedule,
    DataError,
    DegenerateSplit,
    EmptyData,
    EmptyRange,
    LeakageViolation,
    MissingFile,
    NonNumericCell,
    RaggedRows,
)

TIMESTAMP_COLUMNS = ("date", "timestamp")


@dataclass(frozen=True)
class SeriesFrame:
    """N variates observed over T steps, stored as an (N, T) read-only matrix."""

    values: np.ndarray
    variate_names: Tuple[str, ...]
    frequency: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise DataError(f"series values must be 2-D, got shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise EmptyData("series has no variates or no steps")
        if not np.all(np.isfinite(values)):
            raise DataError("series contains non-finite values")
        names = tuple(str(n) for n in self.variate_names)
        if len(names) != values.shape[0]:
            raise DataError(f"{len(names)} names for {values.shape[0]} variates")
        if len(set(names)) != len(names):
            raise DataError("variate names must be distinct")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "variate_names", names)

    @property
    def n_variates(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    def column(self, t: int) -> np.ndarray:
        """Observation ``v_t`` (1-based)."""
        return self.values[:, t - 1]

    def span(self, lo: int, hi: int) -> np.ndarray:
        """Observations ``v_lo .. v_hi`` inclusive (1-based), shape (N, hi-lo+1)."""
        return self.values[:, lo - 1:hi]

    def with_values(self, values: np.ndarray) -> "SeriesFrame":
        return SeriesFrame(values, self.variate_names, self.frequency)


@dataclass(frozen=True)
class WindowSample:
    x: np.ndarray  # (N, L)
    y: np.ndarray  # (N, H)
    origin: int


class WindowSet(Sequence):
    """Stacked window samples; indexing yields :class:`WindowSample`."""

    def __init__(self, x: np.ndarray, y: np.ndarray, origins: np.ndarray):
        self.x = x  # (M, N, L)
        self.y = y  # (M, N, H)
        self.origins = origins  # (M,)

    def __len__(self) -> int:
        return len(self.origins)

    @overload
    def __getitem__(self, index: int) -> WindowSample: ...

    @overload
    def __getitem__(self, index: slice) -> "WindowSet": ...

    def __getitem__(self, index):
        if isinstance(index, slice):
            return WindowSet(self.x[index], self.y[index], self.origins[index])
        return WindowSample(self.x[index], self.y[index], int(self.origins[index]))

    def __iter__(self) -> Iterator[WindowSample]:
        for i in range(len(self)):
            yield self[i]

    def take(self, indices: np.ndarray) -> "WindowSet":
        return WindowSet(self.x[indices], self.y[indices], self.origins[indices])

    @property
    def lookback(self) -> int:
        return self.x.shape[2]

    @property
    def horizon(self) -> int:
        return self.y.shape[2]


@dataclass(frozen=True)
class SplitIndices:
    train_end: int
    valid_end: int
    test_end: int

    def segments(self) -> List[Tuple[int, int]]:
        """1-based inclusive (lo, hi) of train, valid and test."""
        return [(1, self.train_end), (self.train_end + 1, self.valid_end), (self.valid_end + 1, self.test_end)]


# Ingestion ------------------------------------------------------------------


def _parse_number(cell: str, missing: Optional[float] = None) -> Optional[float]:
    try:
        value = float(cell)
    except ValueError:
        return missing
    return value if math.isfinite(value) else missing


def _ragged_row(error: pd.errors.ParserError) -> int:
    """1-based data row from a tokenizer error (file line minus the header)."""
    match = re.search(r"line (\d+)", str(error))
    return int(match.group(1)) - 1 if match else 0


def load_csv(path: str) -> SeriesFrame:
    """Read a header-first CSV into a frame; rows are time steps.

    A leading ``date``/``timestamp`` column, or any leading column whose first
    data cell is not a number, is treated as the time axis and dropped from
    the values. Error rows are 1-based data rows, error columns are 1-based
    file columns. A UTF-8 byte-order mark is stripped from the header.
    """
    if not os.path.exists(path):
        raise MissingFile(path)
    try:
        table = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8-sig")
    except pd.errors.EmptyDataError as e:
        raise EmptyData(f"{path} is empty") from e
    except pd.errors.ParserError as e:
        raise RaggedRows(_ragged_row(e)) from e
    if table.empty:
        raise EmptyData(f"{path} has no data rows")
    # every row one cell longer than the header turns into an implicit index
    if not isinstance(table.index, pd.RangeIndex):
        raise RaggedRows(1)
    # short rows are padded with NaN; empty cells stay ""
    short = table.isna().any(axis=1).to_numpy()
    if short.any():
        raise RaggedRows(int(np.argmax(short)) + 1)

    header = [str(h).strip() for h in table.columns]
    has_time = header[0].lower() in TIMESTAMP_COLUMNS or _parse_number(table.iat[0, 0]) is None
    first = 1 if has_time else 0
    if first >= len(header):
        raise EmptyData(f"{path} has no value columns")

    as_float = np.vectorize(partial(_parse_number, missing=math.nan), otypes=[np.float64])
    values = as_float(table.iloc[:, first:].to_numpy(dtype=object))
    bad = np.argwhere(np.isnan(values))
    if len(bad):
        row, col = bad[0]
        raise NonNumericCell(int(row) + 1, int(col) + first + 1)

    frequency = _infer_frequency(table.iloc[:, 0].tolist()) if has_time else ""
    logger.info(f"Loaded {path}", variates=values.shape[1], steps=values.shape[0], frequency=frequency)
    return SeriesFrame(values.T.copy(), tuple(header[first:]), frequency)


def _infer_frequency(stamps: List[str]) -> str:
    if len(stamps) < 3:
        return ""
    index = pd.to_datetime(pd.Series(stamps), errors="coerce")
    if index.isna().any():
        return ""
    try:
        return pd.infer_freq(pd.DatetimeIndex(index)) or ""
    except (TypeError, ValueError):
        return ""


# Splits and windows ---------------------------------------------------------


def chronological_split(frame: SeriesFrame, ratios: Sequence[float] = (20, 5, 75)) -> SplitIndices:
    """Split boundaries by floor of the cumulative ratio; no shuffling."""
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise DegenerateSplit(f"ratios must be three nonnegative numbers, got {list(ratios)}")
    parts = [Fraction(r) for r in ratios]
    total = sum(parts)
    if total <= 0:
        raise DegenerateSplit("ratios must sum to a positive number")
    steps = frame.n_steps
    train_end = math.floor(steps * parts[0] / total)
    valid_end = math.floor(steps * (parts[0] + parts[1]) / total)
    if not 0 < train_end < valid_end < steps:
        raise DegenerateSplit(f"split ({train_end}, {valid_end}, {steps}) leaves a segment empty")
    return SplitIndices(train_end, valid_end, steps)


def make_windows(frame: SeriesFrame, lookback: int, horizon: int, bounds: Tuple[int, int]) -> WindowSet:
    """One sample per origin in ``[max(lo, L), min(hi, T-H)]``, stride 1."""
    if lookback < 1 or horizon < 1:
        raise EmptyRange(f"lookback and horizon must be >= 1, got {lookback}, {horizon}")
    lo, hi = bounds
    first = max(lo, lookback)
    last = min(hi, frame.n_steps - horizon)
    if first > last:
        raise EmptyRange(f"no origin in [{first}, {last}] for L={lookback}, H={horizon}")
    views = sliding_window_view(frame.values, lookback + horizon, axis=1)
    starts = np.arange(first - lookback, last - lookback + 1)
    block = np.ascontiguousarray(views[:, starts, :].transpose(1, 0, 2))
    return WindowSet(
        x=block[:, :, :lookback].copy(),
        y=block[:, :, lookback:].copy(),
        origins=np.arange(first, last + 1),
    )


# Standardization ------------------------------------------------------------


@dataclass(frozen=True)
class ScalerRecord:
    """Per-variate statistics of a fitted z-score; enough to invert it."""

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray
    scaler: StandardScaler = field(repr=False, compare=False)

    def invert(self, frame: SeriesFrame) -> SeriesFrame:
        return frame.with_values(self.scaler.inverse_transform(frame.values.T).T)


def standardize(frame: SeriesFrame, stats_range: Tuple[int, int]) -> Tuple[SeriesFrame, ScalerRecord]:
    """Z-score every step with population statistics from ``stats_range`` only.

    Constant variates keep std 1 and are flagged.
    """
    lo, hi = stats_range
    if not 1 <= lo <= hi <= frame.n_steps:
        raise EmptyRange(f"stats range [{lo}, {hi}] outside [1, {frame.n_steps}]")
    scaler = StandardScaler()
    scaler.fit(frame.span(lo, hi).T)
    constant = (scaler.scale_ == 1.0) & (np.sqrt(scaler.var_) != 1.0)
    for name in np.asarray(frame.variate_names)[constant]:
        logger.warning(f"Variate {name} is constant over the statistics range; std clamped to 1")
    scaled = frame.with_values(scaler.transform(frame.values.T).T)
    record = ScalerRecord(scaler.mean_.copy(), scaler.scale_.copy(), constant, scaler)
    return scaled, record


# Synthetic recurring drift --------------------------------------------------


@dataclass(frozen=True)
class RegimeSpec:
    """One data-generating regime: AR(2) + sinusoid + level + Gaussian noise."""

    ar: Tuple[float, float] = (0.5, -0.2)
    amplitude: float = 1.0
    period: float = 24.0
    noise: float = 0.1
    level: float = 0.0


@dataclass(frozen=True)
class SyntheticSpec:
    n_variates: int
    n_steps: int
    regimes: Tuple[RegimeSpec, ...]
    schedule: Tuple[Tuple[int, int], ...]
    seed: int = 0

    def validate(self) -> None:
        if self.n_variates < 1 or self.n_steps < 1:
            raise BadSchedule("n_variates and n_steps must be positive")
        if not self.schedule:
            raise BadSchedule("schedule is empty")
        starts = [start for start, _ in self.schedule]
        if starts[0] != 1:
            raise BadSchedule(f"schedule must start at step 1, starts at {starts[0]}")
        if any(b <= a for a, b in zip(starts, starts[1:])) or starts[-1] > self.n_steps:
            raise BadSchedule("schedule starts must increase strictly and stay within n_steps")
        ids = [rid for _, rid in self.schedule]
        if any(not 0 <= rid < len(self.regimes) for rid in ids):
            raise BadSchedule(f"schedule references unknown regimes: {ids}")
        if any(r.period <= 0 for r in self.regimes):
            raise BadSchedule("regime periods must be positive")
        recurring = 0
        for rid in set(ids):
            positions = [i for i, other in enumerate(ids) if other == rid]
            if any(b - a >= 2 for a, b in zip(positions, positions[1:])):
                recurring += 1
        if recurring < 2:
            raise BadSchedule("at least two regimes must recur in non-adjacent segments")


def default_regimes(n_regimes: int) -> Tuple[RegimeSpec, ...]:
    base = (
        RegimeSpec(ar=(0.6, -0.2), amplitude=1.0, period=24.0, noise=0.1, level=0.0),
        RegimeSpec(ar=(0.2, 0.1), amplitude=2.0, period=12.0, noise=0.1, level=1.5),
        RegimeSpec(ar=(-0.3, 0.2), amplitude=0.5, period=48.0, noise=0.1, level=-1.0),
    )
    regimes = []
    for i in range(n_regimes):
        r = base[i % len(base)]
        stretch = 1.0 + 0.5 * (i // len(base))
        regimes.append(RegimeSpec(r.ar, r.amplitude * stretch, r.period * stretch, r.noise, r.level))
    return tuple(regimes)


def recurring_schedule(n_steps: int, n_regimes: int, segment_length: int) -> Tuple[Tuple[int, int], ...]:
    """Cycle through regimes 0..K-1 in fixed-length segments."""
    if segment_length < 1:
        raise BadSchedule("segment_length must be positive")
    return tuple(
        (start, i % n_regimes) for i, start in enumerate(range(1, n_steps + 1, segment_length))
    )


def generate_synthetic(spec: SyntheticSpec) -> Tuple[SeriesFrame, np.ndarray]:
    """Generate a frame and its per-step regime labels (0-based regime ids)."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    shocks = rng.standard_normal((spec.n_steps, spec.n_variates))
    labels = np.empty(spec.n_steps, dtype=np.int64)
    bounds = [start for start, _ in spec.schedule] + [spec.n_steps + 1]
    for (start, rid), end in zip(spec.schedule, bounds[1:]):
        labels[start - 1:end - 1] = rid

    phases = 2.0 * np.pi * np.arange(spec.n_variates) / spec.n_variates
    values = np.zeros((spec.n_variates, spec.n_steps))
    zero = np.zeros(spec.n_variates)
    for i in range(spec.n_steps):
        r = spec.regimes[labels[i]]
        prev1 = values[:, i - 1] if i >= 1 else zero
        prev2 = values[:, i - 2] if i >= 2 else zero
        season = r.amplitude * np.sin(2.0 * np.pi * (i + 1) / r.period + phases)
        values[:, i] = r.ar[0] * prev1 + r.ar[1] * prev2 + r.level + season + r.noise * shocks[i]

    names = tuple(f"v{n}" for n in range(spec.n_variates))
    logger.debug("Synthetic series generated", steps=spec.n_steps, segments=len(spec.schedule))
    return SeriesFrame(values, names, "synthetic"), labels


# Guarded online view --------------------------------------------------------


class GuardedStream:
    """Clocked read access to a frame.

    Reads past the clock raise :class:`LeakageViolation` unless the stream is
    in oracle mode, where each out-of-clock time index is counted instead.
    Rejected reads are tallied in ``violations``.
    """

    def __init__(self, frame: SeriesFrame, clock: int, oracle_mode: bool = False):
        if not 1 <= clock <= frame.n_steps:
            raise DataError(f"clock {clock} outside [1, {frame.n_steps}]")
        self.frame = frame
        self.oracle_mode = oracle_mode
        self._clock = clock
        self.oracle_reads = 0
        self.violations = 0
        self.audit_log: List[Tuple[int, int, int]] = []

    @property
    def clock(self) -> int:
        return self._clock

    def advance(self, clock: int) -> None:
        if clock < self._clock or clock > self.frame.n_steps:
            raise DataError(f"cannot move clock from {self._clock} to {clock}")
        self._clock = clock

    def _check(self, lo: int, hi: int) -> None:
        if lo < 1 or hi > self.frame.n_steps or lo > hi:
            raise DataError(f"read [{lo}, {hi}] outside [1, {self.frame.n_steps}]")
        if hi <= self._clock:
            return
        if not self.oracle_mode:
            self.violations += 1
            metrics.LEAKAGE_VIOLATIONS.inc()
            raise LeakageViolation(max(lo, self._clock + 1), self._clock)
        beyond = hi - max(lo - 1, self._clock)
        self.oracle_reads += beyond
        self.audit_log.append((self._clock, lo, hi))
        metrics.ORACLE_READS.inc(beyond)

    def read(self, index: int) -> np.ndarray:
        self._check(index, index)
        return self.frame.column(index)

    def read_span(self, lo: int, hi: int) -> np.ndarray:
        self._check(lo, hi)
        return self.frame.span(lo, hi)

    def lookback(self, origin: int, lookback: int) -> np.ndarray:
        return self.read_span(origin - lookback + 1, origin)

    def target(self, origin: int, horizon: int) -> np.ndarray:
        return self.read_span(origin + 1, origin + horizon)

    def window(self, origin: int, lookback: int, horizon: int) -> WindowSample:
        return WindowSample(self.lookback(origin, lookback), self.target(origin, horizon), origin)


def guarded_view(frame: SeriesFrame, clock: int, oracle_mode: bool = False) -> GuardedStream:
    return GuardedStream(frame, clock, oracle_mode)
