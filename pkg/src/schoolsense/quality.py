"""Data-quality pipeline: availability accounting, windowed IQR outlier
detection and repair, moving-window smoothing and gap filling.

Outlier bounds follow the interquartile-range rule: values outside
[Q1 - 3*IQR, Q3 + 3*IQR] of their trailing time window are flagged. Zero
readings are flagged for sensor kinds where zero is physically implausible,
and power sensors are additionally screened for transient spikes. Flagged
samples are replaced by the window minimum or maximum of the surviving
(non-flagged) samples. Repair order is fixed: flag, replace, fill, smooth.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .model import (
    DAY_SECONDS,
    DeploymentCatalog,
    SensorKind,
    SensorMeta,
    Site,
    TimeSeries,
    TimeWindow,
    slice_series,
    to_epoch,
)


class QualityError(ValueError):
    """Invalid input to a quality operation."""


@dataclass(frozen=True)
class QuartileSummary:
    """Quartiles of a window plus the derived acceptance bounds."""

    q1: float
    q3: float
    iqr: float
    lower: float
    upper: float

    @classmethod
    def from_quartiles(cls, q1: float, q3: float) -> QuartileSummary:
        if q3 < q1:
            raise QualityError(f"q3 < q1 ({q3} < {q1})")
        iqr = q3 - q1
        return cls(q1=q1, q3=q3, iqr=iqr, lower=q1 - 3.0 * iqr, upper=q3 + 3.0 * iqr)


def quartiles(values) -> QuartileSummary:
    """Quartile summary of a value list, linear interpolation between ranks."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or len(arr) < 4:
        raise QualityError(f"need at least 4 values, got {arr.size}")
    q1, q3 = np.percentile(arr, [25.0, 75.0])
    return QuartileSummary.from_quartiles(float(q1), float(q3))


@dataclass(frozen=True)
class AvailabilityCell:
    """Expected vs observed sample counts for one sensor on one UTC day."""

    sensor_id: str
    day: int  # days since epoch, UTC
    expected: int
    observed: int

    @property
    def fraction(self) -> float:
        if self.expected <= 0:
            return 1.0
        return min(1.0, self.observed / self.expected)


def _grid_count(start: int, end: int, rate: int) -> int:
    """Number of grid points k*rate in [start, end)."""
    if end <= start:
        return 0
    first = -(-start // rate)
    last = -(-end // rate) - 1
    return max(0, last - first + 1)


def availability_matrix(
    series: Mapping[str, TimeSeries],
    catalog: DeploymentCatalog,
    end,
) -> list[AvailabilityCell]:
    """One cell per sensor per UTC day from its site's start to `end`.

    Expected counts come from the sensor's sensing rate on a grid anchored at
    epoch-multiples of the rate, pro-rated on the first and last day.
    """
    end_epoch = to_epoch(end)
    cells: list[AvailabilityCell] = []
    for sensor_id in sorted(series):
        meta = catalog.sensor(sensor_id)
        site = catalog.site(meta.site_id)
        if end_epoch <= site.start_time:
            continue
        clipped = slice_series(series[sensor_id], site.start_time, end_epoch)
        first_day = site.start_time // DAY_SECONDS
        last_day = (end_epoch - 1) // DAY_SECONDS
        n_days = last_day - first_day + 1
        observed = np.zeros(n_days, dtype=np.int64)
        if len(clipped):
            np.add.at(observed, (clipped.times // DAY_SECONDS) - first_day, 1)
        for i in range(n_days):
            day = first_day + i
            window_start = max(site.start_time, day * DAY_SECONDS)
            window_end = min(end_epoch, (day + 1) * DAY_SECONDS)
            expected = _grid_count(window_start, window_end, meta.sensing_rate)
            cells.append(AvailabilityCell(sensor_id, int(day), expected, int(observed[i])))
    return cells


def outage_percentage(cells: Iterable[AvailabilityCell]) -> float:
    """100 * (1 - observed/expected) over the cells' full history."""
    total_expected = 0
    total_observed = 0
    for cell in cells:
        total_expected += cell.expected
        total_observed += min(cell.observed, cell.expected)
    if total_expected == 0:
        raise QualityError("no expected samples in group")
    return 100.0 * (1.0 - total_observed / total_expected)


def site_outage_percentages(
    cells: Iterable[AvailabilityCell], catalog: DeploymentCatalog
) -> dict[str, float]:
    groups: dict[str, list[AvailabilityCell]] = {}
    for cell in cells:
        groups.setdefault(catalog.sensor(cell.sensor_id).site_id, []).append(cell)
    return {site_id: outage_percentage(group) for site_id, group in sorted(groups.items())}


def category_outage_percentages(
    cells: Iterable[AvailabilityCell], catalog: DeploymentCatalog
) -> dict[str, float]:
    groups: dict[str, list[AvailabilityCell]] = {}
    for cell in cells:
        groups.setdefault(catalog.sensor(cell.sensor_id).kind.category, []).append(cell)
    return {cat: outage_percentage(group) for cat, group in sorted(groups.items())}


class FlagKind(Enum):
    ZERO_ERROR = "zero_error"
    SPIKE = "spike"
    BOUND_VIOLATION = "bound_violation"


@dataclass(frozen=True)
class OutlierFlag:
    index: int
    kind: FlagKind


def zero_implausible_for(meta: SensorMeta, site: Site) -> bool:
    """Whether a 0 reading from this sensor can only be a sensor error."""
    if meta.kind is SensorKind.RELATIVE_HUMIDITY:
        return True
    if meta.kind is SensorKind.INDOOR_TEMPERATURE:
        return not site.cold_climate
    return False


def _interp_rank(sorted_vals: list[float], q: float) -> float:
    pos = (len(sorted_vals) - 1) * q
    lo = int(pos)
    frac = pos - lo
    if frac == 0.0:
        return sorted_vals[lo]
    return sorted_vals[lo] + frac * (sorted_vals[lo + 1] - sorted_vals[lo])


def flag_outliers(
    series: TimeSeries,
    window: TimeWindow,
    *,
    kind: SensorKind | None = None,
    zero_implausible: bool = False,
    spike_sigma: float = 5.0,
    min_window_samples: int = 4,
) -> list[OutlierFlag]:
    """Flag outliers per sample against its trailing time window.

    A sample is evaluated against the quartile bounds of the window
    (t - W, t] containing it; windows holding fewer than
    `min_window_samples` samples leave the sample unflagged. Zero readings
    are always flagged where zero is implausible for the sensor kind; they
    need no window. Power sensors get a spike check: a jump away from the
    last surviving value larger than `spike_sigma` trailing standard
    deviations. At most one flag is emitted per sample (zero > spike >
    bound violation).
    """
    w = window.duration
    times = series.times
    values = series.values
    n = len(series)
    flags: list[OutlierFlag] = []
    check_spikes = kind is SensorKind.POWER_PHASE

    window_vals: list[float] = []  # sorted values of all samples in window
    in_window: list[int] = []      # indices currently inside the window
    left = 0
    # running stats over the window's surviving (non-flagged) samples
    clean_sum = 0.0
    clean_sumsq = 0.0
    clean_count = 0
    flagged = np.zeros(n, dtype=bool)
    last_clean: float | None = None

    for i in range(n):
        t = times[i]
        v = float(values[i])
        while left < i and times[left] <= t - w:
            old = float(values[left])
            del window_vals[bisect.bisect_left(window_vals, old)]
            if not flagged[left]:
                clean_sum -= old
                clean_sumsq -= old * old
                clean_count -= 1
            left += 1
        bisect.insort(window_vals, v)

        flag: FlagKind | None = None
        if zero_implausible and v == 0.0:
            flag = FlagKind.ZERO_ERROR
        elif check_spikes and clean_count >= min_window_samples and last_clean is not None:
            variance = max(0.0, clean_sumsq / clean_count - (clean_sum / clean_count) ** 2)
            if abs(v - last_clean) > spike_sigma * math.sqrt(variance):
                flag = FlagKind.SPIKE
        if flag is None and len(window_vals) >= min_window_samples:
            q1 = _interp_rank(window_vals, 0.25)
            q3 = _interp_rank(window_vals, 0.75)
            bounds = QuartileSummary.from_quartiles(q1, q3)
            if v < bounds.lower or v > bounds.upper:
                flag = FlagKind.BOUND_VIOLATION

        if flag is not None:
            flagged[i] = True
            flags.append(OutlierFlag(i, flag))
        else:
            clean_sum += v
            clean_sumsq += v * v
            clean_count += 1
            last_clean = v
    return flags


@dataclass(frozen=True)
class RepairResult:
    series: TimeSeries
    replaced: tuple[tuple[int, float, float], ...]  # (time, old value, new value)
    dropped: tuple[int, ...]  # times whose window held no surviving sample


def replace_outliers(
    series: TimeSeries, flags: Iterable[OutlierFlag], window: TimeWindow
) -> RepairResult:
    """Replace each flagged sample with its window min or max.

    Replacement values come from the non-flagged samples of the trailing
    window so an outlier cannot pollute its own repair: below-median values
    become the window minimum, above-median the window maximum. A flagged
    sample whose window holds no surviving sample is dropped and recorded.
    """
    flag_list = sorted(flags, key=lambda f: f.index)
    n = len(series)
    for f in flag_list:
        if not 0 <= f.index < n:
            raise QualityError(f"flag index {f.index} outside series of length {n}")
    if not flag_list:
        return RepairResult(series, (), ())

    flagged = np.zeros(n, dtype=bool)
    for f in flag_list:
        flagged[f.index] = True

    w = window.duration
    times = series.times
    values = series.values.copy()
    clean_vals: list[float] = []  # sorted non-flagged values in window
    left = 0
    replaced = []
    dropped = []
    keep = np.ones(n, dtype=bool)

    for i in range(n):
        t = times[i]
        while left < i and times[left] <= t - w:
            if not flagged[left]:
                del clean_vals[bisect.bisect_left(clean_vals, float(series.values[left]))]
            left += 1
        if flagged[i]:
            v = float(series.values[i])
            if not clean_vals:
                keep[i] = False
                dropped.append(int(t))
                continue
            median = _interp_rank(clean_vals, 0.5)
            new = clean_vals[0] if v < median else clean_vals[-1]
            values[i] = new
            replaced.append((int(t), v, new))
        else:
            bisect.insort(clean_vals, float(series.values[i]))

    repaired = TimeSeries(series.sensor_id, times[keep], values[keep])
    return RepairResult(repaired, tuple(replaced), tuple(dropped))


def moving_average(series: TimeSeries, window: TimeWindow) -> TimeSeries:
    """Each value becomes the mean of the trailing window (t - W, t]."""
    if len(series) == 0:
        return series
    w = window.duration
    times = series.times
    starts = np.searchsorted(times, times - w, side="right")
    prefix = np.concatenate(([0.0], np.cumsum(series.values)))
    idx = np.arange(1, len(series) + 1)
    means = (prefix[idx] - prefix[starts]) / (idx - starts)
    return series.replace_values(means)


@dataclass(frozen=True)
class FillResult:
    series: TimeSeries
    filled: tuple[int, ...]    # grid times that were imputed
    unfilled: tuple[int, ...]  # grid times left absent (empty window)


def fill_missing(series: TimeSeries, meta: SensorMeta, window: TimeWindow) -> FillResult:
    """Align a series to its expected sampling grid and impute gaps.

    The grid runs at the sensor's sensing rate, anchored at epoch multiples
    of the rate, spanning the observed extent of the series. Each missing
    grid point is filled with the mean of the observed samples in its
    trailing window (g - W, g); grid points with an empty window stay
    absent and are reported.
    """
    rate = meta.sensing_rate
    if len(series) == 0:
        return FillResult(series, (), ())
    w = window.duration
    times = series.times
    values = series.values
    grid_first = -(-int(times[0]) // rate)
    grid_last = int(times[-1]) // rate
    if grid_last < grid_first:
        return FillResult(series, (), ())
    grid = np.arange(grid_first, grid_last + 1, dtype=np.int64) * rate

    # bucket observed samples onto the grid; the last sample in a bucket wins
    bucket = times // rate
    keep_mask = (bucket >= grid_first) & (bucket <= grid_last)
    bucket_idx = (bucket[keep_mask] - grid_first).astype(np.int64)
    grid_values = np.full(len(grid), np.nan)
    grid_values[bucket_idx] = values[keep_mask]  # later samples overwrite earlier

    missing = np.flatnonzero(np.isnan(grid_values))
    prefix = np.concatenate(([0.0], np.cumsum(values)))
    filled = []
    unfilled = []
    for gi in missing:
        g = int(grid[gi])
        lo = int(np.searchsorted(times, g - w, side="right"))
        hi = int(np.searchsorted(times, g, side="left"))
        if hi > lo:
            grid_values[gi] = (prefix[hi] - prefix[lo]) / (hi - lo)
            filled.append(g)
        else:
            unfilled.append(g)
    present = ~np.isnan(grid_values)
    out = TimeSeries(series.sensor_id, grid[present], grid_values[present])
    return FillResult(out, tuple(filled), tuple(unfilled))


@dataclass(frozen=True)
class QualityConfig:
    """Window sizes and thresholds for the repair pipeline.

    Outlier detection needs a day of distributional context, but repair and
    imputation must source values locally: a midday sample replaced or
    filled from a 24 h window lands near the overnight minimum and carves an
    artificial dip into the series.
    """

    env_window: TimeWindow = field(default_factory=lambda: TimeWindow.hours(24))
    power_window: TimeWindow = field(default_factory=lambda: TimeWindow.hours(1))
    repair_window: TimeWindow = field(default_factory=lambda: TimeWindow.hours(1))
    fill_window: TimeWindow = field(default_factory=lambda: TimeWindow.hours(2))
    smooth_window: TimeWindow = field(default_factory=lambda: TimeWindow.minutes(5))
    spike_sigma: float = 5.0
    min_window_samples: int = 4

    def outlier_window_for(self, kind: SensorKind) -> TimeWindow:
        return self.power_window if kind is SensorKind.POWER_PHASE else self.env_window


@dataclass(frozen=True)
class RepairedSeries:
    """Outcome of the flag -> replace -> fill -> smooth pipeline."""

    series: TimeSeries  # final (smoothed) series
    flags: tuple[OutlierFlag, ...]
    replaced: tuple[tuple[int, float, float], ...]
    dropped: tuple[int, ...]
    filled: tuple[int, ...]
    unfilled: tuple[int, ...]

    def flag_count(self, kind: FlagKind) -> int:
        return sum(1 for f in self.flags if f.kind is kind)


def repair_series(
    series: TimeSeries,
    meta: SensorMeta,
    site: Site,
    config: QualityConfig | None = None,
) -> RepairedSeries:
    """Run the full repair pipeline for one sensor series."""
    config = config or QualityConfig()
    window = config.outlier_window_for(meta.kind)
    flags = flag_outliers(
        series,
        window,
        kind=meta.kind,
        zero_implausible=zero_implausible_for(meta, site),
        spike_sigma=config.spike_sigma,
        min_window_samples=config.min_window_samples,
    )
    repair = replace_outliers(series, flags, config.repair_window)
    fill = fill_missing(repair.series, meta, config.fill_window)
    smoothed = moving_average(fill.series, config.smooth_window)
    return RepairedSeries(
        series=smoothed,
        flags=tuple(flags),
        replaced=repair.replaced,
        dropped=repair.dropped,
        filled=fill.filled,
        unfilled=fill.unfilled,
    )
