"""Adaptive thermal-comfort banding and daily classroom comfort scores.

The acceptable indoor band is a linear function of the prevailing mean
outdoor temperature (0.31 * t_pmo + 17.8), +-3.5 degC at 80% acceptability
and +-2.5 degC at 90%, applicable for prevailing means between 10 and
33.5 degC. Outdoor wind raises the upper limit in steps (1.2/1.8/2.2 degC
above 0.6/0.9/1.2 m/s). A day's comfort score is the fraction of occupied
school hours (08:30-16:30 local, eight hourly slots) whose mean indoor
temperature falls inside the band.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import date
from typing import Mapping

import numpy as np

from .ingest import WeatherHistory
from .model import (
    DAY_SECONDS,
    SCHOOL_DAY_SLOTS,
    SCHOOL_DAY_START,
    Site,
    TimeSeries,
    date_to_day,
)

ADAPTIVE_SLOPE = 0.31
ADAPTIVE_INTERCEPT = 17.8
BAND_HALF_WIDTH = {80: 3.5, 90: 2.5}
PMO_APPLICABLE_MIN = 10.0
PMO_APPLICABLE_MAX = 33.5
# cooling offsets applied to the band's upper limit, by wind-speed step
AIRSPEED_STEPS = ((1.2, 2.2), (0.9, 1.8), (0.6, 1.2))


class ComfortError(ValueError):
    pass


class ModelInapplicable(ComfortError):
    """Adaptive model undefined: prevailing mean out of range or no data."""


@dataclass(frozen=True)
class ComfortBand:
    """Acceptable indoor-temperature interval for one day."""

    t_comfort: float
    low: float
    high: float
    acceptability: int
    day: int | None = None  # days since epoch, local calendar

    def contains(self, temp: float) -> bool:
        return self.low <= temp <= self.high


@dataclass(frozen=True)
class PrevailingMean:
    value: float
    days_used: int
    lookback_days: int


def prevailing_mean_outdoor(
    weather: WeatherHistory,
    day: date | int,
    tz_offset_minutes: int = 0,
    lookback_days: int = 7,
) -> PrevailingMean:
    """Mean of the daily mean outdoor temperatures over the preceding days.

    Days without any outdoor sample are skipped; if the whole lookback is
    empty the adaptive model is inapplicable.
    """
    day_index = day if isinstance(day, int) else date_to_day(day)
    local_days = (weather.times + tz_offset_minutes * 60) // DAY_SECONDS
    daily_means = []
    for d in range(day_index - lookback_days, day_index):
        mask = local_days == d
        if np.any(mask):
            daily_means.append(float(np.mean(weather.outdoor_temp[mask])))
    if not daily_means:
        raise ModelInapplicable(
            f"no outdoor data in the {lookback_days} days before day {day_index}")
    return PrevailingMean(
        value=float(np.mean(daily_means)),
        days_used=len(daily_means),
        lookback_days=lookback_days,
    )


def adaptive_band(t_pmo: float, acceptability: int = 80, day: int | None = None) -> ComfortBand:
    """Comfort band around the adaptive comfort temperature for `t_pmo`."""
    if acceptability not in BAND_HALF_WIDTH:
        raise ComfortError(f"acceptability must be 80 or 90, got {acceptability}")
    if not PMO_APPLICABLE_MIN <= t_pmo <= PMO_APPLICABLE_MAX:
        raise ModelInapplicable(
            f"prevailing mean {t_pmo} degC outside applicability range "
            f"[{PMO_APPLICABLE_MIN}, {PMO_APPLICABLE_MAX}]")
    t_comfort = ADAPTIVE_SLOPE * t_pmo + ADAPTIVE_INTERCEPT
    half = BAND_HALF_WIDTH[acceptability]
    return ComfortBand(
        t_comfort=t_comfort, low=t_comfort - half, high=t_comfort + half,
        acceptability=acceptability, day=day,
    )


def airspeed_extension(band: ComfortBand, wind_speed: float) -> ComfortBand:
    """Raise the band's upper limit for elevated air speed; the low limit,
    comfort temperature and acceptability are unchanged."""
    if wind_speed < 0:
        raise ComfortError(f"negative wind speed {wind_speed}")
    if wind_speed <= AIRSPEED_STEPS[-1][0]:  # no effect at or below 0.6 m/s
        return band
    offset = next(off for thr, off in AIRSPEED_STEPS if wind_speed >= thr)
    return replace(band, high=band.high + offset)


@dataclass(frozen=True)
class DailyComfortScore:
    room_id: str
    day: int  # days since epoch, local calendar
    score: float
    hours_evaluated: int
    hours_in_band: int
    t_pmo: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ComfortError(f"score {self.score} outside [0, 1]")


def hourly_comfort(indoor: TimeSeries, band: ComfortBand, hour_start: int) -> bool | None:
    """Whether the hour's mean indoor temperature lies in the band.

    Returns None when the hour has no samples.
    """
    lo = int(np.searchsorted(indoor.times, hour_start, side="left"))
    hi = int(np.searchsorted(indoor.times, hour_start + 3600, side="left"))
    if hi == lo:
        return None
    return band.contains(float(np.mean(indoor.values[lo:hi])))


def daily_comfort(
    indoor: TimeSeries,
    weather: WeatherHistory,
    day: date | int,
    *,
    room_id: str | None = None,
    acceptability: int = 80,
    tz_offset_minutes: int = 0,
    lookback_days: int = 7,
) -> DailyComfortScore | None:
    """Comfort score for one local calendar day of one room.

    The eight hourly slots tiling 08:30-16:30 are scored against the day's
    adaptive band, each extended by that hour's outdoor wind speed. Slots
    without indoor samples are excluded from both counts; a day with no
    evaluated slots has no score (None).
    """
    day_index = day if isinstance(day, int) else date_to_day(day)
    pmo = prevailing_mean_outdoor(weather, day_index, tz_offset_minutes, lookback_days)
    band = adaptive_band(pmo.value, acceptability, day=day_index)

    local_midnight_utc = day_index * DAY_SECONDS - tz_offset_minutes * 60
    evaluated = 0
    in_band = 0
    for slot in range(SCHOOL_DAY_SLOTS):
        hour_start = local_midnight_utc + SCHOOL_DAY_START + slot * 3600
        at = weather.at_hour(hour_start)
        slot_band = airspeed_extension(band, at[1]) if at is not None else band
        verdict = hourly_comfort(indoor, slot_band, hour_start)
        if verdict is None:
            continue
        evaluated += 1
        in_band += int(verdict)
    if evaluated == 0:
        return None
    return DailyComfortScore(
        room_id=room_id if room_id is not None else indoor.sensor_id,
        day=day_index,
        score=in_band / evaluated,
        hours_evaluated=evaluated,
        hours_in_band=in_band,
        t_pmo=pmo.value,
    )


@dataclass(frozen=True)
class SiteComfortSummary:
    site_id: str
    acceptability: int
    room_scores: dict[str, tuple[DailyComfortScore, ...]]
    mean: float
    minimum: float
    maximum: float
    q1: float
    q3: float
    days_skipped: int  # room-days where the model was inapplicable or silent


def site_comfort_summary(
    site: Site,
    room_series: Mapping[str, TimeSeries],
    weather: WeatherHistory,
    start: date | int,
    end: date | int,
    acceptability: int = 80,
    lookback_days: int = 7,
) -> SiteComfortSummary:
    """Daily scores per room plus the site's score distribution over [start, end)."""
    start_day = start if isinstance(start, int) else date_to_day(start)
    end_day = end if isinstance(end, int) else date_to_day(end)
    if end_day <= start_day:
        raise ComfortError(f"empty period: [{start_day}, {end_day})")

    room_scores: dict[str, tuple[DailyComfortScore, ...]] = {}
    all_scores: list[float] = []
    skipped = 0
    for room_id in sorted(room_series):
        scores = []
        for d in range(start_day, end_day):
            try:
                score = daily_comfort(
                    room_series[room_id], weather, d,
                    room_id=room_id, acceptability=acceptability,
                    tz_offset_minutes=site.tz_offset_minutes,
                    lookback_days=lookback_days,
                )
            except ModelInapplicable:
                skipped += 1
                continue
            if score is None:
                skipped += 1
                continue
            scores.append(score)
            all_scores.append(score.score)
        room_scores[room_id] = tuple(scores)

    if not all_scores:
        raise ComfortError(f"no rooms with scorable data in site {site.site_id}")
    arr = np.array(all_scores)
    q1, q3 = np.percentile(arr, [25.0, 75.0])
    return SiteComfortSummary(
        site_id=site.site_id,
        acceptability=acceptability,
        room_scores=room_scores,
        mean=float(np.mean(arr)),
        minimum=float(np.min(arr)),
        maximum=float(np.max(arr)),
        q1=float(q1),
        q3=float(q3),
        days_skipped=skipped,
    )
