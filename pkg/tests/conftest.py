from __future__ import annotations

from datetime import date, datetime, timezone

import numpy as np
import pytest

from schoolsense.model import (
    Classroom,
    DeploymentCatalog,
    Orientation,
    SensorKind,
    SensorMeta,
    Site,
    TimeSeries,
    to_epoch,
)


def utc(year, month, day, hour=0, minute=0, second=0) -> int:
    return int(datetime(year, month, day, hour, minute, second,
                        tzinfo=timezone.utc).timestamp())


def series_at(sensor_id: str, start: int, rate: int, values) -> TimeSeries:
    values = np.asarray(values, dtype=float)
    times = start + rate * np.arange(len(values), dtype=np.int64)
    return TimeSeries(sensor_id, times, values)


@pytest.fixture
def tiny_site() -> Site:
    return Site(
        site_id="alpha",
        latitude=38.0,
        longitude=23.7,
        start_time=utc(2017, 9, 4),
        tz_offset_minutes=0,
        rooms=(
            Classroom("r1", "alpha", Orientation.SW, "corner room"),
            Classroom("r2", "alpha", Orientation.N),
        ),
    )


@pytest.fixture
def tiny_catalog(tiny_site) -> DeploymentCatalog:
    return DeploymentCatalog(
        sites=(tiny_site,),
        sensors=(
            SensorMeta("t1", "alpha", SensorKind.INDOOR_TEMPERATURE, 30, "r1"),
            SensorMeta("h1", "alpha", SensorKind.RELATIVE_HUMIDITY, 30, "r1"),
            SensorMeta("p1", "alpha", SensorKind.POWER_PHASE, 30),
        ),
    )
