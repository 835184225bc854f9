from __future__ import annotations

import math
from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from schoolsense.model import (
    SensorKind,
    SensorMeta,
    Site,
    TimeSeries,
    TimeWindow,
)
from schoolsense.quality import (
    AvailabilityCell,
    FlagKind,
    QualityConfig,
    QualityError,
    availability_matrix,
    category_outage_percentages,
    fill_missing,
    flag_outliers,
    moving_average,
    outage_percentage,
    quartiles,
    repair_series,
    replace_outliers,
    site_outage_percentages,
    zero_implausible_for,
)

from conftest import series_at, utc


def rank_percentile(sorted_vals: list[float], q: float) -> float:
    """Brute-force linear interpolation between closest ranks."""
    pos = (len(sorted_vals) - 1) * q
    lo = math.floor(pos)
    hi = math.ceil(pos)
    if lo == hi:
        return sorted_vals[lo]
    return sorted_vals[lo] * (hi - pos) + sorted_vals[hi] * (pos - lo)


def test_quartiles_eight_values():
    # oracle: sorted [1..8], q1 at rank 1.75 -> 2.75, q3 at rank 5.25 -> 6.25
    qs = quartiles([1, 2, 3, 4, 5, 6, 7, 8])
    assert qs.q1 == pytest.approx(2.75)
    assert qs.q3 == pytest.approx(6.25)
    assert qs.iqr == pytest.approx(3.5)
    assert qs.lower == pytest.approx(-7.75)
    assert qs.upper == pytest.approx(16.75)


def test_quartiles_constant_list():
    qs = quartiles([5, 5, 5, 5])
    assert qs.iqr == 0
    assert qs.lower == qs.upper == 5


def test_quartiles_too_few():
    with pytest.raises(QualityError):
        quartiles([1, 2, 3])


@given(st.lists(st.floats(-1e6, 1e6), min_size=4, max_size=60))
def test_quartiles_permutation_invariant(values):
    rng = np.random.default_rng(0)
    shuffled = list(values)
    rng.shuffle(shuffled)
    a, b = quartiles(values), quartiles(shuffled)
    assert a.q1 == pytest.approx(b.q1, rel=1e-12, abs=1e-12)
    assert a.q3 == pytest.approx(b.q3, rel=1e-12, abs=1e-12)


@given(st.lists(st.floats(-1e6, 1e6), min_size=4, max_size=80))
def test_quartiles_match_rank_oracle(values):
    qs = quartiles(values)
    s = sorted(values)
    assert qs.q1 == pytest.approx(rank_percentile(s, 0.25), rel=1e-9, abs=1e-9)
    assert qs.q3 == pytest.approx(rank_percentile(s, 0.75), rel=1e-9, abs=1e-9)


def _avail_catalog(rate=30):
    site = Site("a", 0.0, 0.0, utc(2017, 9, 4))
    meta = SensorMeta("s1", "a", SensorKind.INDOOR_TEMPERATURE, rate, None)
    from schoolsense.model import DeploymentCatalog
    return DeploymentCatalog((site,), (meta,))


def test_availability_full_day():
    catalog = _avail_catalog()
    series = series_at("s1", utc(2017, 9, 4), 30, np.full(2880, 20.0))
    cells = availability_matrix({"s1": series}, catalog, utc(2017, 9, 5))
    assert len(cells) == 1
    assert cells[0].expected == 2880
    assert cells[0].observed == 2880
    assert cells[0].fraction == 1.0


def test_availability_partial_day():
    catalog = _avail_catalog()
    series = series_at("s1", utc(2017, 9, 4), 30, np.full(2160, 20.0))
    cells = availability_matrix({"s1": series}, catalog, utc(2017, 9, 5))
    assert cells[0].fraction == pytest.approx(0.75)


def test_availability_no_cell_before_site_start():
    catalog = _avail_catalog()
    # samples the day before the site start are clipped out
    series = series_at("s1", utc(2017, 9, 3), 30, np.full(2880 * 2, 20.0))
    cells = availability_matrix({"s1": series}, catalog, utc(2017, 9, 5))
    days = {c.day for c in cells}
    assert days == {utc(2017, 9, 4) // 86400}


def test_outage_zero_when_complete():
    cells = [AvailabilityCell("s1", 0, 100, 100), AvailabilityCell("s1", 1, 100, 100)]
    assert outage_percentage(cells) == 0.0


def test_outage_half_deleted():
    cells = [AvailabilityCell("s1", d, 2880, 1440) for d in range(5)]
    assert outage_percentage(cells) == pytest.approx(50.0)


def test_outage_empty_group():
    with pytest.raises(QualityError):
        outage_percentage([])


def test_outage_matches_injected_fraction():
    from schoolsense.synthgen import RoomSpec, ScenarioSpec, SiteSpec, generate
    spec = ScenarioSpec(
        seed=5, start=date(2017, 9, 4), days=30,
        sites=(SiteSpec(site_id="a", outage_fraction=0.1778,
                        rooms=(RoomSpec("r1"),)),))
    out = generate(spec)
    cells = availability_matrix(out.series, out.catalog, utc(2017, 10, 4))
    pct = site_outage_percentages(cells, out.catalog)["a"]
    assert pct == pytest.approx(17.78, abs=0.01)


def test_flag_zero_error_example():
    # oracle: window [0, 20.1, 20.2, 20.3, 20.4]: q1=20.1, q3=20.3,
    # iqr=0.2 -> lower=19.5; 0.0 sits below it and is zero-implausible
    series = series_at("h", utc(2017, 9, 4), 30, [20.1, 20.3, 20.2, 20.4, 0.0])
    flags = flag_outliers(series, TimeWindow.hours(1), zero_implausible=True)
    assert [(f.index, f.kind) for f in flags] == [(4, FlagKind.ZERO_ERROR)]
    # even without the zero rule the quartile bounds flag it
    flags = flag_outliers(series, TimeWindow.hours(1), zero_implausible=False)
    assert [(f.index, f.kind) for f in flags] == [(4, FlagKind.BOUND_VIOLATION)]


def test_flag_constant_series_clean():
    series = series_at("s", utc(2017, 9, 4), 30, np.full(100, 21.0))
    assert flag_outliers(series, TimeWindow.hours(1)) == []


def test_flag_small_windows_pass_unflagged():
    series = series_at("s", utc(2017, 9, 4), 30, [20.0, 900.0, 20.1])
    assert flag_outliers(series, TimeWindow.hours(1)) == []


def test_flag_power_spike_recovered():
    from schoolsense.synthgen import RoomSpec, ScenarioSpec, SiteSpec, generate
    spec = ScenarioSpec(
        seed=9, start=date(2017, 9, 4), days=7,
        sites=(SiteSpec(site_id="a", spike_rate=0.01, rooms=(RoomSpec("r1"),)),))
    out = generate(spec)
    series = out.series["a-power"]
    truth_times = {t for t, kind in out.ground_truth.outliers["a-power"]}
    flags = flag_outliers(series, TimeWindow.hours(1), kind=SensorKind.POWER_PHASE)
    flagged_times = {int(series.times[f.index]) for f in flags}
    assert truth_times, "scenario must inject spikes"
    recall = len(truth_times & flagged_times) / len(truth_times)
    assert recall >= 0.95


def test_zero_implausibility_rules(tiny_site):
    humid = SensorMeta("h", "alpha", SensorKind.RELATIVE_HUMIDITY, 30, "r1")
    temp = SensorMeta("t", "alpha", SensorKind.INDOOR_TEMPERATURE, 30, "r1")
    power = SensorMeta("p", "alpha", SensorKind.POWER_PHASE, 30)
    assert zero_implausible_for(humid, tiny_site)
    assert zero_implausible_for(temp, tiny_site)
    cold = Site("cold", 60.0, 25.0, 0, cold_climate=True)
    assert not zero_implausible_for(temp, cold)
    assert zero_implausible_for(humid, cold)
    assert not zero_implausible_for(power, tiny_site)


def test_replace_zero_with_window_min():
    series = series_at("h", utc(2017, 9, 4), 30, [20.1, 20.3, 20.2, 20.4, 0.0])
    flags = flag_outliers(series, TimeWindow.hours(1), zero_implausible=True)
    result = replace_outliers(series, flags, TimeWindow.hours(1))
    assert result.series.values.tolist() == [20.1, 20.3, 20.2, 20.4, 20.1]
    assert result.replaced == ((int(series.times[4]), 0.0, 20.1),)
    assert result.dropped == ()


def test_replace_high_spike_with_window_max():
    series = series_at("p", utc(2017, 9, 4), 30, [500.0, 501.0, 499.0, 502.0, 5000.0])
    flags = flag_outliers(series, TimeWindow.hours(1), kind=SensorKind.POWER_PHASE)
    assert [f.kind for f in flags] == [FlagKind.SPIKE]
    result = replace_outliers(series, flags, TimeWindow.hours(1))
    assert result.series.values[-1] == 502.0


def test_replace_no_flags_identity():
    series = series_at("s", utc(2017, 9, 4), 30, [1.0, 2.0, 3.0])
    result = replace_outliers(series, [], TimeWindow.hours(1))
    assert result.series is series


def test_replace_drops_when_window_all_flagged():
    series = series_at("h", utc(2017, 9, 4), 30, [0.0, 50.0])
    flags = flag_outliers(series, TimeWindow.hours(1), zero_implausible=True)
    assert [f.index for f in flags] == [0]
    result = replace_outliers(series, flags, TimeWindow.hours(1))
    assert len(result.series) == 1
    assert result.dropped == (int(series.times[0]),)


@given(st.lists(st.floats(-100, 100), min_size=8, max_size=60),
       st.sets(st.integers(0, 59), max_size=10))
def test_replacement_within_surviving_window_bounds(values, flag_idx):
    from schoolsense.quality import OutlierFlag
    series = series_at("s", utc(2017, 9, 4), 30, values)
    flags = [OutlierFlag(i, FlagKind.BOUND_VIOLATION)
             for i in sorted(flag_idx) if i < len(values)]
    window = TimeWindow.minutes(5)
    result = replace_outliers(series, flags, window)
    flagged = {f.index for f in flags}
    for t, old, new in result.replaced:
        i = int(np.searchsorted(series.times, t))
        lo = series.times > t - window.duration
        hi = series.times <= t
        clean = [float(series.values[j]) for j in np.flatnonzero(lo & hi)
                 if j not in flagged]
        assert min(clean) <= new <= max(clean)


def test_moving_average_constant_identity():
    series = series_at("s", utc(2017, 9, 4), 30, np.full(50, 7.5))
    out = moving_average(series, TimeWindow.hours(1))
    assert np.allclose(out.values, 7.5)
    assert np.array_equal(out.times, series.times)


def test_moving_average_two_point_mean():
    series = series_at("s", utc(2017, 9, 4), 60, [10.0, 20.0])
    out = moving_average(series, TimeWindow.minutes(2))
    assert out.values.tolist() == [10.0, 15.0]


def test_moving_average_window_shorter_than_spacing():
    series = series_at("s", utc(2017, 9, 4), 600, [5.0, 9.0, 1.0])
    out = moving_average(series, TimeWindow.minutes(5))
    assert out.values.tolist() == [5.0, 9.0, 1.0]


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=80),
       st.integers(60, 7200))
def test_moving_average_bounded_by_extremes(values, window_s):
    series = series_at("s", utc(2017, 9, 4), 30, values)
    out = moving_average(series, TimeWindow(window_s))
    assert np.all(out.values >= min(values) - 1e-9)
    assert np.all(out.values <= max(values) + 1e-9)


def _meta(rate=30):
    return SensorMeta("s", "a", SensorKind.INDOOR_TEMPERATURE, rate, None)


def test_fill_no_gaps_identity_on_grid():
    series = series_at("s", utc(2017, 9, 4), 30, [20.0, 20.5, 21.0, 21.5])
    result = fill_missing(series, _meta(), TimeWindow.minutes(10))
    assert np.array_equal(result.series.times, series.times)
    assert np.array_equal(result.series.values, series.values)
    assert result.filled == () and result.unfilled == ()


def test_fill_single_missing_slot_with_trailing_mean():
    t0 = utc(2017, 9, 4)
    series = TimeSeries("s", np.array([t0, t0 + 60]), np.array([20.0, 21.0]))
    result = fill_missing(series, _meta(30), TimeWindow.minutes(10))
    assert result.series.times.tolist() == [t0, t0 + 30, t0 + 60]
    assert result.series.values.tolist() == [20.0, 20.0, 21.0]
    assert result.filled == (t0 + 30,)


def test_fill_gap_longer_than_window_reported():
    t0 = utc(2017, 9, 4)
    times = np.concatenate(([t0], [t0 + 7200]))
    series = TimeSeries("s", times, np.array([20.0, 21.0]))
    result = fill_missing(series, _meta(30), TimeWindow.minutes(10))
    assert len(result.unfilled) > 0
    assert len(result.filled) + len(result.unfilled) == 7200 // 30 - 1


def test_repair_pipeline_stable_on_second_pass(tiny_site):
    from schoolsense.synthgen import RoomSpec, ScenarioSpec, SiteSpec, generate
    spec = ScenarioSpec(
        seed=3, start=date(2017, 9, 4), days=7,
        sites=(SiteSpec(site_id="a", zero_error_rate=0.02,
                        rooms=(RoomSpec("r1"),)),))
    out = generate(spec)
    meta = out.catalog.sensor("a-r1-temp")
    site = out.catalog.site("a")
    config = QualityConfig()
    window = config.outlier_window_for(meta.kind)
    series = out.series["a-r1-temp"]
    flags = flag_outliers(series, window, kind=meta.kind,
                          zero_implausible=zero_implausible_for(meta, site))
    repaired = replace_outliers(series, flags, config.repair_window).series
    second = flag_outliers(repaired, window, kind=meta.kind,
                           zero_implausible=zero_implausible_for(meta, site))
    assert [f for f in second if f.kind is FlagKind.BOUND_VIOLATION] == []


def test_repair_series_reports_all_stages(tiny_catalog, tiny_site):
    rng = np.random.default_rng(1)
    n = 2880
    values = 45.0 + rng.normal(0, 1.0, n)
    values[500] = 0.0
    keep = np.ones(n, dtype=bool)
    keep[1000:1040] = False
    times = utc(2017, 9, 4) + 30 * np.arange(n, dtype=np.int64)
    series = TimeSeries("h1", times[keep], values[keep])
    outcome = repair_series(series, tiny_catalog.sensor("h1"), tiny_site)
    assert outcome.flag_count(FlagKind.ZERO_ERROR) == 1
    assert len(outcome.filled) == 40
    assert len(outcome.series) == n


def test_category_outage_grouping(tiny_catalog):
    cells = [
        AvailabilityCell("t1", 0, 100, 50),
        AvailabilityCell("h1", 0, 100, 100),
        AvailabilityCell("p1", 0, 100, 75),
    ]
    pct = category_outage_percentages(cells, tiny_catalog)
    assert pct["environmental"] == pytest.approx(25.0)
    assert pct["power"] == pytest.approx(25.0)
