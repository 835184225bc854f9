"""Command-line pipeline: synth, ingest, quality, comfort, perf.

Commands hand off through files only: `synth` materializes a scenario,
`ingest` loads measurement CSVs into the partitioned store, `quality`
audits availability and writes repaired series, `comfort` and `perf`
consume the repaired store and emit report CSVs. Every command is
deterministic given its config and data: no wall-clock dependence, stable
ordering, full-precision decimals.

Exit codes: 0 success, 1 environment/I-O failure, 2 usage or config error.
Config keys may be overridden with SCHOOLSENSE_<KEY> environment variables.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from . import comfort as comfort_mod
from . import performance as perf_mod
from . import quality as quality_mod
from .ingest import (
    IngestError,
    SeriesStore,
    load_weather,
    parse_catalog,
    parse_measurements,
)
from .model import (
    DAY_SECONDS,
    DeploymentCatalog,
    ModelError,
    SensorKind,
    TimeSeries,
    TimeWindow,
    day_to_date,
    filter_weekdays,
    format_iso8601,
    slice_series,
    to_epoch,
)
from .synthgen import ScenarioError, ScenarioSpec, generate

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2

ENV_PREFIX = "SCHOOLSENSE_"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Paths, window sizes and thresholds for the analysis commands."""

    catalog: Path
    store: Path
    out: Path
    weather: Path | None = None
    measurements: tuple[Path, ...] = ()
    acceptability: int = 80
    lookback_days: int = 7
    env_window_hours: float = 24.0
    power_window_hours: float = 1.0
    repair_window_hours: float = 1.0
    fill_window_hours: float = 2.0
    smooth_minutes: float = 5.0
    spike_sigma: float = 5.0
    min_window_samples: int = 4
    swing_threshold: float = 8.0
    min_swing_days: int = 2
    r_threshold: float = 0.5
    min_correlation_hours: int = 24
    event_drop: float = 2.0
    event_within_minutes: float = 30.0

    def __post_init__(self):
        positive = (
            "env_window_hours", "power_window_hours", "repair_window_hours",
            "fill_window_hours", "smooth_minutes", "spike_sigma",
            "swing_threshold", "r_threshold", "event_drop", "event_within_minutes",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.acceptability not in (80, 90):
            raise ConfigError("acceptability must be 80 or 90")

    @property
    def repaired(self) -> Path:
        return self.out / "repaired"

    def quality_config(self) -> quality_mod.QualityConfig:
        return quality_mod.QualityConfig(
            env_window=TimeWindow.hours(self.env_window_hours),
            power_window=TimeWindow.hours(self.power_window_hours),
            repair_window=TimeWindow.hours(self.repair_window_hours),
            fill_window=TimeWindow.hours(self.fill_window_hours),
            smooth_window=TimeWindow.minutes(self.smooth_minutes),
            spike_sigma=self.spike_sigma,
            min_window_samples=self.min_window_samples,
        )


_PATH_KEYS = {"catalog", "store", "out", "weather"}


def load_config(path: Path | str, env: dict | None = None) -> RunConfig:
    """Read a JSON config file and apply SCHOOLSENSE_* overrides."""
    env = os.environ if env is None else env
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config syntax error at line {exc.lineno}: {exc.msg}") from None

    field_names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - field_names
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for name in field_names:
        override = env.get(ENV_PREFIX + name.upper())
        if override is not None:
            try:
                data[name] = json.loads(override)
            except json.JSONDecodeError:
                data[name] = override

    missing = {"catalog", "store", "out"} - set(data)
    if missing:
        raise ConfigError(f"config missing required keys: {sorted(missing)}")
    base = path.parent
    kwargs = {}
    for name, value in data.items():
        if name in _PATH_KEYS and value is not None:
            p = Path(value)
            kwargs[name] = p if p.is_absolute() else base / p
        elif name == "measurements":
            kwargs[name] = tuple(
                (Path(v) if Path(v).is_absolute() else base / v) for v in value)
        else:
            kwargs[name] = value
    return RunConfig(**kwargs)


def _write_csv(path: Path, header: str, rows: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join([header, *rows]) + ("\n" if rows else "\n"))


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_synth(spec_path: Path, out_dir: Path) -> int:
    try:
        document = Path(spec_path).read_text()
    except OSError as exc:
        return _fail(f"cannot read scenario spec {spec_path}: {exc}", EXIT_USAGE)
    try:
        spec = ScenarioSpec.from_json(document)
    except ScenarioError as exc:
        return _fail(str(exc), EXIT_USAGE)
    try:
        scenario = generate(spec, out_dir)
    except OSError as exc:
        return _fail(f"cannot write scenario to {out_dir}: {exc}", EXIT_IO)
    truth = scenario.ground_truth
    n_rooms = sum(len(s.rooms) for s in scenario.catalog.sites)
    print(f"scenario written to {out_dir}")
    print(f"sites: {len(scenario.catalog.sites)}  rooms: {n_rooms}  "
          f"sensors: {len(scenario.catalog.sensors)}  days: {spec.days}")
    for site in spec.sites:
        ids = [m.sensor_id for m in scenario.catalog.sensors_for_site(site.site_id)]
        print(f"  {site.site_id}: outage {truth.outage_fraction(ids):.4f} "
              f"(target {site.outage_fraction}), zero rate {site.zero_error_rate}, "
              f"spike rate {site.spike_rate}")
    return EXIT_OK


def _merge_series(a: TimeSeries, b: TimeSeries) -> TimeSeries:
    times = np.concatenate((a.times, b.times))
    values = np.concatenate((a.values, b.values))
    order = np.argsort(times, kind="stable")
    times, values = times[order], values[order]
    if len(times) > 1:
        last = np.concatenate((times[1:] != times[:-1], [True]))
        times, values = times[last], values[last]
    return TimeSeries(a.sensor_id, times, values)


def cmd_ingest(config: RunConfig) -> int:
    try:
        catalog = parse_catalog(config.catalog.read_text())
    except OSError as exc:
        return _fail(f"cannot read catalog: {exc}", EXIT_USAGE)
    except IngestError as exc:
        return _fail(str(exc), EXIT_USAGE)
    paths = list(config.measurements)
    if not paths:
        return _fail("no measurement files configured", EXIT_USAGE)

    merged: dict[str, TimeSeries] = {}
    rejects: dict[str, int] = {}
    total_lines = 0
    for path in paths:
        try:
            document = path.read_text()
        except OSError as exc:
            return _fail(f"cannot read measurements {path}: {exc}", EXIT_IO)
        try:
            parsed = parse_measurements(document, catalog)
        except IngestError as exc:
            return _fail(f"{path}: {exc}", EXIT_USAGE)
        for sensor_id, series in parsed.series.items():
            total_lines += len(series)
            if sensor_id in merged:
                merged[sensor_id] = _merge_series(merged[sensor_id], series)
            else:
                merged[sensor_id] = series
        for sensor_id, count in parsed.rejected.items():
            rejects[sensor_id] = rejects.get(sensor_id, 0) + count

    try:
        store = SeriesStore(config.store)
        for sensor_id in sorted(merged):
            store.save(catalog.sensor(sensor_id).site_id, merged[sensor_id])
        _write_csv(
            config.out / "rejects.csv", "sensor_id,lines",
            [f"{sid},{rejects[sid]}" for sid in sorted(rejects)])
    except OSError as exc:
        return _fail(f"cannot write store: {exc}", EXIT_IO)
    print(f"ingested {total_lines} samples from {len(paths)} files "
          f"into {config.store}; {sum(rejects.values())} rejected lines")
    return EXIT_OK


def _load_all_series(
    store: SeriesStore, catalog: DeploymentCatalog
) -> dict[str, TimeSeries]:
    """Every catalog sensor's raw series; absent sensors load empty."""
    return {
        meta.sensor_id: store.load(meta.site_id, meta.sensor_id).series
        for meta in catalog.sensors
    }


def cmd_quality(config: RunConfig, end: date | None = None) -> int:
    try:
        catalog = parse_catalog(config.catalog.read_text())
    except (OSError, IngestError) as exc:
        return _fail(f"catalog: {exc}", EXIT_USAGE)
    store = SeriesStore(config.store)
    if not store.sites():
        return _fail(f"no data in store {config.store}", EXIT_USAGE)
    try:
        raw = _load_all_series(store, catalog)
    except IngestError as exc:
        return _fail(str(exc), EXIT_IO)
    last_times = [int(s.times[-1]) for s in raw.values() if len(s)]
    if not last_times:
        return _fail("no data in store (all sensors empty)", EXIT_USAGE)
    if end is None:
        end_epoch = ((max(last_times) // DAY_SECONDS) + 1) * DAY_SECONDS
    else:
        end_epoch = to_epoch(end)

    cells = quality_mod.availability_matrix(raw, catalog, end_epoch)
    qconfig = config.quality_config()
    repaired_store = SeriesStore(config.repaired)
    repairs: dict[str, quality_mod.RepairedSeries] = {}
    try:
        for meta in catalog.sensors:
            site = catalog.site(meta.site_id)
            outcome = quality_mod.repair_series(raw[meta.sensor_id], meta, site, qconfig)
            repairs[meta.sensor_id] = outcome
            if len(outcome.series):
                repaired_store.save(meta.site_id, outcome.series)
    except OSError as exc:
        return _fail(f"cannot write repaired store: {exc}", EXIT_IO)

    # per sensor per day: expected, observed, outage, flags by kind, fills
    flag_days: dict[tuple[str, int, quality_mod.FlagKind], int] = {}
    fill_days: dict[tuple[str, int], int] = {}
    for sensor_id, outcome in repairs.items():
        series = raw[sensor_id]
        for flag in outcome.flags:
            day = int(series.times[flag.index]) // DAY_SECONDS
            key = (sensor_id, day, flag.kind)
            flag_days[key] = flag_days.get(key, 0) + 1
        for t in outcome.filled:
            key = (sensor_id, t // DAY_SECONDS)
            fill_days[key] = fill_days.get(key, 0) + 1
    rows = []
    for cell in cells:
        meta = catalog.sensor(cell.sensor_id)
        outage = 100.0 * (1.0 - cell.fraction)
        zero = flag_days.get((cell.sensor_id, cell.day, quality_mod.FlagKind.ZERO_ERROR), 0)
        spike = flag_days.get((cell.sensor_id, cell.day, quality_mod.FlagKind.SPIKE), 0)
        bound = flag_days.get((cell.sensor_id, cell.day, quality_mod.FlagKind.BOUND_VIOLATION), 0)
        fills = fill_days.get((cell.sensor_id, cell.day), 0)
        rows.append(
            f"{meta.site_id},{cell.sensor_id},{day_to_date(cell.day).isoformat()},"
            f"{cell.expected},{cell.observed},{outage!r},{zero},{spike},{bound},{fills}")
    _write_csv(
        config.out / "quality_report.csv",
        "site_id,sensor_id,date,expected,observed,outage_pct,"
        "zero_flags,spike_flags,bound_flags,fills",
        rows)

    site_pct = quality_mod.site_outage_percentages(cells, catalog)
    site_rows = []
    for site in catalog.sites:
        metas = catalog.sensors_for_site(site.site_id)
        if not metas:
            continue
        pos = len({m.room_id for m in metas})
        observed = sum(len(raw[m.sensor_id]) for m in metas)
        flags = sum(len(repairs[m.sensor_id].flags) for m in metas)
        outlier_pct = 100.0 * flags / observed if observed else 0.0
        site_rows.append(
            f"{site.site_id},{pos},{len(metas)},{format_iso8601(site.start_time)},"
            f"{site_pct[site.site_id]!r},{outlier_pct!r}")
    _write_csv(
        config.out / "site_quality.csv",
        "site_id,pos,sensors,start_time,outage_pct,outlier_pct", site_rows)

    category_pct = quality_mod.category_outage_percentages(cells, catalog)
    kind_rows = []
    for category in ("environmental", "atmospheric", "weather", "power"):
        metas = [m for m in catalog.sensors if m.kind.category == category]
        if not metas:
            continue
        pos = len({(m.site_id, m.room_id) for m in metas})
        observed = sum(len(raw[m.sensor_id]) for m in metas)
        flags = sum(len(repairs[m.sensor_id].flags) for m in metas)
        outlier_pct = 100.0 * flags / observed if observed else 0.0
        kind_rows.append(
            f"{category},{pos},{len(metas)},{category_pct[category]!r},{outlier_pct!r}")
    _write_csv(
        config.out / "kind_quality.csv",
        "category,pos,sensors,outage_pct,outlier_pct", kind_rows)

    print(f"quality report for {len(catalog.sensors)} sensors written to {config.out}")
    for site_id in sorted(site_pct):
        print(f"  site {site_id}: outage {site_pct[site_id]:.2f}%")
    return EXIT_OK


def _indoor_room_sensors(catalog: DeploymentCatalog, site_id: str) -> dict[str, str]:
    """room_id -> indoor temperature sensor_id for one site."""
    out = {}
    for meta in catalog.sensors_for_site(site_id):
        if meta.kind is SensorKind.INDOOR_TEMPERATURE and meta.room_id is not None:
            out[meta.room_id] = meta.sensor_id
    return out


def cmd_comfort(config: RunConfig, start: date, end: date, acceptability: int | None = None) -> int:
    acceptability = acceptability if acceptability is not None else config.acceptability
    if acceptability not in (80, 90):
        return _fail(f"acceptability must be 80 or 90, got {acceptability}", EXIT_USAGE)
    try:
        catalog = parse_catalog(config.catalog.read_text())
    except (OSError, IngestError) as exc:
        return _fail(f"catalog: {exc}", EXIT_USAGE)
    if config.weather is None:
        return _fail("no weather file configured", EXIT_USAGE)
    try:
        weather = load_weather(config.weather.read_text())
    except OSError as exc:
        return _fail(f"cannot read weather: {exc}", EXIT_USAGE)
    except IngestError as exc:
        return _fail(f"weather: {exc}", EXIT_USAGE)
    store = SeriesStore(config.repaired)
    if not store.sites():
        return _fail(f"no repaired series in {config.repaired}; run quality first",
                     EXIT_USAGE)

    daily_rows = []
    summary_rows = []
    plot_rows = []
    for site in catalog.sites:
        site_weather = weather.get(site.site_id)
        room_sensors = _indoor_room_sensors(catalog, site.site_id)
        if site_weather is None or not room_sensors:
            continue
        room_series = {
            room_id: store.load(site.site_id, sensor_id).series
            for room_id, sensor_id in sorted(room_sensors.items())
        }
        try:
            summary = comfort_mod.site_comfort_summary(
                site, room_series, site_weather, start, end,
                acceptability=acceptability, lookback_days=config.lookback_days)
        except comfort_mod.ComfortError:
            continue
        day_scores: dict[int, list[float]] = {}
        total_days = 0
        for room_id in sorted(summary.room_scores):
            for score in summary.room_scores[room_id]:
                daily_rows.append(
                    f"{site.site_id},{room_id},{day_to_date(score.day).isoformat()},"
                    f"{score.score!r},{score.hours_evaluated},{acceptability},"
                    f"{score.t_pmo!r}")
                day_scores.setdefault(score.day, []).append(score.score)
                total_days += 1
        summary_rows.append(
            f"{site.site_id},{acceptability},{total_days},{summary.mean!r},"
            f"{summary.minimum!r},{summary.maximum!r},{summary.q1!r},{summary.q3!r}")
        for day in sorted(day_scores):
            mean = float(np.mean(day_scores[day]))
            plot_rows.append(f"{site.site_id},{day_to_date(day).isoformat()},{mean!r}")

    if not summary_rows:
        return _fail("no scorable site in the period (missing weather or data)",
                     EXIT_USAGE)
    try:
        _write_csv(config.out / "comfort_daily.csv",
                   "site_id,room_id,date,score,hours_evaluated,acceptability,t_pmo",
                   daily_rows)
        _write_csv(config.out / "comfort_sites.csv",
                   "site_id,acceptability,room_days,mean,min,max,q1,q3", summary_rows)
        _write_csv(config.out / "comfort_plot.csv", "site_id,date,score", plot_rows)
    except OSError as exc:
        return _fail(f"cannot write reports: {exc}", EXIT_IO)
    print(f"comfort reports for [{start}, {end}) at {acceptability}% written to {config.out}")
    return EXIT_OK


def cmd_perf(config: RunConfig, start: date | None = None, end: date | None = None) -> int:
    try:
        catalog = parse_catalog(config.catalog.read_text())
    except (OSError, IngestError) as exc:
        return _fail(f"catalog: {exc}", EXIT_USAGE)
    weather = {}
    if config.weather is not None:
        try:
            weather = load_weather(config.weather.read_text())
        except (OSError, IngestError) as exc:
            return _fail(f"weather: {exc}", EXIT_USAGE)
    store = SeriesStore(config.repaired)
    if not store.sites():
        return _fail(f"no repaired series in {config.repaired}; run quality first",
                     EXIT_USAGE)

    swing_rows = []
    corr_rows = []
    anomalies: list[tuple[str, perf_mod.AnomalyReport]] = []
    notes = []
    for site in catalog.sites:
        tz = site.tz_offset_minutes
        correlations = []
        for room_id, sensor_id in sorted(_indoor_room_sensors(catalog, site.site_id).items()):
            series = store.load(site.site_id, sensor_id).series
            if start is not None and end is not None:
                lo = to_epoch(start) - tz * 60
                hi = to_epoch(end) - tz * 60
                series = slice_series(series, lo, hi)
            if not len(series):
                continue
            report = perf_mod.weekend_daily_swings(series, tz, room_id=room_id)
            for s in report.swings:
                swing_rows.append(
                    f"{site.site_id},{room_id},{day_to_date(s.day).isoformat()},"
                    f"{s.min_t!r},{s.max_t!r},{s.swing!r},{s.rise_hours!r}")
            flag = perf_mod.flag_poor_insulation(
                report, threshold=config.swing_threshold, min_days=config.min_swing_days)
            if flag is not None:
                anomalies.append((site.site_id, flag))

            orientation = site.room(room_id).orientation
            site_weather = weather.get(site.site_id)
            if site_weather is not None:
                try:
                    corr = perf_mod.solar_gain_correlation(
                        series, site_weather, orientation, tz, room_id=room_id,
                        min_hours=config.min_correlation_hours)
                except perf_mod.CorrelationUndefined as exc:
                    notes.append(f"correlation skipped: {exc}")
                else:
                    correlations.append(corr)
                    corr_rows.append(
                        f"{site.site_id},{room_id},{orientation.value},"
                        f"{corr.r!r},{corr.hours}")

            weekday = filter_weekdays(series, tz)
            events = perf_mod.detect_occupant_events(
                weekday, drop=config.event_drop,
                within_minutes=config.event_within_minutes)
            if events:
                evidence = tuple(
                    perf_mod.EvidenceItem(day=e.time // DAY_SECONDS, value=e.fall)
                    for e in events)
                anomalies.append((site.site_id, perf_mod.AnomalyReport(
                    room_id=room_id, kind=perf_mod.AnomalyKind.OCCUPANT_EVENT,
                    evidence=evidence)))
        for flag in perf_mod.flag_unshaded_rooms(correlations, config.r_threshold):
            anomalies.append((site.site_id, flag))

    anomaly_rows = []
    text_lines = []
    order = {perf_mod.AnomalyKind.POOR_INSULATION: 0,
             perf_mod.AnomalyKind.UNSHADED_SOLAR_GAIN: 1,
             perf_mod.AnomalyKind.OCCUPANT_EVENT: 2}
    anomalies.sort(key=lambda item: (item[0], order[item[1].kind], item[1].room_id))
    for site_id, report in anomalies:
        dates = ";".join(day_to_date(e.day).isoformat() for e in report.evidence)
        metric = {perf_mod.AnomalyKind.POOR_INSULATION: "swing_c",
                  perf_mod.AnomalyKind.UNSHADED_SOLAR_GAIN: "pearson_r",
                  perf_mod.AnomalyKind.OCCUPANT_EVENT: "drop_c"}[report.kind]
        value = max(e.value for e in report.evidence)
        anomaly_rows.append(
            f"{site_id},{report.room_id},{report.kind.value},{metric},{value!r},{dates}")
        text_lines.append(
            f"anomaly site={site_id} room={report.room_id} kind={report.kind.value} "
            f"{metric}={value!r} dates={dates}")
    try:
        _write_csv(config.out / "perf_swings.csv",
                   "site_id,room_id,date,min_t,max_t,swing,rise_hours", swing_rows)
        _write_csv(config.out / "perf_correlation.csv",
                   "site_id,room_id,orientation,r,hours", corr_rows)
        _write_csv(config.out / "perf_anomalies.csv",
                   "site_id,room_id,kind,metric,value,dates", anomaly_rows)
        notes_text = "".join(f"# {n}\n" for n in notes)
        (config.out / "perf_anomalies.txt").write_text(
            notes_text + "\n".join(text_lines) + ("\n" if text_lines else ""))
    except OSError as exc:
        return _fail(f"cannot write reports: {exc}", EXIT_IO)
    print(f"performance reports written to {config.out}: "
          f"{len(anomaly_rows)} anomaly records")
    return EXIT_OK


def _parse_date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="schoolsense",
        description="Building-telemetry analytics: data quality, thermal "
                    "comfort and thermal-performance anomaly detection.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="materialize a synthetic scenario")
    p.add_argument("spec", type=Path, help="scenario spec JSON")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    for name, needs_period in (("ingest", False), ("quality", False),
                               ("comfort", True), ("perf", False)):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=True, help="run config JSON")
        p.add_argument("--out", type=Path, default=None, help="override output directory")
        if name == "ingest":
            p.add_argument("--measurements", type=Path, nargs="*", default=None)
        if name in ("quality", "comfort", "perf"):
            p.add_argument("--from", dest="start", type=_parse_date, default=None,
                           required=needs_period)
            p.add_argument("--to", dest="end", type=_parse_date, default=None,
                           required=needs_period)
        if name == "comfort":
            p.add_argument("--acceptability", type=int, choices=(80, 90), default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "synth":
        return cmd_synth(args.spec, args.out)

    try:
        config = load_config(args.config)
    except ConfigError as exc:
        return _fail(str(exc), EXIT_USAGE)
    if args.out is not None:
        config = dataclasses.replace(config, out=args.out)
    if args.command == "ingest" and args.measurements is not None:
        config = dataclasses.replace(config, measurements=tuple(args.measurements))

    try:
        if args.command == "ingest":
            return cmd_ingest(config)
        if args.command == "quality":
            return cmd_quality(config, end=args.end)
        if args.command == "comfort":
            return cmd_comfort(config, args.start, args.end, args.acceptability)
        if args.command == "perf":
            return cmd_perf(config, args.start, args.end)
    except (ModelError, quality_mod.QualityError) as exc:
        return _fail(str(exc), EXIT_USAGE)
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
