"""Parsers for the four source feeds into canonical panels.

Supported dialects, detected from the header row:

* NYT long format: ``date,county,state,fips,cases,deaths`` (county),
  ``date,state,fips,cases,deaths`` (state), ``date,cases,deaths`` (national).
* JHU wide format: ``UID,...,FIPS,Admin2,Province_State,...`` then one
  column per date (``M/D/YY``); rows with an empty Admin2 are state rows.
* USAFacts wide format: ``countyFIPS,County Name,State,StateFIPS`` then
  one column per date (ISO or ``M/D/YY``); countyFIPS 0 is the statewide
  unallocated bucket.
* Atlantic long format: ``date,state,positive,...,death,...`` with
  2-letter states and ``YYYYMMDD`` dates; state level only.

Parsing is deterministic: rows are keyed and sorted internally, so the
same payload bytes always produce the same panel regardless of row order.
Bad rows are collected into the parse report and skipped; a series with
an interior date gap is dropped and reported (leading gaps are zero-filled,
every source starts at or after 2020-01-22).
"""

from __future__ import annotations

import csv
import datetime as dt
import io
from dataclasses import dataclass, field

import numpy as np

from ..errors import SchemaError
from ..model import (
    STATE_FIPS, CumulativeSeries, Level, Metric, Panel, SeriesKey, SourceId,
    state_name_from_postal,
)
from .geography import GeoRuleSet, default_geo_rules
from .snapshot import RawSnapshot

UNALLOCATED_SUFFIX = "000"


@dataclass
class ParseReport:
    source: SourceId
    metric: Metric
    level: Level | None = None
    n_rows: int = 0
    n_series: int = 0
    blank_cells: int = 0
    row_errors: list[str] = field(default_factory=list)
    dropped_series: list[str] = field(default_factory=list)
    excluded_rows: list[str] = field(default_factory=list)


def _parse_count(text: str) -> float | None:
    """Nonnegative integral count, or None for blank."""
    text = text.strip()
    if not text:
        return None
    value = float(text)
    if value < 0:
        raise ValueError(f"negative count {text}")
    if value != int(value):
        raise ValueError(f"non-integer count {text}")
    return value


def _parse_any_date(text: str) -> dt.date:
    text = text.strip().lstrip("X")
    if "/" in text:
        month, day, year = text.split("/")
        year_num = int(year)
        if year_num < 100:
            year_num += 2000
        return dt.date(year_num, int(month), int(day))
    if "-" in text:
        return dt.date.fromisoformat(text)
    if "." in text:
        y, m, d = text.split(".")
        return dt.date(int(y), int(m), int(d))
    if len(text) == 8 and text.isdigit():
        return dt.date(int(text[:4]), int(text[4:6]), int(text[6:]))
    raise ValueError(f"unrecognized date {text!r}")


def _normalize_fips(text: str) -> str | None:
    """Accept '48185', '48185.0', '1073'; None for blank/zero."""
    text = text.strip()
    if not text:
        return None
    value = float(text)
    if value != int(value):
        raise ValueError(f"malformed fips {text!r}")
    number = int(value)
    if number == 0:
        return None
    return f"{number:05d}"


class _Collector:
    """Accumulates (key -> date -> value) with row-level error capture."""

    def __init__(self, report: ParseReport):
        self.data: dict[SeriesKey, dict[dt.date, float]] = {}
        self.report = report

    def put(self, key: SeriesKey, date: dt.date, value: float | None, where: str):
        if value is None:
            self.report.blank_cells += 1
            value = 0.0
        bucket = self.data.setdefault(key, {})
        if date in bucket:
            self.report.row_errors.append(f"{where}: duplicate entry for {key} {date}")
            return
        bucket[date] = value


def _finish(source: SourceId, metric: Metric, level: Level,
            collector: _Collector, report: ParseReport) -> tuple[Panel, ParseReport]:
    report.level = level
    data = collector.data
    if not data:
        raise SchemaError(f"no usable rows in {source.value} payload")
    start = min(min(d) for d in data.values())
    end = max(max(d) for d in data.values())
    n_days = (end - start).days + 1
    panel = Panel(source, metric, level, start)
    for key in sorted(data):
        by_date = data[key]
        first = min(by_date)
        expected = ((first + dt.timedelta(days=i))
                    for i in range((end - first).days + 1))
        missing = [d for d in expected if d not in by_date]
        if missing:
            report.dropped_series.append(
                f"{key}: missing {len(missing)} interior day(s), first {missing[0]}")
            continue
        values = np.zeros(n_days)
        offset = (first - start).days
        for i in range((end - first).days + 1):
            values[offset + i] = by_date[first + dt.timedelta(days=i)]
        panel.add(CumulativeSeries(key, metric, source, start, values))
    if not len(panel):
        raise SchemaError(f"every series in {source.value} payload was dropped")
    report.n_series = len(panel)
    return panel, report


def _unallocated_key(state_fips: str, state_name: str) -> SeriesKey:
    return SeriesKey(Level.COUNTY, fips=state_fips + UNALLOCATED_SUFFIX,
                     county_name="Unallocated", state_name=state_name)


# ---------------------------------------------------------------------------
# dialect parsers


def _parse_nyt(rows, header, metric, rules, report):
    columns = {name: i for i, name in enumerate(header)}
    value_col = {"infection": "cases", "death": "deaths"}.get(metric.value)
    if value_col is None or value_col not in columns:
        raise SchemaError(f"NYT payload has no column for metric {metric.value!r}")
    if "county" in columns:
        level = Level.COUNTY
    elif "state" in columns:
        level = Level.STATE
    else:
        level = Level.NATIONAL
    collector = _Collector(report)
    for row_no, row in enumerate(rows, start=2):
        if not row:
            continue
        report.n_rows += 1
        where = f"row {row_no}"
        try:
            date = _parse_any_date(row[columns["date"]])
            value = _parse_count(row[columns[value_col]])
            if level == Level.NATIONAL:
                key = SeriesKey(Level.NATIONAL)
            elif level == Level.STATE:
                key = SeriesKey(Level.STATE, state_name=row[columns["state"]].strip())
            else:
                state = row[columns["state"]].strip()
                county = row[columns["county"]].strip()
                fips = _normalize_fips(row[columns["fips"]])
                if fips is None:
                    if county.lower() == "unknown":
                        state_fips = _state_fips_by_name(state)
                        key = _unallocated_key(state_fips, state)
                    else:
                        alias = rules.resolve_alias(county)
                        if alias is None:
                            raise ValueError(f"county {county!r} has no fips and no alias")
                        key = SeriesKey(Level.COUNTY, fips=alias, county_name=county,
                                        state_name=state)
                else:
                    key = SeriesKey(Level.COUNTY, fips=fips, county_name=county,
                                    state_name=state)
            collector.put(key, date, value, where)
        except (ValueError, KeyError, IndexError) as exc:
            report.row_errors.append(f"{where}: {exc}")
    return _finish(SourceId.NYT, metric, level, collector, report)


def _state_fips_by_name(state_name: str) -> str:
    for fips, name in STATE_FIPS.items():
        if name == state_name:
            return fips
    raise ValueError(f"unknown state name {state_name!r}")


def _parse_jhu(rows, header, metric, rules, report):
    if metric == Metric.RECOVERED:
        raise SchemaError("recovered series are not provided by the JHU county feed")
    columns = {name: i for i, name in enumerate(header)}
    first_date_idx = None
    dates = []
    for i, name in enumerate(header):
        try:
            dates.append((_parse_any_date(name), i))
            if first_date_idx is None:
                first_date_idx = i
        except ValueError:
            continue
    if not dates:
        raise SchemaError("JHU payload has no date columns")
    collector = _Collector(report)
    county_rows = state_rows = 0
    for row_no, row in enumerate(rows, start=2):
        if not row:
            continue
        report.n_rows += 1
        where = f"row {row_no}"
        try:
            admin2 = row[columns["Admin2"]].strip() if "Admin2" in columns else ""
            state = row[columns["Province_State"]].strip()
            if admin2:
                county_rows += 1
                fips = _normalize_fips(row[columns["FIPS"]])
                if fips is not None and fips.startswith("900"):
                    # unassigned bucket: 900SS carries the state fips
                    key = _unallocated_key(fips[3:], state)
                elif fips is not None and fips.startswith("800"):
                    report.excluded_rows.append(f"{where}: out-of-state row {admin2!r}")
                    continue
                elif fips is None:
                    alias = rules.resolve_alias(admin2)
                    if alias is None:
                        raise ValueError(f"county {admin2!r} has no fips and no alias")
                    key = SeriesKey(Level.COUNTY, fips=alias, county_name=admin2,
                                    state_name=state)
                else:
                    key = SeriesKey(Level.COUNTY, fips=fips, county_name=admin2,
                                    state_name=state)
            else:
                state_rows += 1
                key = SeriesKey(Level.STATE, state_name=state)
            for date, i in dates:
                collector.put(key, date, _parse_count(row[i]), where)
        except (ValueError, KeyError, IndexError) as exc:
            report.row_errors.append(f"{where}: {exc}")
    level = Level.COUNTY if county_rows >= state_rows else Level.STATE
    return _finish(SourceId.JHU, metric, level, collector, report)


def _parse_usafacts(rows, header, metric, rules, report):
    if metric == Metric.RECOVERED:
        raise SchemaError("recovered series are not provided by USAFacts")
    columns = {name: i for i, name in enumerate(header)}
    dates = []
    for i, name in enumerate(header):
        try:
            dates.append((_parse_any_date(name), i))
        except ValueError:
            continue
    if not dates:
        raise SchemaError("USAFacts payload has no date columns")
    collector = _Collector(report)
    for row_no, row in enumerate(rows, start=2):
        if not row:
            continue
        report.n_rows += 1
        where = f"row {row_no}"
        try:
            county = row[columns["County Name"]].strip()
            postal = row[columns["State"]].strip()
            state = state_name_from_postal(postal) or postal
            state_fips = f"{int(row[columns['StateFIPS']]):02d}"
            fips = _normalize_fips(row[columns["countyFIPS"]])
            if fips is None:
                key = _unallocated_key(state_fips, state)
            else:
                key = SeriesKey(Level.COUNTY, fips=fips, county_name=county,
                                state_name=state)
            for date, i in dates:
                collector.put(key, date, _parse_count(row[i]), where)
        except (ValueError, KeyError, IndexError) as exc:
            report.row_errors.append(f"{where}: {exc}")
    return _finish(SourceId.USAFACTS, metric, Level.COUNTY, collector, report)


def _parse_atlantic(rows, header, metric, rules, report):
    columns = {name: i for i, name in enumerate(header)}
    value_col = {"infection": "positive", "death": "death",
                 "recovered": "recovered"}[metric.value]
    if value_col not in columns:
        raise SchemaError(f"Atlantic payload has no column {value_col!r}")
    collector = _Collector(report)
    for row_no, row in enumerate(rows, start=2):
        if not row:
            continue
        report.n_rows += 1
        where = f"row {row_no}"
        try:
            date = _parse_any_date(row[columns["date"]])
            state = state_name_from_postal(row[columns["state"]].strip())
            if state is None:
                raise ValueError(f"unknown state code {row[columns['state']]!r}")
            key = SeriesKey(Level.STATE, state_name=state)
            collector.put(key, date, _parse_count(row[columns[value_col]]), where)
        except (ValueError, KeyError, IndexError) as exc:
            report.row_errors.append(f"{where}: {exc}")
    return _finish(SourceId.ATLANTIC, metric, Level.STATE, collector, report)


def parse_source(snapshot: RawSnapshot, metric: Metric,
                 rules: GeoRuleSet | None = None) -> tuple[Panel, ParseReport]:
    """Parse a snapshot into a panel plus a row-level error report."""
    rules = rules or default_geo_rules()
    text = snapshot.payload.decode("utf-8-sig")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty payload") from None
    header = [h.strip() for h in header]
    report = ParseReport(source=snapshot.source, metric=metric)
    names = set(header)
    if "countyFIPS" in names:
        return _parse_usafacts(reader, header, metric, rules, report)
    if "UID" in names or ("FIPS" in names and "Admin2" in names):
        return _parse_jhu(reader, header, metric, rules, report)
    if "date" in names and ("cases" in names or "deaths" in names):
        return _parse_nyt(reader, header, metric, rules, report)
    if "date" in names and ("positive" in names or "death" in names):
        return _parse_atlantic(reader, header, metric, rules, report)
    unknown = next((h for h in header if h not in
                    {"date", "county", "state", "fips", "cases", "deaths"}), header[0])
    raise SchemaError(f"unrecognized payload schema; first unmatched column {unknown!r}")
