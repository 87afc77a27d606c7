"""Canonical wide-format panel files.

County files carry ``ID,County,State`` then one ``XYYYY.MM.DD`` column
per day; state and national files drop the ID and County columns.  UTF-8,
LF line endings, minimal quoting.  Values round-trip bit-exactly: integral
values are written as integers, repaired (fractional) values with a
shortest-round-trip float representation.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import os
from pathlib import Path

import numpy as np

from ..errors import DomainError, SchemaError
from ..model import CumulativeSeries, Level, Metric, Panel, SeriesKey, SourceId


def _format_value(v: float) -> str:
    return str(int(v)) if v == int(v) and abs(v) < 1e15 else repr(float(v))


def _date_columns(start: dt.date, n_days: int) -> list[str]:
    return [f"X{(start + dt.timedelta(days=i)).strftime('%Y.%m.%d')}"
            for i in range(n_days)]


def write_canonical(panel: Panel, path) -> None:
    """Write a panel; dates are contiguous from the panel start."""
    if not len(panel):
        raise DomainError("refusing to write an empty panel")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    date_cols = _date_columns(panel.start_date, panel.n_days())
    if panel.level == Level.COUNTY:
        writer.writerow(["ID", "County", "State", *date_cols])
        for key in panel.sorted_keys():
            s = panel[key]
            writer.writerow([key.fips, key.county_name or "", key.state_name,
                             *map(_format_value, s.values)])
    else:
        writer.writerow(["State", *date_cols])
        for key in panel.sorted_keys():
            s = panel[key]
            name = key.state_name if panel.level == Level.STATE else "US"
            writer.writerow([name, *map(_format_value, s.values)])
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.with_name(out.name + ".tmp")
    tmp.write_text(buf.getvalue(), encoding="utf-8", newline="")
    os.replace(tmp, out)


def read_canonical(path, source: SourceId, metric: Metric) -> Panel:
    """Read a canonical file back; exact inverse of write_canonical."""
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(f"{path}: empty file") from None
    if header[:3] == ["ID", "County", "State"]:
        level = Level.COUNTY
        meta_cols = 3
    elif header[:1] == ["State"]:
        level = Level.STATE
        meta_cols = 1
    else:
        raise SchemaError(f"{path}: unrecognized canonical header {header[:3]}")
    dates: list[dt.date] = []
    for name in header[meta_cols:]:
        if not name.startswith("X"):
            raise SchemaError(f"{path}: unexpected column {name!r}")
        y, m, d = name[1:].split(".")
        dates.append(dt.date(int(y), int(m), int(d)))
    if not dates:
        raise SchemaError(f"{path}: no date columns")
    for i in range(1, len(dates)):
        if (dates[i] - dates[i - 1]).days != 1:
            raise SchemaError(f"{path}: non-contiguous dates at {dates[i]}")
    start = dates[0]
    rows = [row for row in reader if row]
    if level == Level.STATE and all(row[0] == "US" for row in rows):
        level = Level.NATIONAL
    panel = Panel(source, metric, level, start)
    for row in rows:
        values = np.array([float(v) for v in row[meta_cols:]])
        if values.size != len(dates):
            raise SchemaError(f"{path}: row width mismatch for {row[:meta_cols]}")
        if level == Level.COUNTY:
            key = SeriesKey(Level.COUNTY, fips=row[0], county_name=row[1] or None,
                            state_name=row[2])
        elif level == Level.STATE:
            key = SeriesKey(Level.STATE, state_name=row[0])
        else:
            key = SeriesKey(Level.NATIONAL)
        panel.add(CumulativeSeries(key, metric, source, start, values))
    return panel
