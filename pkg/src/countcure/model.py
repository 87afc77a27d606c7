"""Canonical domain types for cumulative count panels.

A location's data for one metric and one source is a cumulative vector
Y_t (t = 1..T) anchored at a calendar start date.  Everything downstream
(comparison, detection, repair) works on these values or on the daily
increments Z_t = Y_t - Y_{t-1} (Z_1 = Y_1).  Instances are immutable
after construction and safe to share across threads.
"""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

import numpy as np

from .errors import AlignmentError, DomainError

US_STATE_NAMES = {
    "AL": "Alabama", "AK": "Alaska", "AZ": "Arizona", "AR": "Arkansas",
    "CA": "California", "CO": "Colorado", "CT": "Connecticut", "DE": "Delaware",
    "FL": "Florida", "GA": "Georgia", "HI": "Hawaii", "ID": "Idaho",
    "IL": "Illinois", "IN": "Indiana", "IA": "Iowa", "KS": "Kansas",
    "KY": "Kentucky", "LA": "Louisiana", "ME": "Maine", "MD": "Maryland",
    "MA": "Massachusetts", "MI": "Michigan", "MN": "Minnesota", "MS": "Mississippi",
    "MO": "Missouri", "MT": "Montana", "NE": "Nebraska", "NV": "Nevada",
    "NH": "New Hampshire", "NJ": "New Jersey", "NM": "New Mexico", "NY": "New York",
    "NC": "North Carolina", "ND": "North Dakota", "OH": "Ohio", "OK": "Oklahoma",
    "OR": "Oregon", "PA": "Pennsylvania", "RI": "Rhode Island", "SC": "South Carolina",
    "SD": "South Dakota", "TN": "Tennessee", "TX": "Texas", "UT": "Utah",
    "VT": "Vermont", "VA": "Virginia", "WA": "Washington", "WV": "West Virginia",
    "WI": "Wisconsin", "WY": "Wyoming", "DC": "District of Columbia",
    "PR": "Puerto Rico", "GU": "Guam", "AS": "American Samoa",
    "VI": "Virgin Islands", "MP": "Northern Mariana Islands",
}

STATE_FIPS = {
    "01": "Alabama", "02": "Alaska", "04": "Arizona", "05": "Arkansas",
    "06": "California", "08": "Colorado", "09": "Connecticut", "10": "Delaware",
    "11": "District of Columbia", "12": "Florida", "13": "Georgia", "15": "Hawaii",
    "16": "Idaho", "17": "Illinois", "18": "Indiana", "19": "Iowa",
    "20": "Kansas", "21": "Kentucky", "22": "Louisiana", "23": "Maine",
    "24": "Maryland", "25": "Massachusetts", "26": "Michigan", "27": "Minnesota",
    "28": "Mississippi", "29": "Missouri", "30": "Montana", "31": "Nebraska",
    "32": "Nevada", "33": "New Hampshire", "34": "New Jersey", "35": "New Mexico",
    "36": "New York", "37": "North Carolina", "38": "North Dakota", "39": "Ohio",
    "40": "Oklahoma", "41": "Oregon", "42": "Pennsylvania", "44": "Rhode Island",
    "45": "South Carolina", "46": "South Dakota", "47": "Tennessee", "48": "Texas",
    "49": "Utah", "50": "Vermont", "51": "Virginia", "53": "Washington",
    "54": "West Virginia", "55": "Wisconsin", "56": "Wyoming",
    "60": "American Samoa", "66": "Guam", "69": "Northern Mariana Islands",
    "72": "Puerto Rico", "78": "Virgin Islands",
}

ISLAND_TERRITORY_FIPS = {"60", "66", "69", "72", "78"}


class Level(str, enum.Enum):
    NATIONAL = "national"
    STATE = "state"
    COUNTY = "county"


class SourceId(str, enum.Enum):
    NYT = "NYT"
    ATLANTIC = "Atlantic"
    JHU = "JHU"
    USAFACTS = "USAFacts"


class Metric(str, enum.Enum):
    INFECTION = "infection"
    DEATH = "death"
    RECOVERED = "recovered"


@dataclass(frozen=True, order=True)
class SeriesKey:
    """Identifies one location at one aggregation level.

    County keys carry a 5-digit fips whose first two digits are the state
    fips; state keys carry the state name only; the national key carries
    neither.  The county display name does not participate in identity:
    sources disagree on naming ("Fulton" vs "Fulton County") while the
    fips is the join key.
    """

    level: Level
    state_name: str | None = None
    fips: str | None = None
    county_name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.level == Level.COUNTY:
            if not self.fips:
                raise DomainError("county-level key requires a fips code")
            if len(self.fips) != 5 or not self.fips.isdigit():
                raise DomainError(f"fips must be 5 digits, got {self.fips!r}")
            if self.fips[:2] not in STATE_FIPS:
                raise DomainError(f"unknown state fips prefix in {self.fips!r}")
            if self.state_name is None:
                object.__setattr__(self, "state_name", STATE_FIPS[self.fips[:2]])
        else:
            if self.fips is not None or self.county_name is not None:
                raise DomainError(f"{self.level.value}-level key must not carry county fields")
            if self.level == Level.STATE and not self.state_name:
                raise DomainError("state-level key requires a state name")
            if self.level == Level.NATIONAL and self.state_name is not None:
                raise DomainError("national-level key must not carry a state name")

    @property
    def ident(self) -> str:
        """Compact id usable in paths and APIs: fips, state name, or US."""
        if self.level == Level.COUNTY:
            return self.fips  # type: ignore[return-value]
        if self.level == Level.STATE:
            return self.state_name  # type: ignore[return-value]
        return "US"

    def __str__(self) -> str:
        if self.level == Level.COUNTY:
            return f"{self.county_name}, {self.state_name} ({self.fips})"
        return self.ident


def _freeze(values: Iterable[float]) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise DomainError("series values must be a nonempty 1-d vector")
    if not np.all(np.isfinite(arr)):
        raise DomainError("series values must be finite")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CumulativeSeries:
    """Cumulative counts Y_t for one (location, metric, source).

    Raw feeds may violate monotonicity (negative daily revisions); only
    OD-repaired output is guaranteed nondecreasing.
    """

    key: SeriesKey
    metric: Metric
    source: SourceId
    start_date: dt.date
    values: np.ndarray

    def __post_init__(self):
        arr = _freeze(self.values)
        if np.any(arr < 0):
            raise DomainError("cumulative values must be nonnegative")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.size)

    def date_at(self, t_index: int) -> dt.date:
        """Calendar date of 1-based index t."""
        return self.start_date + dt.timedelta(days=t_index - 1)

    def index_of(self, date: dt.date) -> int:
        offset = (date - self.start_date).days
        if not 0 <= offset < len(self):
            raise DomainError(f"{date} outside series range")
        return offset + 1

    def with_values(self, values: np.ndarray) -> "CumulativeSeries":
        return replace(self, values=values)


@dataclass(frozen=True)
class IncrementSeries:
    """Daily increments Z_t = Y_t - Y_{t-1}, with Z_1 = Y_1.

    May contain negative entries when the parent cumulative series has an
    order-dependency violation.
    """

    key: SeriesKey
    metric: Metric
    source: SourceId
    start_date: dt.date
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))

    def __len__(self) -> int:
        return int(self.values.size)

    def date_at(self, t_index: int) -> dt.date:
        return self.start_date + dt.timedelta(days=t_index - 1)

    def with_values(self, values: np.ndarray) -> "IncrementSeries":
        return replace(self, values=values)


def to_increments(series: CumulativeSeries) -> IncrementSeries:
    """Difference a cumulative series; exact inverse of :func:`to_cumulative`."""
    y = series.values
    z = np.empty_like(y)
    z[0] = y[0]
    np.subtract(y[1:], y[:-1], out=z[1:])
    return IncrementSeries(series.key, series.metric, series.source, series.start_date, z)


def to_cumulative(series: IncrementSeries) -> CumulativeSeries:
    """Running-sum a series of increments back into cumulative counts."""
    return CumulativeSeries(
        series.key, series.metric, series.source, series.start_date,
        np.cumsum(series.values),
    )


@dataclass
class Panel:
    """All of one source's series for one metric at one level."""

    source: SourceId
    metric: Metric
    level: Level
    start_date: dt.date
    series: dict[SeriesKey, CumulativeSeries] = field(default_factory=dict)

    def __post_init__(self):
        if self.level == Level.COUNTY and self.source == SourceId.ATLANTIC:
            raise DomainError("Atlantic provides no county-level data")
        for key, s in self.series.items():
            self._check_member(key, s)

    def _check_member(self, key: SeriesKey, s: CumulativeSeries):
        if key != s.key or key.level != self.level:
            raise AlignmentError(f"series key mismatch for {key}")
        if s.metric != self.metric or s.source != self.source:
            raise AlignmentError(f"series metric/source mismatch for {key}")
        if s.start_date != self.start_date:
            raise AlignmentError(f"series start date mismatch for {key}")

    def add(self, s: CumulativeSeries):
        self._check_member(s.key, s)
        self.series[s.key] = s

    def __len__(self) -> int:
        return len(self.series)

    def __contains__(self, key: SeriesKey) -> bool:
        return key in self.series

    def __getitem__(self, key: SeriesKey) -> CumulativeSeries:
        return self.series[key]

    def sorted_keys(self) -> list[SeriesKey]:
        return sorted(self.series)

    def n_days(self) -> int:
        if not self.series:
            return 0
        return len(next(iter(self.series.values())))

    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=self.n_days() - 1)

    def dates(self) -> list[dt.date]:
        return [self.start_date + dt.timedelta(days=i) for i in range(self.n_days())]

    def total(self) -> np.ndarray:
        """Panel-wide cumulative total by day."""
        out = np.zeros(self.n_days())
        for s in self.series.values():
            out += s.values
        return out

    def map_values(self, fn) -> "Panel":
        out = Panel(self.source, self.metric, self.level, self.start_date)
        for key in self.sorted_keys():
            s = self.series[key]
            out.add(s.with_values(fn(s)))
        return out


def align_panels(panels: list[Panel]) -> list[Panel]:
    """Put panels on a shared date range.

    Starts are extended back to the earliest panel start with leading
    zeros (cumulative counts are zero before the first report); ends are
    truncated to the latest date all panels cover.
    """
    if not panels:
        return []
    start = min(p.start_date for p in panels)
    end = min(p.end_date() for p in panels)
    if end < start:
        raise AlignmentError("panels share no common date range")
    n_days = (end - start).days + 1
    out = []
    for p in panels:
        lead = (p.start_date - start).days
        keep = n_days - lead
        if keep < 1:
            raise AlignmentError(f"panel {p.source.value} has no data in the common range")
        q = Panel(p.source, p.metric, p.level, start)
        for key in p.sorted_keys():
            s = p.series[key]
            vals = np.concatenate([np.zeros(lead), s.values[:keep]])
            q.add(CumulativeSeries(key, p.metric, p.source, start, vals))
        out.append(q)
    return out


def aggregate_to_state(panel: Panel) -> Panel:
    """Sum a county panel into a state panel (unallocated rows included)."""
    if panel.level != Level.COUNTY:
        raise DomainError("aggregate_to_state expects a county panel")
    out = Panel(panel.source, panel.metric, Level.STATE, panel.start_date)
    sums: dict[str, np.ndarray] = {}
    for key, s in panel.series.items():
        sums.setdefault(key.state_name, np.zeros(len(s)))
        sums[key.state_name] = sums[key.state_name] + s.values
    for state in sorted(sums):
        key = SeriesKey(Level.STATE, state_name=state)
        out.add(CumulativeSeries(key, panel.metric, panel.source, panel.start_date, sums[state]))
    return out


def iter_series(panel: Panel) -> Iterator[CumulativeSeries]:
    for key in panel.sorted_keys():
        yield panel.series[key]


def panel_from_series(source: SourceId, metric: Metric, level: Level,
                      start_date: dt.date, series: Iterable[CumulativeSeries]) -> Panel:
    panel = Panel(source, metric, level, start_date)
    for s in series:
        panel.add(s)
    return panel


def parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text)


def state_name_from_postal(code: str) -> str | None:
    return US_STATE_NAMES.get(code.upper())
