import datetime as dt

import numpy as np
import pytest
from hypothesis import given, strategies as st

from countcure.errors import DomainError
from countcure.model import (
    CumulativeSeries,
    IncrementSeries,
    Level,
    Metric,
    Panel,
    SeriesKey,
    SourceId,
    aggregate_to_state,
    align_panels,
    to_cumulative,
    to_increments,
)

START = dt.date(2020, 1, 22)


def cum(values, key=None, metric=Metric.INFECTION, source=SourceId.NYT):
    key = key or SeriesKey(Level.STATE, state_name="New Jersey")
    return CumulativeSeries(key, metric, source, START, np.asarray(values, dtype=float))


class TestSeriesKey:
    def test_county_requires_fips(self):
        with pytest.raises(DomainError):
            SeriesKey(Level.COUNTY, county_name="Grimes")

    def test_fips_must_be_five_digits(self):
        with pytest.raises(DomainError):
            SeriesKey(Level.COUNTY, fips="481", county_name="Grimes")

    def test_state_name_filled_from_fips(self):
        key = SeriesKey(Level.COUNTY, fips="48185", county_name="Grimes")
        assert key.state_name == "Texas"

    def test_state_key_rejects_county_fields(self):
        with pytest.raises(DomainError):
            SeriesKey(Level.STATE, state_name="Texas", fips="48185")

    def test_equality_and_hash_consistent(self):
        a = SeriesKey(Level.COUNTY, fips="48185", county_name="Grimes")
        b = SeriesKey(Level.COUNTY, fips="48185", county_name="Grimes")
        c = SeriesKey(Level.COUNTY, fips="53033", county_name="King")
        assert a == b and hash(a) == hash(b)
        assert a != c
        assert (a < c) != (c < a)

    def test_ident(self):
        assert SeriesKey(Level.NATIONAL).ident == "US"
        assert SeriesKey(Level.STATE, state_name="Texas").ident == "Texas"
        assert SeriesKey(Level.COUNTY, fips="48185", county_name="Grimes").ident == "48185"


class TestIncrements:
    def test_single_point(self):
        z = to_increments(cum([3]))
        assert z.values.tolist() == [3]

    def test_arithmetic_identity(self):
        assert to_increments(cum([1, 2, 3])).values.tolist() == [1, 1, 1]

    def test_negative_increment_preserved(self):
        assert to_increments(cum([5, 4, 6])).values.tolist() == [5, -1, 2]

    def test_to_cumulative_examples(self):
        key = SeriesKey(Level.STATE, state_name="Texas")
        z = IncrementSeries(key, Metric.DEATH, SourceId.JHU, START, np.array([5.0, -1.0, 2.0]))
        assert to_cumulative(z).values.tolist() == [5, 4, 6]

    @given(st.lists(st.integers(min_value=0, max_value=10**9), min_size=1, max_size=60))
    def test_round_trip_exact_on_integers(self, increments):
        y = np.cumsum(np.asarray(increments, dtype=float))
        y = np.abs(y)  # keep cumulative nonnegative for the constructor
        s = cum(np.sort(y))
        back = to_cumulative(to_increments(s))
        assert np.array_equal(back.values, s.values)

    def test_values_immutable(self):
        s = cum([1, 2, 3])
        with pytest.raises(ValueError):
            s.values[0] = 9.0

    def test_rejects_negative_cumulative(self):
        with pytest.raises(DomainError):
            cum([1, -2, 3])


class TestPanel:
    def test_atlantic_county_forbidden(self):
        with pytest.raises(DomainError):
            Panel(SourceId.ATLANTIC, Metric.INFECTION, Level.COUNTY, START)

    def test_add_checks_start_date(self):
        p = Panel(SourceId.NYT, Metric.INFECTION, Level.STATE, START)
        s = CumulativeSeries(
            SeriesKey(Level.STATE, state_name="Texas"), Metric.INFECTION,
            SourceId.NYT, START + dt.timedelta(days=1), np.array([1.0]),
        )
        with pytest.raises(Exception):
            p.add(s)

    def test_align_panels_pads_and_truncates(self):
        key = SeriesKey(Level.STATE, state_name="Texas")
        p1 = Panel(SourceId.NYT, Metric.INFECTION, Level.STATE, START)
        p1.add(CumulativeSeries(key, Metric.INFECTION, SourceId.NYT, START, np.array([1.0, 2, 3, 4])))
        p2 = Panel(SourceId.JHU, Metric.INFECTION, Level.STATE, START + dt.timedelta(days=1))
        p2.add(CumulativeSeries(key, Metric.INFECTION, SourceId.JHU,
                                START + dt.timedelta(days=1), np.array([2.0, 3])))
        a1, a2 = align_panels([p1, p2])
        assert a1.start_date == a2.start_date == START
        assert a1.n_days() == a2.n_days() == 3
        assert a2[key].values.tolist() == [0, 2, 3]

    def test_aggregate_to_state(self):
        p = Panel(SourceId.USAFACTS, Metric.INFECTION, Level.COUNTY, START)
        p.add(CumulativeSeries(SeriesKey(Level.COUNTY, fips="48185", county_name="Grimes"),
                               Metric.INFECTION, SourceId.USAFACTS, START, np.array([1.0, 2])))
        p.add(CumulativeSeries(SeriesKey(Level.COUNTY, fips="48201", county_name="Harris"),
                               Metric.INFECTION, SourceId.USAFACTS, START, np.array([10.0, 20])))
        state = aggregate_to_state(p)
        key = SeriesKey(Level.STATE, state_name="Texas")
        assert state[key].values.tolist() == [11, 22]
