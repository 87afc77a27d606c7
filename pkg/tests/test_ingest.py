import csv
import datetime as dt
import io
from pathlib import Path

import numpy as np
import pytest

from countcure.errors import DomainError, FetchError, SchemaError
from countcure.ingest import (
    GeoRuleSet,
    MergeRule,
    cache_snapshot,
    default_geo_rules,
    fetch_source,
    join_factors,
    normalize_geography,
    parse_source,
    read_canonical,
    write_canonical,
)
from countcure.ingest.snapshot import RawSnapshot
from countcure.model import (
    CumulativeSeries, Level, Metric, Panel, SeriesKey, SourceId,
)

FIXTURES = Path(__file__).parent / "fixtures"


def snap(text: str, source=SourceId.NYT) -> RawSnapshot:
    return RawSnapshot(source=source, retrieved_at="2020-07-26T00:00:00+00:00",
                       payload=text.encode(), origin="inline")


class TestFetch:
    def test_fixture_passthrough(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("date,cases,deaths\n2020-01-22,1,0\n")
        s = fetch_source(SourceId.NYT, str(path))
        assert s.origin == str(path)
        assert b"2020-01-22" in s.payload

    def test_offline_url_is_permanent_error(self):
        with pytest.raises(FetchError) as exc:
            fetch_source(SourceId.JHU, "https://example.invalid/data.csv", offline=True)
        assert "offline" in str(exc.value)
        assert not exc.value.retryable

    def test_unreachable_url_is_retryable(self):
        with pytest.raises(FetchError) as exc:
            fetch_source(SourceId.JHU, "http://127.0.0.1:1/none.csv", timeout=0.2)
        assert exc.value.retryable

    def test_missing_fixture(self):
        with pytest.raises(FetchError):
            fetch_source(SourceId.NYT, "/no/such/file.csv")

    def test_cache_content_addressed(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("date,cases,deaths\n2020-01-22,1,0\n")
        s = fetch_source(SourceId.NYT, str(path), cache_dir=tmp_path / "cache")
        blob = tmp_path / "cache" / "blobs" / f"{s.sha256}.bin"
        assert blob.read_bytes() == s.payload
        # caching the same content twice adds no duplicate manifest entry
        cache_snapshot(s, tmp_path / "cache")
        import json
        manifest = json.loads((tmp_path / "cache" / "manifest.json").read_text())
        assert len(manifest["entries"]) == 1


class TestParseNyt:
    def test_two_row_pivot(self):
        s = snap("date,county,state,fips,cases,deaths\n"
                 "2020-01-22,Snohomish,Washington,53061,1,0\n"
                 "2020-01-23,Snohomish,Washington,53061,1,0\n")
        panel, report = parse_source(s, Metric.INFECTION)
        key = SeriesKey(Level.COUNTY, fips="53061", county_name="Snohomish")
        assert panel[key].values.tolist() == [1, 1]
        assert report.n_series == 1

    def test_leading_fill_zero(self):
        s = snap("date,county,state,fips,cases,deaths\n"
                 "2020-01-22,Snohomish,Washington,53061,1,0\n"
                 "2020-01-23,Snohomish,Washington,53061,2,0\n"
                 "2020-01-23,King,Washington,53033,5,0\n")
        panel, _ = parse_source(s, Metric.INFECTION)
        king = SeriesKey(Level.COUNTY, fips="53033", county_name="King")
        assert panel[king].values.tolist() == [0, 5]

    def test_interior_gap_drops_series(self):
        s = snap("date,county,state,fips,cases,deaths\n"
                 "2020-01-22,Snohomish,Washington,53061,1,0\n"
                 "2020-01-24,Snohomish,Washington,53061,2,0\n"
                 "2020-01-22,King,Washington,53033,1,0\n"
                 "2020-01-23,King,Washington,53033,1,0\n"
                 "2020-01-24,King,Washington,53033,2,0\n")
        panel, report = parse_source(s, Metric.INFECTION)
        assert len(panel) == 1
        assert report.dropped_series and "53061" in report.dropped_series[0]

    def test_malformed_fips_row_skipped(self):
        s = snap("date,county,state,fips,cases,deaths\n"
                 "2020-01-22,Nowhere,Washington,53x61,1,0\n"
                 "2020-01-22,King,Washington,53033,1,0\n")
        panel, report = parse_source(s, Metric.INFECTION)
        assert len(panel) == 1
        assert len(report.row_errors) == 1

    def test_nyc_alias_and_unknown_unallocated(self):
        s = snap("date,county,state,fips,cases,deaths\n"
                 "2020-01-22,New York City,New York,,7,1\n"
                 "2020-01-22,Unknown,Georgia,,3,0\n")
        panel, _ = parse_source(s, Metric.INFECTION)
        nyc = SeriesKey(Level.COUNTY, fips="36999", county_name="New York City")
        unalloc = SeriesKey(Level.COUNTY, fips="13000", county_name="Unallocated")
        assert panel[nyc].values.tolist() == [7]
        assert panel[unalloc].values.tolist() == [3]

    def test_state_and_national_levels(self):
        s = snap("date,state,fips,cases,deaths\n2020-01-22,Washington,53,1,0\n")
        panel, _ = parse_source(s, Metric.INFECTION)
        assert panel.level == Level.STATE
        s = snap("date,cases,deaths\n2020-01-22,1,0\n")
        panel, _ = parse_source(s, Metric.DEATH)
        assert panel.level == Level.NATIONAL

    def test_recovered_unsupported(self):
        s = snap("date,cases,deaths\n2020-01-22,1,0\n")
        with pytest.raises(SchemaError):
            parse_source(s, Metric.RECOVERED)

    def test_unknown_schema_names_column(self):
        with pytest.raises(SchemaError) as exc:
            parse_source(snap("foo,bar\n1,2\n"), Metric.INFECTION)
        assert "foo" in str(exc.value)

    def test_row_order_does_not_matter(self):
        rows = ["2020-01-23,King,Washington,53033,2,0",
                "2020-01-22,King,Washington,53033,1,0",
                "2020-01-22,Snohomish,Washington,53061,4,0",
                "2020-01-23,Snohomish,Washington,53061,5,0"]
        header = "date,county,state,fips,cases,deaths\n"
        a, _ = parse_source(snap(header + "\n".join(rows)), Metric.INFECTION)
        b, _ = parse_source(snap(header + "\n".join(reversed(rows))), Metric.INFECTION)
        assert {k: s.values.tolist() for k, s in a.series.items()} == \
               {k: s.values.tolist() for k, s in b.series.items()}


class TestParseUsafacts:
    HEADER = "countyFIPS,County Name,State,StateFIPS,2020-01-22,2020-01-23\n"

    def test_unallocated_routed_not_dropped(self):
        s = snap(self.HEADER + "0,Statewide Unallocated,GA,13,2,3\n"
                 "13121,Fulton County,GA,13,1,1\n", SourceId.USAFACTS)
        panel, _ = parse_source(s, Metric.INFECTION)
        unalloc = SeriesKey(Level.COUNTY, fips="13000", county_name="Unallocated")
        assert panel[unalloc].values.tolist() == [2, 3]

    def test_fixture_parses(self):
        s = fetch_source(SourceId.USAFACTS, str(FIXTURES / "usafacts_confirmed_counties.csv"))
        panel, report = parse_source(s, Metric.INFECTION)
        assert panel.level == Level.COUNTY
        assert report.row_errors == []
        assert len(panel) == 14  # 13 named counties + GA unallocated


class TestParseJhu:
    def test_unassigned_and_out_of_state(self):
        header = ",".join(["UID", "iso2", "iso3", "code3", "FIPS", "Admin2",
                           "Province_State", "Country_Region", "Lat", "Long_",
                           "Combined_Key", "1/22/20"])
        s = snap(header + "\n"
                 "84013121,US,USA,840,13121.0,Fulton,Georgia,US,0,0,\"Fulton, GA\",4\n"
                 "84090013,US,USA,840,90013,Unassigned,Georgia,US,0,0,\"Unassigned, GA\",9\n"
                 "84080013,US,USA,840,80013,Out of GA,Georgia,US,0,0,\"Out of GA\",0\n",
                 SourceId.JHU)
        panel, report = parse_source(s, Metric.INFECTION)
        unalloc = SeriesKey(Level.COUNTY, fips="13000", county_name="Unallocated")
        assert panel[unalloc].values.tolist() == [9]
        assert len(report.excluded_rows) == 1

    def test_spreadsheet_column_sum_oracle(self):
        # independent pass: plain csv column sums over the 10-county excerpt
        path = FIXTURES / "jhu_10county.csv"
        rows = list(csv.reader(io.StringIO(path.read_text())))
        expected = [sum(float(r[i]) for r in rows[1:]) for i in range(11, len(rows[0]))]
        s = fetch_source(SourceId.JHU, str(path))
        panel, report = parse_source(s, Metric.INFECTION)
        assert len(panel) == 10
        assert report.row_errors == []
        assert panel.total().tolist() == pytest.approx(expected)

    def test_bear_river_alias(self):
        s = fetch_source(SourceId.JHU, str(FIXTURES / "jhu_confirmed_counties.csv"))
        panel, _ = parse_source(s, Metric.INFECTION)
        bear = SeriesKey(Level.COUNTY, fips="49901", county_name="Bear River")
        assert bear in panel


class TestParseAtlantic:
    def test_state_level_with_blanks(self):
        s = snap("date,state,positive,negative,death,recovered\n"
                 "20200123,WA,2,10,0,\n"
                 "20200122,WA,1,5,,\n", SourceId.ATLANTIC)
        panel, report = parse_source(s, Metric.DEATH)
        key = SeriesKey(Level.STATE, state_name="Washington")
        assert panel[key].values.tolist() == [0, 0]
        assert report.blank_cells >= 1

    def test_recovered_supported(self):
        s = snap("date,state,positive,negative,death,recovered\n"
                 "20200122,WA,5,5,0,2\n", SourceId.ATLANTIC)
        panel, _ = parse_source(s, Metric.RECOVERED)
        assert panel.metric == Metric.RECOVERED


class TestNormalizeGeography:
    def make_panel(self, values_by_fips):
        start = dt.date(2020, 1, 22)
        panel = Panel(SourceId.USAFACTS, Metric.INFECTION, Level.COUNTY, start)
        for fips, values in values_by_fips.items():
            key = SeriesKey(Level.COUNTY, fips=fips, county_name=f"C{fips}")
            panel.add(CumulativeSeries(key, Metric.INFECTION, SourceId.USAFACTS,
                                       start, np.asarray(values, dtype=float)))
        return panel

    def test_nyc_merge_sums_members(self):
        panel = self.make_panel({
            "36005": [1, 2], "36047": [2, 3], "36061": [3, 4],
            "36081": [4, 5], "36085": [5, 6], "36119": [7, 8],
        })
        out, report = normalize_geography(panel, default_geo_rules())
        nyc = SeriesKey(Level.COUNTY, fips="36999", county_name="New York City")
        assert out[nyc].values.tolist() == [15, 20]
        assert report.total_before == report.total_after + report.excluded_total
        assert len(out) == 2

    def test_empty_ruleset_identity(self):
        panel = self.make_panel({"36119": [1, 2]})
        out, _ = normalize_geography(panel, GeoRuleSet())
        assert out.series.keys() == panel.series.keys()

    def test_missing_member_warned(self):
        panel = self.make_panel({"36005": [1, 2]})
        out, report = normalize_geography(panel, default_geo_rules())
        assert report.merge_members_missing["New York City"]
        nyc = SeriesKey(Level.COUNTY, fips="36999", county_name="New York City")
        assert out[nyc].values.tolist() == [1, 2]

    def test_island_exclusion(self):
        panel = self.make_panel({"72001": [5, 6], "36119": [1, 2]})
        out, report = normalize_geography(panel, default_geo_rules())
        assert len(out) == 1
        assert report.excluded_total == 6

    def test_key_spaces_agree_after_normalization(self):
        rules = default_geo_rules()
        nyt, _ = parse_source(fetch_source(SourceId.NYT, str(FIXTURES / "nyt_counties.csv")),
                              Metric.INFECTION, rules)
        jhu, _ = parse_source(fetch_source(SourceId.JHU, str(FIXTURES / "jhu_confirmed_counties.csv")),
                              Metric.INFECTION, rules)
        usa, _ = parse_source(fetch_source(SourceId.USAFACTS,
                                           str(FIXTURES / "usafacts_confirmed_counties.csv")),
                              Metric.INFECTION, rules)
        keys = []
        for panel in (nyt, jhu, usa):
            out, _ = normalize_geography(panel, rules)
            keys.append({k.fips for k in out.series})
        assert keys[0] == keys[1] == keys[2]

    def test_duplicate_member_rejected(self):
        with pytest.raises(DomainError):
            GeoRuleSet(merges=[
                MergeRule("36999", "A", ("36005",)),
                MergeRule("36998", "B", ("36005",)),
            ])


class TestCanonical:
    def make_panel(self):
        start = dt.date(2020, 1, 22)
        panel = Panel(SourceId.NYT, Metric.INFECTION, Level.COUNTY, start)
        key = SeriesKey(Level.COUNTY, fips="53061", county_name="Snohomish")
        panel.add(CumulativeSeries(key, Metric.INFECTION, SourceId.NYT, start,
                                   np.array([1.0, 2.0])))
        return panel

    def test_header_exact(self, tmp_path):
        path = tmp_path / "panel.csv"
        write_canonical(self.make_panel(), path)
        first = path.read_text().splitlines()[0]
        assert first == "ID,County,State,X2020.01.22,X2020.01.23"

    def test_round_trip_identity(self, tmp_path):
        panel = self.make_panel()
        path = tmp_path / "panel.csv"
        write_canonical(panel, path)
        back = read_canonical(path, SourceId.NYT, Metric.INFECTION)
        assert back.series.keys() == panel.series.keys()
        for key in panel.series:
            assert np.array_equal(back[key].values, panel[key].values)

    def test_double_round_trip_byte_identical(self, tmp_path):
        s = fetch_source(SourceId.NYT, str(FIXTURES / "nyt_counties.csv"))
        panel, _ = parse_source(s, Metric.INFECTION)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_canonical(panel, p1)
        write_canonical(read_canonical(p1, SourceId.NYT, Metric.INFECTION), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_fractional_values_round_trip(self, tmp_path):
        start = dt.date(2020, 1, 22)
        panel = Panel(SourceId.NYT, Metric.INFECTION, Level.STATE, start)
        key = SeriesKey(Level.STATE, state_name="Washington")
        panel.add(CumulativeSeries(key, Metric.INFECTION, SourceId.NYT, start,
                                   np.array([1.25, 2.7500000000000004])))
        path = tmp_path / "panel.csv"
        write_canonical(panel, path)
        back = read_canonical(path, SourceId.NYT, Metric.INFECTION)
        assert np.array_equal(back[key].values, panel[key].values)

    def test_state_level_omits_id_county(self, tmp_path):
        start = dt.date(2020, 1, 22)
        panel = Panel(SourceId.NYT, Metric.INFECTION, Level.STATE, start)
        key = SeriesKey(Level.STATE, state_name="Washington")
        panel.add(CumulativeSeries(key, Metric.INFECTION, SourceId.NYT, start,
                                   np.array([1.0])))
        path = tmp_path / "panel.csv"
        write_canonical(panel, path)
        assert path.read_text().splitlines()[0] == "State,X2020.01.22"

    def test_empty_panel_refused(self, tmp_path):
        panel = Panel(SourceId.NYT, Metric.INFECTION, Level.STATE, dt.date(2020, 1, 22))
        with pytest.raises(DomainError):
            write_canonical(panel, tmp_path / "x.csv")

    def test_comma_in_county_quoted(self, tmp_path):
        start = dt.date(2020, 1, 22)
        panel = Panel(SourceId.JHU, Metric.INFECTION, Level.COUNTY, start)
        key = SeriesKey(Level.COUNTY, fips="24510", county_name="Baltimore, city of")
        panel.add(CumulativeSeries(key, Metric.INFECTION, SourceId.JHU, start,
                                   np.array([1.0])))
        path = tmp_path / "panel.csv"
        write_canonical(panel, path)
        assert '"Baltimore, city of"' in path.read_text()
        back = read_canonical(path, SourceId.JHU, Metric.INFECTION)
        assert key in back

    def test_non_contiguous_read_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("State,X2020.01.22,X2020.01.24\nWashington,1,2\n")
        with pytest.raises(SchemaError):
            read_canonical(path, SourceId.NYT, Metric.INFECTION)


class TestFactors:
    def make_panel(self):
        s = fetch_source(SourceId.NYT, str(FIXTURES / "nyt_counties.csv"))
        panel, _ = parse_source(s, Metric.INFECTION)
        return panel

    def test_join_shapes(self):
        panel = self.make_panel()
        join = join_factors(panel, FIXTURES / "factors_demo.csv")
        assert len(join.rows) == len(panel)  # no row duplication
        n_panel_cols = 3 + panel.n_days()
        n_factor_cols = len((FIXTURES / "factors_demo.csv").read_text()
                            .splitlines()[0].split(","))
        assert len(join.header) == n_panel_cols + n_factor_cols - 1  # shared ID

    def test_unmatched_listed_row_retained(self):
        panel = self.make_panel()
        join = join_factors(panel, FIXTURES / "factors_demo.csv")
        assert "53033" in join.unmatched_fips
        king_row = [r for r in join.rows if r[0] == "53033"][0]
        assert king_row[-3:] == ["", "", ""]

    def test_duplicate_fips_rejected(self, tmp_path):
        bad = tmp_path / "factors.csv"
        bad.write_text("ID,Pop\n53033,1\n53033,2\n")
        with pytest.raises(DomainError) as exc:
            join_factors(self.make_panel(), bad)
        assert "53033" in str(exc.value)


class TestProductionScaleRoundTrip:
    def test_3200_county_panel_byte_identical_rewrite(self, tmp_path):
        rng = np.random.default_rng(42)
        start = dt.date(2020, 1, 22)
        panel = Panel(SourceId.USAFACTS, Metric.INFECTION, Level.COUNTY, start)
        from countcure.model import STATE_FIPS
        prefixes = sorted(STATE_FIPS)[:50]
        count = 0
        for prefix in prefixes:
            for local in range(1, 129, 2):  # 64 odd county codes per state
                fips = f"{prefix}{local:03d}"
                values = np.cumsum(rng.integers(0, 50, size=40)).astype(float)
                key = SeriesKey(Level.COUNTY, fips=fips, county_name=f"County {fips}")
                panel.add(CumulativeSeries(key, Metric.INFECTION, SourceId.USAFACTS,
                                           start, values))
                count += 1
        assert count == 3200
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_canonical(panel, p1)
        write_canonical(read_canonical(p1, SourceId.USAFACTS, Metric.INFECTION), p2)
        assert p1.read_bytes() == p2.read_bytes()
