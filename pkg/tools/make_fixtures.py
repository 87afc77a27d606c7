#!/usr/bin/env python3
"""Generate the bundled test fixtures (deterministic, seeded).

The fixtures are synthetic stand-ins for the real 2020 source snapshots,
written in each source's exact schema.  State series carry planted trend
breaks (CA/FL/MO/NV infections, SC/TX deaths), the New Jersey death spike
(+1,854 on 2020-06-25), weekly reporting cycles, and a handful of
geography quirks (fips-less New York City and Bear River rows, statewide
unallocated buckets, an island-territory row, order-dependency drops).

Regenerate with:  python3 tools/make_fixtures.py
"""

from __future__ import annotations

import csv
import datetime as dt
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
START = dt.date(2020, 3, 15)  # a Sunday
END = dt.date(2020, 7, 25)
N_DAYS = (END - START).days + 1
DATES = [START + dt.timedelta(days=i) for i in range(N_DAYS)]
APRIL_1 = dt.date(2020, 4, 1)

rng = np.random.default_rng(20200315)


def weekday_multipliers(values_by_sunday_first):
    """Index by python date.weekday() (Mon=0)."""
    sun, mon, tue, wed, thu, fri, sat = values_by_sunday_first
    return {6: sun, 0: mon, 1: tue, 2: wed, 3: thu, 4: fri, 5: sat}


INFECT_WD_EARLY = weekday_multipliers([0.80, 0.78, 0.92, 0.98, 1.02, 1.12, 1.38])
INFECT_WD_LATE = weekday_multipliers([0.78, 0.80, 0.94, 1.00, 1.04, 1.34, 1.10])
DEATH_WD = weekday_multipliers([0.52, 0.60, 1.48, 1.38, 1.16, 1.00, 0.86])


def day_index(date: dt.date) -> int:
    return (date - START).days


def piecewise_counts(base: float, slope1: float, slope2: float, break_date: dt.date | None,
                     multipliers, seed: int, spike: dict[dt.date, float] | None = None,
                     late_multipliers=None) -> np.ndarray:
    """Daily new counts: log-linear trend with an optional slope break,
    calendar-weekday multipliers, Poisson noise, optional added spikes."""
    local = np.random.default_rng(seed)
    b = day_index(break_date) if break_date else N_DAYS + 1
    z = np.zeros(N_DAYS)
    for i, date in enumerate(DATES):
        eta = np.log(base) + slope1 * min(i, b) + slope2 * max(0, i - b)
        mult = multipliers
        if late_multipliers is not None and date >= APRIL_1:
            mult = late_multipliers
        mu = np.exp(eta) * mult[date.weekday()]
        z[i] = local.poisson(mu)
    if spike:
        for date, add in spike.items():
            z[day_index(date)] += add
    return z


def cumulative(z: np.ndarray) -> np.ndarray:
    return np.cumsum(z)


# ---------------------------------------------------------------------------
# state-level series (NYT baseline; Atlantic/JHU jittered copies)

STATE_FIPS = {
    "California": "06", "Florida": "12", "Missouri": "29", "Nevada": "32",
    "South Carolina": "45", "Texas": "48", "New Jersey": "34", "New York": "36",
}
STATE_POSTAL = {
    "California": "CA", "Florida": "FL", "Missouri": "MO", "Nevada": "32",
    "South Carolina": "SC", "Texas": "TX", "New Jersey": "NJ", "New York": "NY",
}
STATE_POSTAL["Nevada"] = "NV"

STATE_SPECS = {
    # state: (infections, deaths); each: base, slope1, slope2, break_date, spikes
    "California": ((1600.0, 0.004, 0.030, dt.date(2020, 6, 10), None),
                   (55.0, 0.002, 0.0, None, None)),
    "Florida": ((900.0, -0.002, 0.050, dt.date(2020, 6, 7), None),
                (38.0, 0.001, 0.0, None, None)),
    "Missouri": ((210.0, 0.000, 0.034, dt.date(2020, 6, 23), None),
                 (13.0, 0.000, 0.0, None, None)),
    "Nevada": ((120.0, -0.001, 0.040, dt.date(2020, 6, 9), None),
               (6.0, 0.001, 0.0, None, None)),
    "South Carolina": ((280.0, 0.010, 0.0, None, None),
                       (9.0, 0.002, 0.110, dt.date(2020, 7, 13), None)),
    "Texas": ((1400.0, 0.006, 0.0, None, None),
              (28.0, -0.001, 0.055, dt.date(2020, 7, 1), None)),
    "New Jersey": ((1900.0, -0.018, 0.0, None, None),
                   (260.0, -0.020, 0.0, None, {dt.date(2020, 6, 25): 1854.0})),
    "New York": ((4800.0, -0.020, 0.0, None, None),
                 (420.0, -0.025, 0.0, None, None)),
}


def build_state_series() -> dict[str, dict[str, np.ndarray]]:
    out = {}
    for i, (state, (inf, dth)) in enumerate(sorted(STATE_SPECS.items())):
        infections = piecewise_counts(inf[0], inf[1], inf[2], inf[3], INFECT_WD_EARLY,
                                      seed=1000 + i, spike=inf[4],
                                      late_multipliers=INFECT_WD_LATE)
        deaths = piecewise_counts(dth[0], dth[1], dth[2], dth[3], DEATH_WD,
                                  seed=2000 + i, spike=dth[4])
        out[state] = {"cases": cumulative(infections), "deaths": cumulative(deaths)}
    return out


def jitter_cumulative(y: np.ndarray, seed: int, scale: float = 0.01) -> np.ndarray:
    """A nearby source's version: small monotone perturbation of increments."""
    local = np.random.default_rng(seed)
    z = np.diff(np.r_[0.0, y])
    factors = 1.0 + local.uniform(-scale, scale, size=z.size)
    out = np.round(np.maximum(z * factors, 0.0))
    return np.cumsum(out)


def write_nyt_states(states):
    with open(OUT / "nyt_states.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "state", "fips", "cases", "deaths"])
        for date in DATES:
            i = day_index(date)
            for state in sorted(states):
                w.writerow([date.isoformat(), state, STATE_FIPS[state],
                            int(states[state]["cases"][i]),
                            int(states[state]["deaths"][i])])


def write_atlantic_states(states):
    rows = []
    for date in reversed(DATES):  # covidtracking files run newest-first
        i = day_index(date)
        for state in sorted(states):
            cases = jitter_cumulative(states[state]["cases"], seed=31, scale=0.012)[i]
            deaths = jitter_cumulative(states[state]["deaths"], seed=37, scale=0.012)[i]
            recovered = int(0.6 * cases) if date >= dt.date(2020, 4, 10) else ""
            rows.append([date.strftime("%Y%m%d"), STATE_POSTAL[state],
                         int(cases), int(cases * 8), int(deaths), recovered])
    with open(OUT / "atlantic_states.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "state", "positive", "negative", "death", "recovered"])
        w.writerows(rows)


JHU_META = ["UID", "iso2", "iso3", "code3", "FIPS", "Admin2", "Province_State",
            "Country_Region", "Lat", "Long_", "Combined_Key"]


def jhu_date_cols():
    return [f"{d.month}/{d.day}/{d.year % 100}" for d in DATES]


def write_jhu_states(states, metric_col, filename, seed):
    with open(OUT / filename, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(JHU_META + jhu_date_cols())
        for state in sorted(states):
            y = jitter_cumulative(states[state][metric_col], seed=seed, scale=0.008)
            w.writerow([f"840{STATE_FIPS[state]}000", "US", "USA", "840",
                        "", "", state, "US", "0.0", "0.0", f"{state}, US",
                        *map(int, y)])


# ---------------------------------------------------------------------------
# county-level series

COUNTY_SPECS = {
    # fips: (name, state, infection base/slope, death base/slope)
    "36005": ("Bronx", "New York", 380.0, 72.0),
    "36047": ("Kings", "New York", 520.0, 95.0),
    "36061": ("New York", "New York", 430.0, 80.0),
    "36081": ("Queens", "New York", 560.0, 99.0),
    "36085": ("Richmond", "New York", 120.0, 22.0),
    "36119": ("Westchester", "New York", 240.0, 40.0),
    "49003": ("Box Elder", "Utah", 6.0, 0.4),
    "49005": ("Cache", "Utah", 14.0, 0.6),
    "49033": ("Rich", "Utah", 1.2, 0.1),
    "48185": ("Grimes", "Texas", 3.0, 0.3),
    "53033": ("King", "Washington", 95.0, 9.0),
    "53061": ("Snohomish", "Washington", 40.0, 4.0),
    "13121": ("Fulton", "Georgia", 85.0, 5.0),
}

GRIMES_SPIKES = {dt.date(2020, 5, 31): 82.0, dt.date(2020, 7, 8): 45.0}


def build_county_series() -> dict[str, dict[str, np.ndarray]]:
    out = {}
    for i, (fips, (name, state, inf_base, dth_base)) in enumerate(sorted(COUNTY_SPECS.items())):
        spikes = GRIMES_SPIKES if fips == "48185" else None
        slope = -0.012 if state == "New York" else 0.008
        infections = piecewise_counts(inf_base, slope, 0.0, None, INFECT_WD_EARLY,
                                      seed=3000 + i, spike=spikes,
                                      late_multipliers=INFECT_WD_LATE)
        deaths = piecewise_counts(dth_base, slope, 0.0, None, DEATH_WD, seed=4000 + i)
        out[fips] = {"name": name, "state": state,
                     "cases": cumulative(infections), "deaths": cumulative(deaths)}
    # unallocated Georgia bucket, shared by all sources
    ga_unalloc = piecewise_counts(4.0, 0.004, 0.0, None, INFECT_WD_EARLY, seed=5001)
    ga_unalloc_d = piecewise_counts(0.5, 0.0, 0.0, None, DEATH_WD, seed=5002)
    out["GA_UNALLOC"] = {"name": "Unallocated", "state": "Georgia",
                         "cases": cumulative(ga_unalloc), "deaths": cumulative(ga_unalloc_d)}
    return out


def plant_od_violation(y: np.ndarray, date: dt.date, drop: float) -> np.ndarray:
    """Push one day's cumulative below the previous day (a revision error)."""
    out = y.copy()
    i = day_index(date)
    out[i] = max(0.0, out[i - 1] - drop)
    return out


def write_nyt_counties(counties):
    nyc = sum(counties[f]["cases"] for f in ("36005", "36047", "36061", "36081", "36085"))
    nyc_d = sum(counties[f]["deaths"] for f in ("36005", "36047", "36061", "36081", "36085"))
    fulton_deaths = plant_od_violation(counties["13121"]["deaths"], dt.date(2020, 5, 20), 2.0)
    with open(OUT / "nyt_counties.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "county", "state", "fips", "cases", "deaths"])
        for date in DATES:
            i = day_index(date)
            w.writerow([date.isoformat(), "New York City", "New York", "",
                        int(nyc[i]), int(nyc_d[i])])
            for fips in ("36119", "49003", "49005", "49033", "48185", "53033",
                         "53061", "13121"):
                c = counties[fips]
                deaths = fulton_deaths if fips == "13121" else c["deaths"]
                w.writerow([date.isoformat(), c["name"], c["state"], fips,
                            int(c["cases"][i]), int(deaths[i])])
            w.writerow([date.isoformat(), "Unknown", "Georgia", "",
                        int(counties["GA_UNALLOC"]["cases"][i]),
                        int(counties["GA_UNALLOC"]["deaths"][i])])


def write_jhu_counties(counties):
    """JHU folds the boroughs into New York County and districts Utah."""
    nyc = sum(counties[f]["cases"] for f in ("36005", "36047", "36061", "36081", "36085"))
    nyc_d = sum(counties[f]["deaths"] for f in ("36005", "36047", "36061", "36081", "36085"))
    bear_river = sum(counties[f]["cases"] for f in ("49003", "49005", "49033"))
    bear_river_d = sum(counties[f]["deaths"] for f in ("49003", "49005", "49033"))
    pr = cumulative(piecewise_counts(9.0, 0.004, 0.0, None, INFECT_WD_EARLY, seed=6001))
    pr_d = cumulative(piecewise_counts(0.8, 0.0, 0.0, None, DEATH_WD, seed=6002))

    def rows(metric):
        zero = np.zeros(N_DAYS, dtype=int)
        nyc_v, br_v, pr_v = (nyc, bear_river, pr) if metric == "cases" else (nyc_d, bear_river_d, pr_d)
        out = []
        for fips in ("36005", "36047", "36081", "36085"):
            c = counties[fips]
            out.append((fips, c["name"], c["state"], zero))
        out.append(("36061", "New York", "New York",
                    jitter_cumulative(nyc_v, seed=41, scale=0.006)))
        out.append(("36119", "Westchester", "New York",
                    jitter_cumulative(counties["36119"][metric], seed=43, scale=0.006)))
        out.append(("", "Bear River", "Utah",
                    jitter_cumulative(br_v, seed=47, scale=0.01)))
        for fips in ("48185", "53033", "53061", "13121"):
            c = counties[fips]
            out.append((fips, c["name"], c["state"],
                        jitter_cumulative(c[metric], seed=53 + int(fips[:2]), scale=0.006)))
        out.append(("90013", "Unassigned", "Georgia",
                    counties["GA_UNALLOC"][metric].astype(int)))
        out.append(("80013", "Out of GA", "Georgia", zero))
        out.append(("72001", "Adjuntas", "Puerto Rico", pr_v))
        return out

    for metric, filename in (("cases", "jhu_confirmed_counties.csv"),
                             ("deaths", "jhu_deaths_counties.csv")):
        with open(OUT / filename, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            header = JHU_META + (["Population"] if metric == "deaths" else []) + jhu_date_cols()
            w.writerow(header)
            for fips, name, state, values in rows(metric):
                uid = f"840{fips}" if fips else "84070015"
                meta = [uid, "US", "USA", "840", fips, name, state, "US",
                        "0.0", "0.0", f"{name}, {state}, US"]
                if metric == "deaths":
                    meta.append("100000")
                w.writerow(meta + [int(v) for v in values])


def write_usafacts_counties(counties):
    postal = {"New York": "NY", "Utah": "UT", "Texas": "TX", "Washington": "WA",
              "Georgia": "GA"}
    state_fips = {"New York": "36", "Utah": "49", "Texas": "48", "Washington": "53",
                  "Georgia": "13"}
    westchester_deaths = plant_od_violation(
        jitter_cumulative(counties["36119"]["deaths"], seed=61, scale=0.004),
        dt.date(2020, 6, 10), 3.0)
    for metric, filename in (("cases", "usafacts_confirmed_counties.csv"),
                             ("deaths", "usafacts_deaths_counties.csv")):
        with open(OUT / filename, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["countyFIPS", "County Name", "State", "StateFIPS",
                        *[d.isoformat() for d in DATES]])
            for fips in sorted(k for k in counties if k != "GA_UNALLOC"):
                c = counties[fips]
                values = jitter_cumulative(c[metric], seed=71 + int(fips[-2:]), scale=0.006)
                if fips == "36119" and metric == "deaths":
                    values = westchester_deaths
                if fips == "53033" and metric == "cases":
                    # King County's final week revised upward: ranking fixture
                    values = values.copy()
                    values[-7:] = values[-7:] * 1.5
                w.writerow([str(int(fips)), f"{c['name']} County", postal[c["state"]],
                            state_fips[c["state"]], *[int(v) for v in values]])
            ga = counties["GA_UNALLOC"]
            w.writerow(["0", "Statewide Unallocated", "GA", "13",
                        *[int(v) for v in ga[metric]]])


def write_jhu_10county(counties):
    """Plain 10-county excerpt for the independent column-sum oracle."""
    chosen = ["36005", "36047", "36061", "36081", "36085", "36119", "48185",
              "53033", "53061", "13121"]
    with open(OUT / "jhu_10county.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(JHU_META + jhu_date_cols())
        for fips in chosen:
            c = counties[fips]
            w.writerow([f"840{fips}", "US", "USA", "840", fips, c["name"], c["state"],
                        "US", "0.0", "0.0", f"{c['name']}, {c['state']}, US",
                        *[int(v) for v in c["cases"]]])


def write_national(states):
    """National file with the documented weekday-peak story."""
    infections = piecewise_counts(26000.0, 0.0015, 0.012, dt.date(2020, 6, 15),
                                  INFECT_WD_EARLY, seed=7001,
                                  late_multipliers=INFECT_WD_LATE)
    deaths = piecewise_counts(1700.0, -0.004, 0.0, None, DEATH_WD, seed=7002)
    cases_cum = cumulative(infections)
    deaths_cum = cumulative(deaths)
    with open(OUT / "nyt_national.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "cases", "deaths"])
        for date in DATES:
            i = day_index(date)
            w.writerow([date.isoformat(), int(cases_cum[i]), int(deaths_cum[i])])


def write_factors(counties):
    local = np.random.default_rng(8001)
    with open(OUT / "factors_demo.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ID", "County", "State", "Pop_log", "Old_PCT", "TBed"])
        for fips in sorted(k for k in counties if k != "GA_UNALLOC"):
            if fips == "53033":
                continue  # left out on purpose: exercises the unmatched list
            c = counties[fips]
            w.writerow([fips, c["name"], c["state"],
                        round(float(local.uniform(9, 14)), 3),
                        round(float(local.uniform(8, 25)), 2),
                        round(float(local.uniform(1.2, 4.5)), 2)])


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    states = build_state_series()
    counties = build_county_series()
    write_nyt_states(states)
    write_atlantic_states(states)
    write_jhu_states(states, "cases", "jhu_confirmed_states.csv", seed=11)
    write_jhu_states(states, "deaths", "jhu_deaths_states.csv", seed=13)
    write_nyt_counties(counties)
    write_jhu_counties(counties)
    write_usafacts_counties(counties)
    write_jhu_10county(counties)
    write_national(states)
    write_factors(counties)
    print(f"fixtures written to {OUT}")


if __name__ == "__main__":
    main()
