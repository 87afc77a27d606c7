"""Geographic normalization rules: merges, exclusions, and name aliases.

Different sources carve the map differently (New York City boroughs,
Utah's multi-county health districts, territory coverage).  A rule set
makes panels comparable: merge rules sum member counties into a pseudo
location, exclusion rules drop locations, and the alias table resolves
fips-less county names at parse time.  Pseudo locations use unused codes
with the real state prefix, so key invariants keep holding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError
from ..model import (
    ISLAND_TERRITORY_FIPS, STATE_FIPS, CumulativeSeries, Level, Panel, SeriesKey,
)


@dataclass(frozen=True)
class MergeRule:
    target_fips: str
    target_name: str
    members: tuple[str, ...]


@dataclass
class GeoRuleSet:
    merges: list[MergeRule] = field(default_factory=list)
    exclusions: list[str] = field(default_factory=list)  # fips, state prefix, or name pattern
    alias: dict[str, str] = field(default_factory=dict)  # county name -> fips

    def __post_init__(self):
        seen: dict[str, str] = {}
        for rule in self.merges:
            self._check_fips(rule.target_fips)
            for member in rule.members:
                self._check_fips(member)
                if member in seen:
                    raise DomainError(
                        f"fips {member} appears in merge rules {seen[member]!r} "
                        f"and {rule.target_name!r}")
                seen[member] = rule.target_name
        for name, fips in self.alias.items():
            self._check_fips(fips)

    @staticmethod
    def _check_fips(fips: str) -> None:
        if len(fips) != 5 or not fips.isdigit() or fips[:2] not in STATE_FIPS:
            raise DomainError(f"invalid fips in rule set: {fips!r}")

    def resolve_alias(self, name: str) -> str | None:
        return self.alias.get(name.strip())

    def is_excluded(self, key: SeriesKey) -> bool:
        for pattern in self.exclusions:
            if pattern.isdigit():
                if key.fips and (key.fips == pattern or key.fips.startswith(pattern)):
                    return True
            else:
                hay = f"{key.county_name or ''}|{key.state_name or ''}".lower()
                if pattern.lower() in hay:
                    return True
        return False


UTAH_DISTRICTS = {
    "Bear River": ("49901", ("49003", "49005", "49033")),
    "TriCounty": ("49902", ("49009", "49013", "49047")),
    "Central Utah": ("49903", ("49023", "49027", "49031", "49039", "49041", "49055")),
    "Southeast Utah": ("49904", ("49007", "49015", "49019")),
    "Southwest Utah": ("49905", ("49001", "49017", "49021", "49025", "49053")),
    "Weber-Morgan": ("49906", ("49029", "49057")),
}

NYC_FIPS = "36999"
NYC_BOROUGHS = ("36005", "36047", "36061", "36081", "36085")


def default_geo_rules() -> GeoRuleSet:
    merges = [MergeRule(NYC_FIPS, "New York City", NYC_BOROUGHS)]
    alias = {"New York City": NYC_FIPS}
    for name, (fips, members) in UTAH_DISTRICTS.items():
        merges.append(MergeRule(fips, name, members))
        alias[name] = fips
    return GeoRuleSet(
        merges=merges,
        exclusions=sorted(ISLAND_TERRITORY_FIPS),
        alias=alias,
    )


@dataclass
class NormalizationReport:
    merges_applied: dict[str, list[str]] = field(default_factory=dict)
    merge_members_missing: dict[str, list[str]] = field(default_factory=dict)
    excluded: list[str] = field(default_factory=list)
    total_before: float = 0.0
    total_after: float = 0.0
    excluded_total: float = 0.0


def normalize_geography(panel: Panel, rules: GeoRuleSet) -> tuple[Panel, NormalizationReport]:
    """Apply merges then exclusions; panel-wide totals are conserved up to
    the mass excluded (accounted separately in the report)."""
    report = NormalizationReport()
    report.total_before = float(panel.total()[-1]) if len(panel) else 0.0
    series = dict(panel.series)

    if panel.level == Level.COUNTY:
        for rule in rules.merges:
            member_keys = [k for k in series if k.fips in rule.members]
            target_key = SeriesKey(Level.COUNTY, fips=rule.target_fips,
                                   county_name=rule.target_name)
            present = [k.fips for k in member_keys]
            missing = sorted(set(rule.members) - set(present))
            existing = series.get(target_key)
            if not member_keys and existing is None:
                continue
            total = np.zeros(panel.n_days())
            if existing is not None:
                total += existing.values
            for k in member_keys:
                total += series.pop(k).values
            series[target_key] = CumulativeSeries(
                target_key, panel.metric, panel.source, panel.start_date, total)
            report.merges_applied[rule.target_name] = sorted(present)
            if missing:
                report.merge_members_missing[rule.target_name] = missing

    for key in sorted(series):
        if rules.is_excluded(key):
            s = series.pop(key)
            report.excluded.append(str(key))
            report.excluded_total += float(s.values[-1])

    out = Panel(panel.source, panel.metric, panel.level, panel.start_date)
    for key in sorted(series):
        out.add(series[key])
    report.total_after = float(out.total()[-1]) if len(out) else 0.0
    return out, report
