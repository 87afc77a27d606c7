"""Fetch, parse, normalize, and persist source feeds as canonical panels."""

from .canonical import read_canonical, write_canonical
from .factors import FactorJoin, join_factors
from .geography import (
    GeoRuleSet,
    MergeRule,
    NormalizationReport,
    default_geo_rules,
    normalize_geography,
)
from .parsers import ParseReport, parse_source
from .snapshot import RawSnapshot, cache_snapshot, fetch_source

__all__ = [
    "FactorJoin", "GeoRuleSet", "MergeRule", "NormalizationReport",
    "ParseReport", "RawSnapshot", "cache_snapshot", "default_geo_rules",
    "fetch_source", "join_factors", "normalize_geography", "parse_source",
    "read_canonical", "write_canonical",
]
