"""Pairwise disagreement between sources for the same location.

For one location, the distance between two sources' cumulative vectors is
the norm of their difference, scaled by 1/T and by the across-source mean
of the final cumulative value (zero when that mean is zero).  Rankings of
the measure surface the locations where sources disagree most.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AlignmentError, DomainError
from .model import CumulativeSeries, Level, Metric, Panel, SeriesKey, SourceId


@dataclass(frozen=True)
class DissimilarityRecord:
    key: SeriesKey
    metric: Metric
    source_pair: tuple[SourceId, SourceId]
    d: float
    T: int
    mean_final: float

    def __post_init__(self):
        a, b = self.source_pair
        if a.value > b.value:
            object.__setattr__(self, "source_pair", (b, a))


def source_mean_final(series_by_source: dict[SourceId, CumulativeSeries]) -> float:
    """Across-source mean of the final cumulative value for one location."""
    if not series_by_source:
        raise DomainError("need at least one source")
    lengths = {len(s) for s in series_by_source.values()}
    if len(lengths) != 1:
        raise AlignmentError(f"misaligned series lengths {sorted(lengths)}")
    finals = [float(s.values[-1]) for s in series_by_source.values()]
    return sum(finals) / len(finals)


def dissimilarity(a: CumulativeSeries, b: CumulativeSeries, mean_final: float,
                  norm: str = "l2") -> float:
    """Scaled distance between two sources' series for one location."""
    if len(a) != len(b):
        raise AlignmentError(f"series lengths differ ({len(a)} vs {len(b)})")
    if a.key != b.key or a.metric != b.metric:
        raise AlignmentError("dissimilarity requires the same location and metric")
    if mean_final <= 0.0:
        return 0.0
    diff = a.values - b.values
    if norm == "l2":
        dist = float(np.linalg.norm(diff))
    elif norm == "l1":
        dist = float(np.sum(np.abs(diff)))
    else:
        raise DomainError(f"unknown norm {norm!r}")
    return dist / (len(a) * mean_final)


def _common_keys(panels: list[Panel]) -> list[SeriesKey]:
    keys = set(panels[0].series)
    for p in panels[1:]:
        keys &= set(p.series)
    return sorted(keys)


def _pairs(sources: list[SourceId]) -> list[tuple[SourceId, SourceId]]:
    ordered = sorted(sources, key=lambda s: s.value)
    return [(a, b) for i, a in enumerate(ordered) for b in ordered[i + 1:]]


def rank_dissimilar(panels: list[Panel], metric: Metric, top_n: int = 10,
                    norm: str = "l2") -> dict[tuple[SourceId, SourceId], list[DissimilarityRecord]]:
    """Top discrepancies per source pair, over keys present in all sources.

    Records are sorted by descending d, ties broken by key order.  The
    scaling mean uses every supplied source, not just the compared pair.
    """
    if len(panels) < 2:
        raise DomainError("ranking needs at least two sources")
    if any(p.metric != metric for p in panels):
        raise AlignmentError("panel metric mismatch")
    n_days = {p.n_days() for p in panels}
    starts = {p.start_date for p in panels}
    if len(n_days) != 1 or len(starts) != 1:
        raise AlignmentError("panels must be aligned before ranking (see align_panels)")
    keys = _common_keys(panels)
    by_source = {p.source: p for p in panels}
    out: dict[tuple[SourceId, SourceId], list[DissimilarityRecord]] = {}
    t_len = n_days.pop()
    for pair in _pairs(list(by_source)):
        records = []
        for key in keys:
            per_source = {s: by_source[s][key] for s in by_source}
            mean_final = source_mean_final(per_source)
            d = dissimilarity(per_source[pair[0]], per_source[pair[1]], mean_final, norm=norm)
            records.append(DissimilarityRecord(key, metric, pair, d, t_len, mean_final))
        records.sort(key=lambda r: (-r.d, r.key))
        out[pair] = records[:top_n] if top_n else records
    return out


def compare_report(panels: list[Panel], metric: Metric, path,
                   threshold: float = 0.5, norm: str = "l2") -> dict:
    """Write the per-location CSV and return a summary.

    One row per common key with every pairwise d plus the scaling mean;
    keys missing from any source go to the coverage list instead.
    """
    ranked = rank_dissimilar(panels, metric, top_n=0, norm=norm)
    pairs = sorted(ranked, key=lambda p: (p[0].value, p[1].value))
    keys = _common_keys(panels)
    by_key: dict[SeriesKey, dict] = {
        k: {"mean_final": None, "d": {}} for k in keys
    }
    for pair, records in ranked.items():
        for rec in records:
            by_key[rec.key]["mean_final"] = rec.mean_final
            by_key[rec.key]["d"][pair] = rec.d

    all_keys = set()
    for p in panels:
        all_keys |= set(p.series)
    uncovered = sorted(all_keys - set(keys))

    level = panels[0].level
    t_len = panels[0].n_days()
    pair_cols = [f"d_{a.value}_{b.value}" for a, b in pairs]
    header = ["level", "fips", "county", "state", "metric", "T", "mean_final"] + pair_cols
    exceed = 0
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for key in keys:
        info = by_key[key]
        ds = [info["d"][pair] for pair in pairs]
        if any(d > threshold for d in ds):
            exceed += 1
        writer.writerow([
            level.value,
            key.fips or "",
            key.county_name or "",
            key.state_name or ("US" if level == Level.NATIONAL else ""),
            metric.value,
            t_len,
            f"{info['mean_final']:.6f}",
            *(f"{d:.9f}" for d in ds),
        ])
    out = Path(path)
    tmp = out.with_name(out.name + ".tmp")
    tmp.write_text(buf.getvalue(), encoding="utf-8", newline="")
    os.replace(tmp, out)
    return {
        "keys_compared": len(keys),
        "keys_uncovered": [str(k) for k in uncovered],
        "threshold": threshold,
        "keys_exceeding_threshold": exceed,
        "pairs": [f"{a.value}|{b.value}" for a, b in pairs],
    }
