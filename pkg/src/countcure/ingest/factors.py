"""County factor-table joins keyed on the fips ID column."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import DomainError, SchemaError
from ..model import Level, Panel


@dataclass
class FactorJoin:
    header: list[str]
    rows: list[list[str]]
    unmatched_fips: list[str] = field(default_factory=list)

    def write(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header)
            writer.writerows(self.rows)


def join_factors(panel: Panel, factor_csv) -> FactorJoin:
    """Left-join a factor table onto the panel's canonical rows by fips.

    Panel rows without a factor match keep empty factor cells and are
    listed in unmatched_fips; factor rows without a panel match are
    dropped.  A duplicated ID in the factor table is an error.
    """
    if panel.level != Level.COUNTY:
        raise DomainError("factor joins are defined for county panels")
    text = Path(factor_csv).read_text(encoding="utf-8-sig")
    reader = csv.reader(io.StringIO(text))
    try:
        factor_header = next(reader)
    except StopIteration:
        raise SchemaError("factor table is empty") from None
    factor_header = [h.strip() for h in factor_header]
    if "ID" not in factor_header:
        raise SchemaError("factor table needs an ID (fips) column")
    id_idx = factor_header.index("ID")
    factors: dict[str, list[str]] = {}
    for row in reader:
        if not row:
            continue
        fips = f"{int(float(row[id_idx])):05d}"
        if fips in factors:
            raise DomainError(f"duplicate fips {fips} in factor table")
        factors[fips] = [v for i, v in enumerate(row) if i != id_idx]
    factor_cols = [h for i, h in enumerate(factor_header) if i != id_idx]

    from .canonical import _date_columns, _format_value
    date_cols = _date_columns(panel.start_date, panel.n_days())
    header = ["ID", "County", "State", *date_cols, *factor_cols]
    rows = []
    unmatched = []
    for key in panel.sorted_keys():
        s = panel[key]
        base = [key.fips, key.county_name or "", key.state_name,
                *map(_format_value, s.values)]
        extra = factors.get(key.fips)
        if extra is None:
            unmatched.append(key.fips)
            extra = [""] * len(factor_cols)
        rows.append(base + extra)
    return FactorJoin(header=header, rows=rows, unmatched_fips=unmatched)
