"""Per-region socio-economic covariates from a CSV keyed by region code."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import IngestError

# canonical column id -> (dimension, display name, accepted header aliases)
KNOWN_INDICATORS = {
    "rural_population": ("Population", "Rural Population", ()),
    "rural_population_share": (
        "Population", "Proportion of Rural Population",
        ("rural_population_percent", "the_population_people_living_in_rural_areas"),
    ),
    "gdp_per_capita": ("Economy", "Per Capita GDP", ("per_capita_gdp",)),
    "gdp_per_employed_person": (
        "Economy", "Per Capita GDP of Employed Population",
        ("per_capita_gdp_of_employed_population",),
    ),
    "employment_rate": ("Employment", "Employment Rate", ()),
    "unemployment_rate": ("Employment", "Total unemployment rate", ("total_unemployment_rate",)),
    "poverty_rate": (
        "Poverty", "Proportion of Impoverished Population",
        ("proportion_of_impoverished_population",),
    ),
    "income_gini": (
        "Poverty", "Gini Coefficient (Income Level)",
        ("gini_coefficient_income_level", "gini_index"),
    ),
    "preschool_enrollment_rate": (
        "Education", "Pre-school Education Rate",
        ("pre_school_education_rate", "preschool_education_rate"),
    ),
    "adult_literacy_rate": ("Education", "Adult Literacy Rate", ()),
}


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


_ALIASES = {}
for _key, (_dim, _display, _extra) in KNOWN_INDICATORS.items():
    for _alias in (_key, _slug(_display), *_extra):
        _ALIASES[_alias] = _key


def canonical_indicator(column: str) -> str | None:
    """Map a CSV header to its known indicator id, or None."""
    return _ALIASES.get(_slug(column))


@dataclass
class CovariateTable:
    columns: list[str]
    rows: dict[str, dict[str, float | None]]

    def counts(self) -> dict[str, int]:
        return {c: sum(1 for r in self.rows.values() if r[c] is not None) for c in self.columns}

    def column(self, name: str) -> dict[str, float | None]:
        return {code: row[name] for code, row in self.rows.items()}

    def recognized(self) -> dict[str, str]:
        out = {}
        for c in self.columns:
            key = canonical_indicator(c)
            if key is not None:
                out[c] = key
        return out

    def dimension(self, column: str) -> str | None:
        key = canonical_indicator(column)
        return KNOWN_INDICATORS[key][0] if key else None


def load_covariates(path) -> CovariateTable:
    path = Path(path)
    if not path.exists():
        raise IngestError(f"covariate file not found: {path}", path=str(path))
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            records = list(reader)
    except (UnicodeDecodeError, csv.Error) as exc:
        raise IngestError(f"unreadable CSV: {exc}", path=str(path)) from None
    if not header:
        raise IngestError("covariate CSV has no header row", path=str(path))
    header = [h.strip() for h in header]
    if header[0] != "region_code":
        raise IngestError(f"first covariate column must be 'region_code', got {header[0]!r}", path=str(path))
    columns = header[1:]
    if len(set(columns)) != len(columns):
        raise IngestError("duplicate covariate column names", path=str(path))

    rows: dict[str, dict[str, float | None]] = {}
    for lineno, rec in enumerate(records, start=2):
        if not any(cell.strip() for cell in rec):
            continue
        if len(rec) != len(header):
            raise IngestError(f"row {lineno}: expected {len(header)} cells, found {len(rec)}", path=str(path))
        code = rec[0].strip()
        if not code:
            raise IngestError(f"row {lineno}: empty region_code", path=str(path))
        if code in rows:
            raise IngestError(f"row {lineno}: duplicate region code {code!r}", path=str(path))
        values: dict[str, float | None] = {}
        for col, cell in zip(columns, rec[1:]):
            cell = cell.strip()
            if not cell:
                values[col] = None
                continue
            try:
                v = float(cell)
            except ValueError:
                raise IngestError(
                    f"row {lineno}, column {col!r}: non-numeric value {cell!r}", path=str(path)
                ) from None
            if not math.isfinite(v):
                raise IngestError(f"row {lineno}, column {col!r}: non-finite value {cell!r}", path=str(path))
            values[col] = v
        rows[code] = values
    return CovariateTable(columns, rows)
