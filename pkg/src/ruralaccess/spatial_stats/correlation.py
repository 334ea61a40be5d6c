"""Pearson correlation of indicators against covariates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats


class CorrelationUndefined(ValueError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    p_value: float
    n: int

    @property
    def stars(self) -> str:
        if self.p_value < 0.01:
            return "**"
        if self.p_value < 0.05:
            return "*"
        return ""

    def as_dict(self) -> dict:
        return {"r": self.r, "p_value": self.p_value, "n": self.n, "significance": self.stars}


def _pairs(x, y):
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("x and y must be 1-D and equally long")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("x and y must be finite")
    if a.size < 3:
        raise CorrelationUndefined(f"need at least 3 pairs, got {a.size}")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise CorrelationUndefined("zero variance")
    return a, b


def pearson_r(x, y) -> float:
    a, b = _pairs(x, y)
    da, db = a - a.mean(), b - b.mean()
    den = math.sqrt(float(da @ da) * float(db @ db))
    if den == 0.0:
        # spread too small to square without underflow
        raise CorrelationUndefined("zero variance")
    r = float(da @ db) / den
    return max(-1.0, min(1.0, r))


def pearson_raw_sums(x, y) -> float:
    """Computational form from raw sums; numerically weaker, kept as a cross-check."""
    a, b = _pairs(x, y)
    n = a.size
    sx, sy = a.sum(), b.sum()
    num = n * float(a @ b) - sx * sy
    den = math.sqrt(n * float(a @ a) - sx * sx) * math.sqrt(n * float(b @ b) - sy * sy)
    return float(num / den)


def pearson(x, y) -> CorrelationResult:
    """r with a two-sided p-value from t = r sqrt((n-2)/(1-r^2)) on n-2 df."""
    a, _ = _pairs(x, y)
    n = a.size
    r = pearson_r(x, y)
    if abs(r) == 1.0:
        p = 0.0
    else:
        t = r * math.sqrt((n - 2) / (1 - r * r))
        p = float(2 * stats.t.sf(abs(t), n - 2))
    return CorrelationResult(r, p, n)


def correlation_table(indicators: dict, covariates: dict) -> dict:
    """Pairwise Pearson between every indicator and covariate column.

    Both arguments map a name to a ``{region_code: value}`` dict. Only
    regions where both sides have a value take part. Cells that cannot be
    computed hold ``{"r": None, "reason": ...}``; having no region in
    common at all is an error.
    """
    ind_codes = set().union(*(v.keys() for v in indicators.values())) if indicators else set()
    cov_codes = set().union(*(v.keys() for v in covariates.values())) if covariates else set()
    if not ind_codes & cov_codes:
        unmatched = sorted(ind_codes ^ cov_codes)
        raise CorrelationUndefined(f"no joinable regions; unmatched codes: {', '.join(unmatched) or '(none)'}")
    table = {}
    for iname, ivals in indicators.items():
        row = {}
        for cname, cvals in covariates.items():
            codes = sorted(c for c in ivals if c in cvals and ivals[c] is not None and cvals[c] is not None)
            try:
                res = pearson([ivals[c] for c in codes], [cvals[c] for c in codes])
                row[cname] = res.as_dict()
            except CorrelationUndefined as exc:
                row[cname] = {"r": None, "p_value": None, "n": len(codes), "reason": exc.reason}
        table[iname] = row
    return table
