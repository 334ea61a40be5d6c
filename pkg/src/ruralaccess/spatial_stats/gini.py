"""Weighted Gini coefficient from a Lorenz curve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GINI_CLASSES = (
    (0.2, "highly equal"),
    (0.3, "relatively equal"),
    (0.4, "relatively reasonable"),
    (0.6, "large inequality"),
    (1.0, "extremely large inequality"),
)


class GiniUndefined(ValueError):
    pass


@dataclass(frozen=True)
class LorenzCurve:
    """Cumulative population share ``x`` against cumulative value share ``y``, both from 0 to 1."""

    x: np.ndarray
    y: np.ndarray


def _prepare(values, weights):
    v = np.asarray(values, dtype=float)
    w = np.full_like(v, 1.0 / max(v.size, 1)) if weights is None else np.asarray(weights, dtype=float)
    if v.shape != w.shape or v.ndim != 1:
        raise ValueError("values and weights must be 1-D and equally long")
    if v.size == 0:
        raise GiniUndefined("no units")
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
        raise ValueError("values and weights must be finite")
    if (v < 0).any() or (w < 0).any():
        raise ValueError("values and weights must be non-negative")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights are population shares and must sum to 1, got {w.sum()!r}")
    if v.sum() == 0:
        raise GiniUndefined("total value is zero")
    return v, w


def lorenz_curve(values, weights=None) -> LorenzCurve:
    """Units ordered by value per unit weight (ascending); zero-weight units go last."""
    v, w = _prepare(values, weights)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(w > 0, v / w, np.inf)
    order = np.lexsort((np.arange(v.size), ratio))
    x = np.concatenate([[0.0], np.cumsum(w[order]) / w.sum()])
    y = np.concatenate([[0.0], np.cumsum(v[order]) / v.sum()])
    x[-1] = y[-1] = 1.0
    return LorenzCurve(x, y)


def gini(values, weights=None) -> tuple[float, LorenzCurve]:
    """Gini coefficient and the Lorenz curve it came from.

    ``weights`` are population shares summing to 1 (equal shares when
    omitted). G = 1 - 2B where B is the trapezoid area under the curve.
    """
    c = lorenz_curve(values, weights)
    b = 0.5 * float(np.sum((c.y[:-1] + c.y[1:]) * np.diff(c.x)))
    return max(0.0, 1.0 - 2.0 * b), c


def gini_percent_axes(values, weights=None) -> float:
    """Same coefficient with both axes in percent: G = 1 - S / 5000."""
    c = lorenz_curve(values, weights)
    x, y = 100 * c.x, 100 * c.y
    s = 0.5 * float(np.sum((y[:-1] + y[1:]) * np.diff(x)))
    return max(0.0, 1.0 - s / 5000.0)


def classify_gini(g: float) -> str:
    if not 0.0 <= g <= 1.0:
        raise ValueError(f"Gini coefficient {g} outside [0, 1]")
    for upper, label in GINI_CLASSES:
        if g < upper:
            return label
    return GINI_CLASSES[-1][1]
