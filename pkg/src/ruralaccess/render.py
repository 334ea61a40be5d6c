"""Equirectangular SVG choropleth of a per-region value."""

from __future__ import annotations

import logging
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .geo_core import polygons_bbox
from .ingest import RegionSet

log = logging.getLogger(__name__)

N_CLASSES = 5
PALETTE = ("#f1eef6", "#bdc9e1", "#74a9cf", "#2b8cbe", "#045a8d")
NO_DATA_FILL = "url(#nodata)"
MAP_WIDTH = 800.0
LEGEND_HEIGHT = 30.0 * (N_CLASSES + 2)


def quantile_breaks(values, k: int = N_CLASSES) -> list[float]:
    """Inner class limits at the 1/k, 2/k, ... quantiles (linear interpolation)."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        return []
    return [float(q) for q in np.quantile(v, np.arange(1, k) / k)]


def classify(value: float, breaks) -> int:
    """Class index in ``0..len(breaks)``; a value equal to a limit falls in the lower class."""
    return int(np.searchsorted(np.asarray(breaks), value, side="left"))


def _fmt(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def _label(x: float) -> str:
    return format(x, ".4g")


def _ring_path(ring, west, north, scale) -> str:
    pts = [f"{_fmt((lon - west) * scale)},{_fmt((north - lat) * scale)}" for lon, lat in ring[:-1]]
    return "M" + " L".join(pts) + " Z"


def render_choropleth(regions: RegionSet, values: dict, title: str = "") -> str:
    """SVG text with one ``<path>`` per polygon, shaded by 5 quantile classes.

    ``values`` maps region code to a number or ``None``.  Regions with no
    value (or absent from ``values``) get a hatched fill.  Output is a pure
    function of the inputs.
    """
    regs = regions.sorted() if regions is not None else []
    polys = [p for r in regs for p in r.polygons]
    if not polys:
        raise ValueError("no region geometries to render")
    known = {r.code for r in regs}
    extra = sorted(set(values) - known)
    if extra:
        log.warning("indicator rows without region geometry: %s", ", ".join(extra))

    west, south, east, north = polygons_bbox(polys)
    span = max(east - west, north - south, 1e-9)
    scale = MAP_WIDTH / span
    width = MAP_WIDTH
    height = (north - south) * scale

    defined = {r.code: float(values[r.code]) for r in regs if values.get(r.code) is not None}
    breaks = quantile_breaks(list(defined.values()))
    members = [[] for _ in range(N_CLASSES)]
    undefined = []
    fills = {}
    for r in regs:
        if r.code in defined:
            k = classify(defined[r.code], breaks)
            members[k].append(r.code)
            fills[r.code] = PALETTE[k]
        else:
            undefined.append(r.code)
            fills[r.code] = NO_DATA_FILL

    total_h = height + LEGEND_HEIGHT + 20
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" height="{_fmt(total_h)}" '
        f'viewBox="0 0 {_fmt(width)} {_fmt(total_h)}">',
        "<defs>",
        '<pattern id="nodata" patternUnits="userSpaceOnUse" width="6" height="6" patternTransform="rotate(45)">',
        '<rect width="6" height="6" fill="#ffffff"/><line x1="0" y1="0" x2="0" y2="6" stroke="#888888" stroke-width="2"/>',
        "</pattern>",
        "</defs>",
    ]
    if title:
        out.append(f'<title>{escape(title)}</title>')
    out.append('<g id="regions" stroke="#333333" stroke-width="0.5" fill-rule="evenodd">')
    for r in regs:
        val = defined.get(r.code)
        dv = "NA" if val is None else repr(val)
        for poly in r.polygons:
            d = " ".join(_ring_path(ring, west, north, scale) for ring in poly.rings)
            out.append(
                f'<path data-code={quoteattr(r.code)} data-value="{dv}" fill="{fills[r.code]}" d="{d}"/>'
            )
    out.append("</g>")

    y0 = height + 20
    out.append(f'<g id="legend" font-family="sans-serif" font-size="12" transform="translate(10,{_fmt(y0)})">')
    if defined:
        limits = [min(defined.values())] + breaks + [max(defined.values())]
    else:
        limits = [0.0] * (N_CLASSES + 1)
    for k in range(N_CLASSES):
        lo, hi = limits[k], limits[k + 1]
        codes = " ".join(members[k])
        y = 30 * k
        out.append(
            f'<rect class="swatch" x="0" y="{y}" width="20" height="20" fill="{PALETTE[k]}" '
            f'data-codes={quoteattr(codes)}/>'
        )
        out.append(f'<text x="28" y="{y + 15}">{escape(_label(lo))} to {escape(_label(hi))}</text>')
    y = 30 * N_CLASSES
    out.append(
        f'<rect class="nodata" x="0" y="{y}" width="20" height="20" fill="{NO_DATA_FILL}" '
        f'data-codes={quoteattr(" ".join(undefined))}/>'
    )
    out.append(f'<text x="28" y="{y + 15}">undefined ({len(undefined)})</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
