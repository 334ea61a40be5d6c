"""Coordinates, geometry containers and distance primitives.

All coordinates are WGS84 longitude/latitude in degrees.  Distances are
great-circle meters on a sphere of radius ``EARTH_RADIUS_M``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

EARTH_RADIUS_M = 6_371_000.0


class GeometryError(ValueError):
    """Raised for geometry that violates its construction invariants."""


@dataclass(frozen=True, slots=True)
class GeoPoint:
    lon: float
    lat: float

    def __post_init__(self):
        lon, lat = float(self.lon), float(self.lat)
        if not (math.isfinite(lon) and math.isfinite(lat)):
            raise GeometryError(f"non-finite coordinate ({self.lon}, {self.lat})")
        if not -180.0 <= lon <= 180.0:
            raise GeometryError(f"longitude {lon} outside [-180, 180]")
        if not -90.0 <= lat <= 90.0:
            raise GeometryError(f"latitude {lat} outside [-90, 90]")
        object.__setattr__(self, "lon", lon)
        object.__setattr__(self, "lat", lat)


def _as_points(coords) -> tuple[GeoPoint, ...]:
    return tuple(p if isinstance(p, GeoPoint) else GeoPoint(*p[:2]) for p in coords)


@dataclass(frozen=True)
class Polyline:
    vertices: tuple[GeoPoint, ...]

    def __post_init__(self):
        verts = _as_points(self.vertices)
        if len(verts) < 2:
            raise GeometryError("polyline needs at least 2 vertices")
        for a, b in zip(verts, verts[1:]):
            if a == b:
                raise GeometryError(f"consecutive duplicate vertex {a}")
        object.__setattr__(self, "vertices", verts)

    @classmethod
    def from_coords(cls, coords) -> "Polyline":
        """Build a polyline, dropping consecutive repeated vertices first."""
        pts = _as_points(coords)
        kept = [pts[0]] if pts else []
        for p in pts[1:]:
            if p != kept[-1]:
                kept.append(p)
        return cls(tuple(kept))

    @cached_property
    def array(self) -> np.ndarray:
        return np.array([(p.lon, p.lat) for p in self.vertices], dtype=float)

    def length_m(self) -> float:
        a = self.array
        return float(haversine_m(a[:-1, 0], a[:-1, 1], a[1:, 0], a[1:, 1]).sum())


def _closed_ring(coords) -> tuple[GeoPoint, ...]:
    ring = _as_points(coords)
    if ring and ring[0] != ring[-1]:
        ring = ring + (ring[0],)
    if len(ring) < 4:
        raise GeometryError("polygon ring needs at least 4 points (closed)")
    return ring


@dataclass(frozen=True)
class Polygon:
    """Exterior ring plus optional holes; rings are stored closed."""

    exterior: tuple[GeoPoint, ...]
    holes: tuple[tuple[GeoPoint, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "exterior", _closed_ring(self.exterior))
        object.__setattr__(self, "holes", tuple(_closed_ring(h) for h in self.holes))

    @cached_property
    def rings(self) -> list[np.ndarray]:
        rings = [self.exterior, *self.holes]
        return [np.array([(p.lon, p.lat) for p in r], dtype=float) for r in rings]

    @cached_property
    def bbox(self) -> tuple[float, float, float, float]:
        ext = self.rings[0]
        return (ext[:, 0].min(), ext[:, 1].min(), ext[:, 0].max(), ext[:, 1].max())

    def signed_area(self) -> float:
        """Planar area in square degrees, holes subtracted."""
        total = 0.0
        for k, r in enumerate(self.rings):
            a = 0.5 * float(np.sum(r[:-1, 0] * r[1:, 1] - r[1:, 0] * r[:-1, 1]))
            total += abs(a) if k == 0 else -abs(a)
        return total

    def centroid(self) -> tuple[float, float, float]:
        """Planar (lon, lat, area) centroid in degree space."""
        sx = sy = sa = 0.0
        for k, r in enumerate(self.rings):
            x0, y0, x1, y1 = r[:-1, 0], r[:-1, 1], r[1:, 0], r[1:, 1]
            cross = x0 * y1 - x1 * y0
            a = 0.5 * cross.sum()
            cx = ((x0 + x1) * cross).sum() / 6.0
            cy = ((y0 + y1) * cross).sum() / 6.0
            # exterior counts positive and holes negative, whatever the winding
            sign = (1.0 if a >= 0 else -1.0) * (1.0 if k == 0 else -1.0)
            sx += sign * cx
            sy += sign * cy
            sa += sign * a
        if sa == 0:
            ext = self.rings[0][:-1]
            return float(ext[:, 0].mean()), float(ext[:, 1].mean()), 0.0
        return sx / sa, sy / sa, sa


@dataclass(eq=False)
class RasterGrid:
    """Single-band grid anchored at the upper-left corner.

    Cell ``(r, c)`` has its center at
    ``(origin.lon + (c + 0.5) * cell_size, origin.lat - (r + 0.5) * cell_size)``.
    """

    origin: GeoPoint
    cell_size: float
    values: np.ndarray
    nodata: float | None = None

    def __post_init__(self):
        if not (self.cell_size > 0 and math.isfinite(self.cell_size)):
            raise GeometryError(f"cell_size must be positive, got {self.cell_size}")
        self.values = np.asarray(self.values)
        if self.values.ndim != 2 or 0 in self.values.shape:
            raise GeometryError(f"raster band must be a non-empty 2-D array, got shape {self.values.shape}")
        if self.values.dtype.kind == "f":
            bad = ~np.isfinite(self.values) & ~self._nodata_cells()
            if bad.any():
                r, c = np.argwhere(bad)[0]
                raise GeometryError(f"non-finite value at cell ({r}, {c}) that is not nodata")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def _nodata_cells(self) -> np.ndarray:
        if self.nodata is None:
            return np.zeros(self.values.shape, dtype=bool)
        if isinstance(self.nodata, float) and math.isnan(self.nodata):
            return np.isnan(self.values)
        return self.values == self.nodata

    def valid_mask(self) -> np.ndarray:
        return ~self._nodata_cells()

    def cell_center(self, row: int, col: int) -> GeoPoint:
        cs = self.cell_size
        return GeoPoint(self.origin.lon + (col + 0.5) * cs, self.origin.lat - (row + 0.5) * cs)

    def cell_index(self, lon: float, lat: float) -> tuple[int, int]:
        col = math.floor((lon - self.origin.lon) / self.cell_size)
        row = math.floor((self.origin.lat - lat) / self.cell_size)
        return row, col

    def center_lons(self) -> np.ndarray:
        return self.origin.lon + (np.arange(self.n_cols) + 0.5) * self.cell_size

    def center_lats(self) -> np.ndarray:
        return self.origin.lat - (np.arange(self.n_rows) + 0.5) * self.cell_size

    def bounds(self) -> tuple[float, float, float, float]:
        """(west, south, east, north)."""
        o, cs = self.origin, self.cell_size
        return (o.lon, o.lat - self.n_rows * cs, o.lon + self.n_cols * cs, o.lat)

    def sample_nearest(self, lons, lats) -> tuple[np.ndarray, np.ndarray]:
        """Nearest-cell lookup for arrays of coordinates.

        Returns ``(values, valid)`` as float64 and bool arrays; points outside
        the grid or on nodata cells are invalid (value set to NaN).
        """
        lons = np.asarray(lons, dtype=float)
        lats = np.asarray(lats, dtype=float)
        cols = np.floor((lons - self.origin.lon) / self.cell_size)
        rows = np.floor((self.origin.lat - lats) / self.cell_size)
        inside = (cols >= 0) & (cols < self.n_cols) & (rows >= 0) & (rows < self.n_rows)
        r = np.where(inside, rows, 0).astype(np.intp)
        c = np.where(inside, cols, 0).astype(np.intp)
        vals = self.values[r, c].astype(float)
        valid = inside & self.valid_mask()[r, c]
        return np.where(valid, vals, np.nan), valid

    def same_as(self, other: "RasterGrid") -> bool:
        """Exact equality of georeferencing, nodata and every cell value."""
        if self.origin != other.origin or self.cell_size != other.cell_size:
            return False
        if self.values.shape != other.values.shape:
            return False
        if (self.nodata is None) != (other.nodata is None):
            return False
        if self.nodata is not None and float(self.nodata) != float(other.nodata):
            if not (math.isnan(float(self.nodata)) and math.isnan(float(other.nodata))):
                return False
        return bool(np.array_equal(self.values, other.values, equal_nan=self.values.dtype.kind == "f"))


def haversine_m(lon1, lat1, lon2, lat2):
    """Vectorised great-circle distance in meters (numpy broadcasting)."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(np.subtract(lon2, lon1))
    a = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.minimum(a, 1.0)))


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points, in meters."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    h = (
        math.sin((phi2 - phi1) / 2) ** 2
        + math.cos(phi1) * math.cos(phi2) * math.sin(math.radians(b.lon - a.lon) / 2) ** 2
    )
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(min(h, 1.0)))


def segment_distances(plon, plat, lon0, lat0, lon1, lat1):
    """Point-to-segment distance for broadcastable arrays.

    The perpendicular foot is found in an equirectangular frame centred on
    each query point, then the distance to the foot is measured with
    haversine.  Returns ``(distance_m, foot_lon, foot_lat)``.
    """
    kx = np.cos(np.radians(plat))
    dx = (lon1 - lon0) * kx
    dy = lat1 - lat0
    ax = (plon - lon0) * kx
    ay = plat - lat0
    dd = dx * dx + dy * dy
    with np.errstate(invalid="ignore", divide="ignore"):
        t = (ax * dx + ay * dy) / dd
    t = np.clip(np.where(dd > 0, t, 0.0), 0.0, 1.0)
    flon = lon0 + t * (lon1 - lon0)
    flat = lat0 + t * (lat1 - lat0)
    d = haversine_m(plon, plat, flon, flat)
    # the planar foot can lose to an endpoint on long or high-latitude segments
    for elon, elat in ((lon0, lat0), (lon1, lat1)):
        de = haversine_m(plon, plat, elon, elat)
        closer = de < d
        d = np.where(closer, de, d)
        flon = np.where(closer, elon, flon)
        flat = np.where(closer, elat, flat)
    return d, flon, flat


def point_to_segment_distance(p: GeoPoint, s0: GeoPoint, s1: GeoPoint) -> tuple[float, GeoPoint]:
    """Distance in meters from ``p`` to segment ``s0``-``s1`` and the foot point."""
    if s0 == s1:
        raise GeometryError("degenerate segment: endpoints coincide")
    d, flon, flat = segment_distances(p.lon, p.lat, s0.lon, s0.lat, s1.lon, s1.lat)
    return float(d), GeoPoint(float(flon), float(flat))


def _on_edge(px, py, x0, y0, x1, y1):
    ex, ey = x1 - x0, y1 - y0
    cross = ex * (py - y0) - ey * (px - x0)
    scale = (np.abs(ex) + np.abs(ey)) * (np.abs(px - x0) + np.abs(py - y0))
    collinear = np.abs(cross) <= 1e-12 * scale
    within = (
        (px >= np.minimum(x0, x1)) & (px <= np.maximum(x0, x1))
        & (py >= np.minimum(y0, y1)) & (py <= np.maximum(y0, y1))
    )
    return collinear & within


def points_in_polygon(lons, lats, poly: Polygon) -> np.ndarray:
    """Vectorised even-odd test; points on any ring edge count as inside."""
    px = np.asarray(lons, dtype=float)
    py = np.asarray(lats, dtype=float)
    inside = np.zeros(np.broadcast(px, py).shape, dtype=bool)
    boundary = np.zeros_like(inside)
    for ring in poly.rings:
        for (x0, y0), (x1, y1) in zip(ring[:-1], ring[1:]):
            crosses = (y0 > py) != (y1 > py)
            if crosses.any():
                with np.errstate(invalid="ignore", divide="ignore"):
                    xint = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
                inside ^= crosses & (px < xint)
            boundary |= _on_edge(px, py, x0, y0, x1, y1)
    return inside | boundary


def point_in_polygon(p: GeoPoint, poly: Polygon) -> bool:
    west, south, east, north = poly.bbox
    if not (west <= p.lon <= east and south <= p.lat <= north):
        return False
    return bool(points_in_polygon(p.lon, p.lat, poly))


def polygons_bbox(polys: Sequence[Polygon]) -> tuple[float, float, float, float]:
    boxes = np.array([p.bbox for p in polys])
    return (boxes[:, 0].min(), boxes[:, 1].min(), boxes[:, 2].max(), boxes[:, 3].max())
