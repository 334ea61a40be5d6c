"""Packed bounding-box tree over road segments.

Leaves are ordered with Sort-Tile-Recursive packing; upper levels group
consecutive nodes, so every node's children occupy a contiguous slot range
and a query can descend level by level with array operations only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geo_core import EARTH_RADIUS_M, GeoPoint, segment_distances
from ..ingest.vector import RoadNetwork


class NoRoadsError(ValueError):
    pass


def expand_window(west, south, east, north, radius_m: float) -> tuple[float, float, float, float]:
    """Smallest lon/lat box guaranteed to hold every point within ``radius_m``
    of the box ``(west, south, east, north)``.
    """
    if not math.isfinite(radius_m):
        return (-180.0, -90.0, 180.0, 90.0)
    delta = radius_m / EARTH_RADIUS_M
    dlat = math.degrees(delta) * (1 + 1e-9) + 1e-12
    s, n = max(south - dlat, -90.0), min(north + dlat, 90.0)
    phi = math.radians(max(abs(s), abs(n)))
    if delta >= math.pi / 2 - phi:
        return (-180.0, s, 180.0, n)
    dlon = math.degrees(math.asin(math.sin(delta) / math.cos(phi))) * (1 + 1e-9) + 1e-12
    return (west - dlon, s, east + dlon, n)


@dataclass(frozen=True)
class DistanceSample:
    """Nearest-road distance for one location.

    ``D`` is the planimetric distance in meters, ``foot`` the nearest point on
    the road.  Elevations and the corrected distance are filled in only when
    a DEM is available.
    """

    D: float
    foot: GeoPoint | None
    segment: int = -1
    E_pop: float | None = None
    E_road: float | None = None
    D_prime: float | None = None


class RoadIndex:
    """Immutable spatial index over the segments of a :class:`RoadNetwork`."""

    def __init__(self, network: RoadNetwork, node_capacity: int = 16):
        if network.is_empty:
            raise NoRoadsError("no all-season roads loaded")
        if node_capacity < 2:
            raise ValueError("node_capacity must be at least 2")
        self.network = network
        self.capacity = node_capacity
        n = len(network)
        boxes = np.column_stack([
            np.minimum(network.lon0, network.lon1),
            np.minimum(network.lat0, network.lat1),
            np.maximum(network.lon0, network.lon1),
            np.maximum(network.lat0, network.lat1),
        ])
        self.boxes = boxes
        self.order = _str_order(boxes, node_capacity)
        levels = [boxes[self.order]]
        while len(levels[-1]) > 1:
            levels.append(_group_boxes(levels[-1], node_capacity))
        self._levels = levels
        self.size = n

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return tuple(float(v) for v in self._levels[-1][0])

    def query(self, window) -> np.ndarray:
        """Ids (ascending) of segments whose boxes intersect ``window``.

        ``window`` is ``(west, south, east, north)``; edges are inclusive.
        """
        w, s, e, n = window
        cap = self.capacity
        cand = np.arange(len(self._levels[-1]))
        for level in range(len(self._levels) - 1, -1, -1):
            boxes = self._levels[level]
            if level < len(self._levels) - 1:
                cand = (cand[:, None] * cap + np.arange(cap)).ravel()
                cand = cand[cand < len(boxes)]
            b = boxes[cand]
            hit = (b[:, 0] <= e) & (b[:, 2] >= w) & (b[:, 1] <= n) & (b[:, 3] >= s)
            cand = cand[hit]
            if cand.size == 0:
                return cand
        return np.sort(self.order[cand])

    def linear_query(self, window) -> np.ndarray:
        """Reference scan over every segment box."""
        w, s, e, n = window
        b = self.boxes
        hit = (b[:, 0] <= e) & (b[:, 2] >= w) & (b[:, 1] <= n) & (b[:, 3] >= s)
        return np.flatnonzero(hit)

    def segment_arrays(self, ids=None):
        net = self.network
        if ids is None:
            return net.lon0, net.lat0, net.lon1, net.lat1
        return net.lon0[ids], net.lat0[ids], net.lon1[ids], net.lat1[ids]

    def nearest(self, p: GeoPoint, initial_radius_m: float = 1000.0) -> DistanceSample:
        """Exact nearest segment by expanding-window search."""
        radius = initial_radius_m
        bw, bs, be, bn = self.bounds
        while True:
            win = expand_window(p.lon, p.lat, p.lon, p.lat, radius)
            covers_all = win[0] <= bw and win[1] <= bs and win[2] >= be and win[3] >= bn
            ids = self.query(win)
            if ids.size:
                d, flon, flat = segment_distances(p.lon, p.lat, *self.segment_arrays(ids))
                k = int(np.argmin(d))
                if d[k] <= radius or covers_all:
                    return DistanceSample(float(d[k]), GeoPoint(float(flon[k]), float(flat[k])), int(ids[k]))
            elif covers_all:
                raise AssertionError("index bounds cover no segments")
            radius *= 4.0
            if radius > math.pi * EARTH_RADIUS_M:
                radius = math.inf


def nearest_road_distance(cell_center: GeoPoint, index: RoadIndex | None) -> DistanceSample:
    """Distance from a cell center to the closest indexed road segment."""
    if index is None or index.size == 0:
        raise NoRoadsError("no all-season roads loaded")
    return index.nearest(cell_center)


def _str_order(boxes: np.ndarray, cap: int) -> np.ndarray:
    n = len(boxes)
    cx = (boxes[:, 0] + boxes[:, 2]) / 2
    cy = (boxes[:, 1] + boxes[:, 3]) / 2
    n_leaves = math.ceil(n / cap)
    n_slices = max(1, math.ceil(math.sqrt(n_leaves)))
    per_slice = n_slices * cap
    by_x = np.lexsort((np.arange(n), cx))
    out = []
    for start in range(0, n, per_slice):
        chunk = by_x[start:start + per_slice]
        out.append(chunk[np.lexsort((chunk, cy[chunk]))])
    return np.concatenate(out)


def _group_boxes(boxes: np.ndarray, cap: int) -> np.ndarray:
    n = len(boxes)
    groups = math.ceil(n / cap)
    pad = groups * cap - n
    if pad:
        filler = np.array([[np.inf, np.inf, -np.inf, -np.inf]])
        boxes = np.vstack([boxes, np.repeat(filler, pad, axis=0)])
    g = boxes.reshape(groups, cap, 4)
    return np.column_stack([
        g[:, :, 0].min(axis=1),
        g[:, :, 1].min(axis=1),
        g[:, :, 2].max(axis=1),
        g[:, :, 3].max(axis=1),
    ])
