"""Spatial weights between regions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..geo_core import GeoPoint, Polygon, haversine_m


@dataclass(eq=False)
class WeightsMatrix:
    w: np.ndarray
    row_standardized: bool = False

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"weights must be square, got shape {w.shape}")
        if (w < 0).any():
            raise ValueError("weights must be non-negative")
        if np.any(np.diag(w) != 0):
            raise ValueError("weights diagonal must be zero")
        self.w = w

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @classmethod
    def from_dense(cls, w, row_standardize: bool = True) -> "WeightsMatrix":
        w = np.array(w, dtype=float)
        if row_standardize:
            sums = w.sum(axis=1, keepdims=True)
            w = np.divide(w, sums, out=np.zeros_like(w), where=sums > 0)
        return cls(w, row_standardize)

    def neighbors(self, i: int) -> list[int]:
        return np.flatnonzero(self.w[i]).tolist()


def build_knn_weights(centroids: Sequence[GeoPoint], k: int) -> WeightsMatrix:
    """Row-standardized k-nearest-neighbour weights by haversine distance.

    Equidistant candidates are taken in index order.
    """
    n = len(centroids)
    if k < 1 or n <= k:
        raise ValueError(f"need n > k >= 1, got n={n}, k={k}")
    lon = np.array([p.lon for p in centroids])
    lat = np.array([p.lat for p in centroids])
    if len({(a, b) for a, b in zip(lon, lat)}) != n:
        raise ValueError("duplicate centroids: k-nearest neighbours are ill-defined")
    d = haversine_m(lon[:, None], lat[:, None], lon[None, :], lat[None, :])
    np.fill_diagonal(d, np.inf)
    w = np.zeros((n, n))
    for i in range(n):
        nbrs = np.argsort(d[i], kind="stable")[:k]
        w[i, nbrs] = 1.0
    return WeightsMatrix.from_dense(w, row_standardize=True)


def lattice_weights(n_rows: int, n_cols: int, rook: bool = True, row_standardize: bool = True) -> WeightsMatrix:
    """Rook (or queen) contiguity on a regular grid, cells numbered row-major."""
    n = n_rows * n_cols
    w = np.zeros((n, n))
    steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if not rook:
        steps += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    for r in range(n_rows):
        for c in range(n_cols):
            for dr, dc in steps:
                rr, cc = r + dr, c + dc
                if 0 <= rr < n_rows and 0 <= cc < n_cols:
                    w[r * n_cols + c, rr * n_cols + cc] = 1.0
    return WeightsMatrix.from_dense(w, row_standardize)


def _edges(polys: Sequence[Polygon]) -> np.ndarray:
    parts = []
    for p in polys:
        for ring in p.rings:
            parts.append(np.hstack([ring[:-1], ring[1:]]))
    return np.vstack(parts)


def _orient(ax, ay, bx, by, cx, cy):
    return np.sign((bx - ax) * (cy - ay) - (by - ay) * (cx - ax))


def _on_seg(ax, ay, bx, by, px, py):
    return (
        (np.minimum(ax, bx) <= px) & (px <= np.maximum(ax, bx))
        & (np.minimum(ay, by) <= py) & (py <= np.maximum(ay, by))
    )


def _edges_touch(e1: np.ndarray, e2: np.ndarray) -> bool:
    """True when any edge of ``e1`` intersects or touches any edge of ``e2``."""
    a = e1[:, None, :]
    b = e2[None, :, :]
    ax, ay, bx, by = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    cx, cy, dx, dy = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    o1 = _orient(ax, ay, bx, by, cx, cy)
    o2 = _orient(ax, ay, bx, by, dx, dy)
    o3 = _orient(cx, cy, dx, dy, ax, ay)
    o4 = _orient(cx, cy, dx, dy, bx, by)
    proper = (o1 != o2) & (o3 != o4)
    touch = (
        ((o1 == 0) & _on_seg(ax, ay, bx, by, cx, cy))
        | ((o2 == 0) & _on_seg(ax, ay, bx, by, dx, dy))
        | ((o3 == 0) & _on_seg(cx, cy, dx, dy, ax, ay))
        | ((o4 == 0) & _on_seg(cx, cy, dx, dy, bx, by))
    )
    return bool((proper | touch).any())


def build_queen_weights(geometries: Sequence[Sequence[Polygon]], row_standardize: bool = True) -> WeightsMatrix:
    """Regions sharing at least one boundary point are neighbours.

    Regions without neighbours keep an all-zero row.
    """
    n = len(geometries)
    edges = [_edges(g) for g in geometries]
    boxes = np.array([
        (e[:, [0, 2]].min(), e[:, [1, 3]].min(), e[:, [0, 2]].max(), e[:, [1, 3]].max()) for e in edges
    ])
    w = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            bi, bj = boxes[i], boxes[j]
            if bi[0] > bj[2] or bj[0] > bi[2] or bi[1] > bj[3] or bj[1] > bi[3]:
                continue
            if _edges_touch(edges[i], edges[j]):
                w[i, j] = w[j, i] = 1.0
    return WeightsMatrix.from_dense(w, row_standardize)
