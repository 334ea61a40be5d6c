"""Per-cell nearest-road classification and per-region RAI / NSRP."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..geo_core import EARTH_RADIUS_M, RasterGrid, segment_distances
from ..ingest.vector import RoadNetwork
from .road_index import NoRoadsError, RoadIndex, expand_window
from .rural_mask import RuralMask

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD_M = 2000.0
DEFAULT_TILE = 64

_M_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0
# For separations up to ~10 km and |lat| <= 80 deg the local equirectangular
# distance stays within 0.5% of haversine.  Pairs are pruned in that frame
# with a 2% slack (against the threshold and against each cell's smallest
# equirectangular distance) before the exact haversine is evaluated.
_PREFILTER_SLACK = 1.02
_PREFILTER_MAX_LAT = 80.0
_PREFILTER_MAX_THRESHOLD_M = 10_000.0


@dataclass(frozen=True)
class RegionIndicators:
    code: str
    pop_rural: float
    pop_served: float
    rai: float | None
    nsrp: float

    @classmethod
    def from_sums(cls, code: str, rural: float, served: float) -> "RegionIndicators":
        rai = served / rural * 100.0 if rural > 0 else None
        return cls(code, rural, served, rai, rural - served)


@dataclass(eq=False)
class AccessResult:
    """Cell-level outputs plus the per-region aggregates.

    ``distance`` is the planimetric nearest-road distance in meters for rural
    cells; cells proven farther than the threshold without an exact search
    hold ``inf``.  ``corrected`` is the DEM-corrected distance (equal to
    ``distance`` where no DEM applies).  Non-rural cells are NaN.
    """

    indicators: list[RegionIndicators]
    served: np.ndarray
    distance: np.ndarray
    corrected: np.ndarray
    dem_skipped: int
    threshold_m: float


def apply_dem_correction(D: float, E_pop: float, E_road: float) -> float:
    """Slope-corrected distance ``sqrt(D**2 + (E_pop - E_road)**2)``.

    A missing or non-finite elevation leaves ``D`` unchanged.
    """
    if D < 0:
        raise ValueError("distance must be non-negative")
    if E_pop is None or E_road is None or not (math.isfinite(E_pop) and math.isfinite(E_road)):
        return D
    return math.hypot(D, E_pop - E_road)


class _TileJob:
    """Classifies the rural cells of one tile; safe to call from many threads."""

    def __init__(self, pop, mask, index, dem, threshold_m, use_index):
        self.values = pop.values
        self.origin = pop.origin
        self.cs = pop.cell_size
        self.lons = pop.center_lons()
        self.lats = pop.center_lats()
        self.coslat = np.cos(np.radians(self.lats))
        self.mask = mask
        self.index = index
        self.dem = dem
        self.threshold = float(threshold_m)
        self.use_index = use_index
        self.n_regions = len(mask.codes)

    def _window_pairs(self, r0, r1, c0, c1, rural, ids):
        """(row, col, segment) for rural cells inside each segment's
        threshold-expanded box, clipped to the tile."""
        L0, B0, L1, B1 = self.index.segment_arrays(ids)
        lat_lo = np.minimum(B0, B1)
        lat_hi = np.maximum(B0, B1)
        # one conservative half-width pair for the whole tile
        w, s, e, n = expand_window(0.0, self.lats[r1 - 1], 0.0, self.lats[r0], self.threshold)
        dlon, dlat = e, self.lats[r1 - 1] - s
        lon_lo = np.minimum(L0, L1) - dlon
        lon_hi = np.maximum(L0, L1) + dlon
        cs = self.cs
        # cell centers: lat_r = olat - (r + .5) cs, lon_c = olon + (c + .5) cs; pad one cell
        rlo = np.floor((self.origin.lat - (lat_hi + dlat)) / cs - 0.5).astype(np.int64) - 1
        rhi = np.ceil((self.origin.lat - (lat_lo - dlat)) / cs - 0.5).astype(np.int64) + 1
        clo = np.floor((lon_lo - self.origin.lon) / cs - 0.5).astype(np.int64) - 1
        chi = np.ceil((lon_hi - self.origin.lon) / cs - 0.5).astype(np.int64) + 1
        rlo = np.clip(rlo, r0, r1)
        rhi = np.clip(rhi + 1, r0, r1)
        clo = np.clip(clo, c0, c1)
        chi = np.clip(chi + 1, c0, c1)
        nr = rhi - rlo
        nc = chi - clo
        counts = nr * nc
        total = int(counts.sum())
        if total == 0:
            return (np.empty(0, np.int64),) * 3
        starts = np.cumsum(counts) - counts
        off = np.arange(total) - np.repeat(starts, counts)
        width = np.repeat(nc, counts)
        pr = np.repeat(rlo, counts) + off // width
        pc = np.repeat(clo, counts) + off % width
        pseg = np.repeat(ids, counts)
        keep = rural[pr - r0, pc - c0]
        return pr[keep], pc[keep], pseg[keep]

    def _all_pairs(self, r0, c0, rural, ids):
        rr, cc = np.nonzero(rural)
        m = ids.size
        return np.repeat(rr + r0, m), np.repeat(cc + c0, m), np.tile(ids, rr.size)

    def _nearest(self, r0, r1, c0, c1, rural):
        """Per-tile nearest road: (D, foot lon, foot lat) on the tile grid."""
        shape = (r1 - r0, c1 - c0)
        best_d = np.full(shape[0] * shape[1], np.inf)
        flon_out = np.full(best_d.size, np.nan)
        flat_out = np.full(best_d.size, np.nan)
        thr = self.threshold
        if self.use_index:
            win = expand_window(self.lons[c0], self.lats[r1 - 1], self.lons[c1 - 1], self.lats[r0], thr)
            ids = self.index.query(win)
            pr, pc, pseg = self._window_pairs(r0, r1, c0, c1, rural, ids)
        else:
            pr, pc, pseg = self._all_pairs(r0, c0, rural, np.arange(self.index.size))
        if pr.size:
            L0, B0, L1, B1 = self.index.segment_arrays()
            lon0, lat0, lon1, lat1 = L0[pseg], B0[pseg], L1[pseg], B1[pseg]
            plon, plat = self.lons[pc], self.lats[pr]
            prefilter = (
                self.use_index
                and thr <= _PREFILTER_MAX_THRESHOLD_M
                and max(abs(self.lats[r0]), abs(self.lats[r1 - 1])) <= _PREFILTER_MAX_LAT
            )
            cid = (pr - r0) * shape[1] + (pc - c0)
            if prefilter:
                kx = self.coslat[pr]
                dx = (lon1 - lon0) * kx
                dy = lat1 - lat0
                ax = (plon - lon0) * kx
                ay = plat - lat0
                t = np.clip((ax * dx + ay * dy) / (dx * dx + dy * dy), 0.0, 1.0)
                ex = ax - t * dx
                ey = ay - t * dy
                e2 = ex * ex + ey * ey
                min_e2 = np.full(best_d.size, np.inf)
                np.minimum.at(min_e2, cid, e2)
                lim2 = (thr * _PREFILTER_SLACK / _M_PER_DEG) ** 2
                keep = (e2 <= lim2) & (e2 <= min_e2[cid] * _PREFILTER_SLACK**2 + 1e-24)
                cid, pseg = cid[keep], pseg[keep]
                lon0, lat0, lon1, lat1 = lon0[keep], lat0[keep], lon1[keep], lat1[keep]
                plon, plat = plon[keep], plat[keep]
            h, flon, flat = segment_distances(plon, plat, lon0, lat0, lon1, lat1)
            np.minimum.at(best_d, cid, h)
            # ties go to the lowest segment id
            tied = np.flatnonzero(h == best_d[cid])
            best_seg = np.full(best_d.size, np.iinfo(np.int64).max)
            np.minimum.at(best_seg, cid[tied], pseg[tied])
            win_pair = tied[pseg[tied] == best_seg[cid[tied]]]
            flon_out[cid[win_pair]] = flon[win_pair]
            flat_out[cid[win_pair]] = flat[win_pair]
            if self.use_index:
                # cells with no pair inside the window are provably beyond threshold
                best_d[best_d > thr] = np.inf
        return best_d.reshape(shape), flon_out.reshape(shape), flat_out.reshape(shape)

    def __call__(self, tile):
        r0, r1, c0, c1 = tile
        rural = self.mask.rural[r0:r1, c0:c1]
        n = self.n_regions
        shape = rural.shape
        served = np.zeros(shape, dtype=bool)
        dist = np.full(shape, np.nan)
        corr = np.full(shape, np.nan)
        if not rural.any():
            return served, dist, corr, np.zeros(n), np.zeros(n), 0
        rr, cc = np.nonzero(rural)
        pop = self.values[r0 + rr, c0 + cc].astype(float)
        if (pop < 0).any():
            raise ValueError("population raster holds negative values in rural cells")
        reg = self.mask.region[r0 + rr, c0 + cc]

        if self.index is None:
            d = np.full(rr.size, np.inf)
            flon = flat = np.full(rr.size, np.nan)
        else:
            dg, fg_lon, fg_lat = self._nearest(r0, r1, c0, c1, rural)
            d, flon, flat = dg[rr, cc], fg_lon[rr, cc], fg_lat[rr, cc]

        dp = d.copy()
        skipped = 0
        if self.dem is not None:
            near = np.flatnonzero(d <= self.threshold)
            if near.size:
                e_pop, ok_pop = self.dem.sample_nearest(self.lons[c0 + cc[near]], self.lats[r0 + rr[near]])
                e_road, ok_road = self.dem.sample_nearest(flon[near], flat[near])
                ok = ok_pop & ok_road
                skipped = int(near.size - ok.sum())
                dp[near[ok]] = np.hypot(d[near[ok]], e_pop[ok] - e_road[ok])
        is_served = dp <= self.threshold
        served[rr, cc] = is_served
        dist[rr, cc] = d
        corr[rr, cc] = dp
        rural_sum = np.bincount(reg, weights=pop, minlength=n)
        served_sum = np.bincount(reg[is_served], weights=pop[is_served], minlength=n)
        return served, dist, corr, rural_sum, served_sum, skipped


def _tiles(n_rows, n_cols, size):
    for r0 in range(0, n_rows, size):
        for c0 in range(0, n_cols, size):
            yield (r0, min(r0 + size, n_rows), c0, min(c0 + size, n_cols))


def classify_cells(
    pop: RasterGrid,
    mask: RuralMask,
    index: RoadIndex | None,
    dem: RasterGrid | None = None,
    threshold_m: float = DEFAULT_THRESHOLD_M,
    workers: int = 1,
    tile_size: int = DEFAULT_TILE,
    use_index: bool = True,
    allow_empty_roads: bool = False,
) -> AccessResult:
    """Classify every rural cell as served / not served and aggregate per region.

    The grid is cut into fixed tiles independent of ``workers``; per-tile
    region sums are merged in tile order, so results do not depend on the
    worker count.  With ``use_index=False`` every segment is scanned for
    every cell (the reference path).
    """
    if mask.shape != (pop.n_rows, pop.n_cols):
        raise ValueError(f"mask shape {mask.shape} does not match population grid {(pop.n_rows, pop.n_cols)}")
    if not threshold_m > 0:
        raise ValueError("threshold_m must be positive")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if index is None or index.size == 0:
        if not allow_empty_roads:
            raise NoRoadsError("no all-season roads loaded")
        index = None

    job = _TileJob(pop, mask, index, dem, threshold_m, use_index)
    tiles = list(_tiles(pop.n_rows, pop.n_cols, tile_size))
    if workers == 1:
        parts = list(map(job, tiles))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, tiles))

    shape = (pop.n_rows, pop.n_cols)
    served = np.zeros(shape, dtype=bool)
    dist = np.full(shape, np.nan)
    corr = np.full(shape, np.nan)
    rural_tot = np.zeros(len(mask.codes))
    served_tot = np.zeros(len(mask.codes))
    skipped = 0
    for (r0, r1, c0, c1), (s, d, c, rs, ss, sk) in zip(tiles, parts):
        served[r0:r1, c0:c1] = s
        dist[r0:r1, c0:c1] = d
        corr[r0:r1, c0:c1] = c
        rural_tot += rs
        served_tot += ss
        skipped += sk
    if skipped:
        log.info("DEM correction skipped for %d cells with missing elevation", skipped)
    indicators = [
        RegionIndicators.from_sums(code, float(rural_tot[k]), float(served_tot[k]))
        for k, code in enumerate(mask.codes)
    ]
    return AccessResult(indicators, served, dist, corr, skipped, float(threshold_m))


def compute_indicators(
    pop: RasterGrid,
    mask: RuralMask,
    index: RoadIndex | None,
    dem: RasterGrid | None = None,
    threshold_m: float = DEFAULT_THRESHOLD_M,
    **kwargs,
) -> list[RegionIndicators]:
    """RAI and NSRP for every region, in ascending region-code order."""
    return classify_cells(pop, mask, index, dem, threshold_m, **kwargs).indicators


def clip_roads_to_rural(network: RoadNetwork, mask: RuralMask, pop: RasterGrid) -> RoadNetwork:
    """Keep only the parts of road segments that run through rural cells.

    Each segment is cut into pieces no longer than half a cell; pieces whose
    midpoint lies in a rural cell are kept and consecutive kept pieces are
    re-joined into one segment.
    """
    half = pop.cell_size / 2
    out = []
    labels = []
    for a, b, c, d, cls in zip(network.lon0, network.lat0, network.lon1, network.lat1, network.classes):
        n = max(1, math.ceil(max(abs(c - a), abs(d - b)) / half))
        t = np.linspace(0.0, 1.0, n + 1)
        mids = (t[:-1] + t[1:]) / 2
        rows = np.floor((pop.origin.lat - (b + mids * (d - b))) / pop.cell_size).astype(int)
        cols = np.floor(((a + mids * (c - a)) - pop.origin.lon) / pop.cell_size).astype(int)
        inside = (rows >= 0) & (rows < pop.n_rows) & (cols >= 0) & (cols < pop.n_cols)
        keep = np.zeros(n, dtype=bool)
        keep[inside] = mask.rural[rows[inside], cols[inside]]
        k = 0
        while k < n:
            if not keep[k]:
                k += 1
                continue
            start = k
            while k < n and keep[k]:
                k += 1
            t0, t1 = t[start], t[k]
            out.append((a + t0 * (c - a), b + t0 * (d - b), a + t1 * (c - a), b + t1 * (d - b)))
            labels.append(cls)
    arr = np.array(out, dtype=float).reshape(-1, 4)
    return RoadNetwork(
        arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], np.array(labels, dtype=object),
        network.source_feature_count, network.report,
    )
