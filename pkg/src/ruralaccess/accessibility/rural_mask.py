from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..geo_core import RasterGrid, points_in_polygon
from ..ingest.vector import RegionSet

log = logging.getLogger(__name__)


@dataclass(eq=False)
class RuralMask:
    """Per-cell region assignment and rural flag, aligned to a population grid.

    ``region`` holds an index into ``codes`` (ascending region codes) or -1
    for cells outside every region.
    """

    codes: list[str]
    region: np.ndarray
    urban: np.ndarray
    rural: np.ndarray

    @property
    def shape(self):
        return self.region.shape

    def region_code(self, row: int, col: int) -> str | None:
        k = int(self.region[row, col])
        return self.codes[k] if k >= 0 else None


def assign_regions(pop: RasterGrid, regions: RegionSet) -> tuple[list[str], np.ndarray]:
    """Region index of every cell center; ties go to the smallest code."""
    ordered = regions.sorted()
    lons = pop.center_lons()
    lats = pop.center_lats()
    out = np.full((pop.n_rows, pop.n_cols), -1, dtype=np.int32)
    for k, reg in enumerate(ordered):
        for poly in reg.polygons:
            west, south, east, north = poly.bbox
            cols = np.flatnonzero((lons >= west) & (lons <= east))
            rows = np.flatnonzero((lats >= south) & (lats <= north))
            if cols.size == 0 or rows.size == 0:
                continue
            r0, r1, c0, c1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
            sub = out[r0:r1, c0:c1]
            free = sub == -1
            if not free.any():
                continue
            gx, gy = np.meshgrid(lons[c0:c1], lats[r0:r1])
            hit = np.zeros_like(free)
            hit[free] = points_in_polygon(gx[free], gy[free], poly)
            sub[hit] = k
    return [r.code for r in ordered], out


def build_rural_mask(pop: RasterGrid, urban: RasterGrid, regions: RegionSet) -> RuralMask:
    """Rural cells are inside a region, off the urban extent and hold population data.

    The urban grid is sampled nearest-neighbour at each population cell
    center; a nonzero, non-nodata sample marks the cell urban.
    """
    if len(regions) == 0:
        raise ValueError("region set is empty")
    codes, region = assign_regions(pop, regions)
    gx, gy = np.meshgrid(pop.center_lons(), pop.center_lats())
    vals, valid = urban.sample_nearest(gx, gy)
    is_urban = valid & (vals != 0)
    rural = (region >= 0) & ~is_urban & pop.valid_mask()
    if not rural.any():
        log.warning("rural mask is empty: every populated cell is urban or outside all regions")
    return RuralMask(codes, region, is_urban, rural)
