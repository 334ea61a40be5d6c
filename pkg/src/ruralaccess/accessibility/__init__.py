"""Rural mask, road proximity and the RAI / NSRP aggregation."""

from .indicators import (
    DEFAULT_THRESHOLD_M,
    AccessResult,
    RegionIndicators,
    apply_dem_correction,
    classify_cells,
    clip_roads_to_rural,
    compute_indicators,
)
from .road_index import DistanceSample, NoRoadsError, RoadIndex, expand_window, nearest_road_distance
from .rural_mask import RuralMask, assign_regions, build_rural_mask

__all__ = [
    "DEFAULT_THRESHOLD_M",
    "AccessResult",
    "DistanceSample",
    "NoRoadsError",
    "RegionIndicators",
    "RoadIndex",
    "RuralMask",
    "apply_dem_correction",
    "assign_regions",
    "build_rural_mask",
    "classify_cells",
    "clip_roads_to_rural",
    "compute_indicators",
    "expand_window",
    "nearest_road_distance",
]
