"""Readers for rasters, GeoJSON layers and covariate tables."""

from .covariates import KNOWN_INDICATORS, CovariateTable, canonical_indicator, load_covariates
from .errors import IngestError
from .raster import load_raster, read_ascii_grid, read_geotiff, write_ascii_grid
from .vector import (
    ALL_SEASON_HIGHWAY_TAGS,
    Feature,
    FeatureCollection,
    Region,
    RegionSet,
    RoadFilterReport,
    RoadNetwork,
    filter_all_season_roads,
    load_regions,
    load_vector,
    parse_feature_collection,
    regions_from_features,
)

__all__ = [
    "ALL_SEASON_HIGHWAY_TAGS",
    "CovariateTable",
    "Feature",
    "FeatureCollection",
    "IngestError",
    "KNOWN_INDICATORS",
    "Region",
    "RegionSet",
    "RoadFilterReport",
    "RoadNetwork",
    "canonical_indicator",
    "filter_all_season_roads",
    "load_covariates",
    "load_raster",
    "load_regions",
    "load_vector",
    "parse_feature_collection",
    "read_ascii_grid",
    "read_geotiff",
    "regions_from_features",
    "write_ascii_grid",
]
