"""GeoJSON features, road-class filtering and administrative regions."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from ..geo_core import GeoPoint, GeometryError, Polygon, Polyline, haversine_m
from .errors import IngestError

log = logging.getLogger(__name__)

# OSM highway classes that guarantee motor-vehicle access.  motorway and
# motorway_link are deliberately absent: highways and elevated roads are
# excluded as not reliably passable for rural residents.
ALL_SEASON_HIGHWAY_TAGS = frozenset({
    "trunk",
    "primary",
    "secondary",
    "tertiary",
    "unclassified",
    "residential",
    "living_street",
    "road",
    "trunk_link",
    "primary_link",
    "secondary_link",
    "tertiary_link",
})

_SUPPORTED_TYPES = ("LineString", "MultiLineString", "Polygon", "MultiPolygon")


@dataclass(frozen=True)
class Feature:
    geometries: tuple
    properties: dict

    @property
    def is_linear(self) -> bool:
        return isinstance(self.geometries[0], Polyline)


@dataclass
class FeatureCollection:
    features: list[Feature] = field(default_factory=list)

    def __len__(self):
        return len(self.features)


def _prop_str(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (dict, list)):
        return json.dumps(v, sort_keys=True)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _parse_geometry(geom: dict) -> tuple:
    gtype = geom.get("type")
    coords = geom.get("coordinates")
    if coords is None:
        raise ValueError("missing coordinates")
    if gtype == "LineString":
        return (Polyline.from_coords(coords),)
    if gtype == "MultiLineString":
        return tuple(Polyline.from_coords(part) for part in coords)
    if gtype == "Polygon":
        return (Polygon(coords[0], tuple(coords[1:])),)
    if gtype == "MultiPolygon":
        return tuple(Polygon(part[0], tuple(part[1:])) for part in coords)
    raise ValueError(f"unsupported geometry type {gtype!r}")


def parse_feature_collection(doc) -> FeatureCollection:
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise IngestError("GeoJSON root must be a FeatureCollection")
    raw = doc.get("features")
    if not isinstance(raw, list):
        raise IngestError("GeoJSON FeatureCollection has no 'features' array")
    out = []
    for i, feat in enumerate(raw):
        geom = feat.get("geometry") if isinstance(feat, dict) else None
        if not isinstance(geom, dict):
            raise IngestError(f"missing geometry at feature {i}")
        if geom.get("type") not in _SUPPORTED_TYPES:
            raise IngestError(f"unsupported geometry at feature {i}: {geom.get('type')!r}")
        try:
            geoms = _parse_geometry(geom)
        except (ValueError, TypeError, IndexError) as exc:
            raise IngestError(f"invalid geometry at feature {i}: {exc}") from None
        if not geoms:
            raise IngestError(f"empty geometry at feature {i}")
        props = feat.get("properties") or {}
        out.append(Feature(geoms, {str(k): _prop_str(v) for k, v in props.items()}))
    return FeatureCollection(out)


def load_vector(path) -> FeatureCollection:
    path = Path(path)
    if not path.exists():
        raise IngestError(f"vector file not found: {path}", path=str(path))
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise IngestError(f"malformed JSON: {exc}", path=str(path)) from None
    try:
        return parse_feature_collection(doc)
    except IngestError as exc:
        exc.path = str(path)
        raise


# ---------------------------------------------------------------------------
# Roads
# ---------------------------------------------------------------------------


@dataclass
class RoadFilterReport:
    kept: Counter = field(default_factory=Counter)
    dropped: Counter = field(default_factory=Counter)
    missing_tag: int = 0

    @property
    def n_kept(self) -> int:
        return sum(self.kept.values())

    @property
    def n_dropped(self) -> int:
        return sum(self.dropped.values())

    def as_dict(self) -> dict:
        return {
            "kept": dict(sorted(self.kept.items())),
            "dropped": dict(sorted(self.dropped.items())),
            "missing_highway_tag": self.missing_tag,
        }


@dataclass(eq=False)
class RoadNetwork:
    """Road segments as parallel coordinate arrays plus the highway class."""

    lon0: np.ndarray
    lat0: np.ndarray
    lon1: np.ndarray
    lat1: np.ndarray
    classes: np.ndarray
    source_feature_count: int = 0
    report: RoadFilterReport = field(default_factory=RoadFilterReport)

    def __post_init__(self):
        for name in ("lon0", "lat0", "lon1", "lat1"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=float))
        self.classes = np.asarray(self.classes, dtype=object)
        zero = (self.lon0 == self.lon1) & (self.lat0 == self.lat1)
        if zero.any():
            raise GeometryError(f"zero-length road segment at index {int(np.argmax(zero))}")

    def __len__(self):
        return self.lon0.size

    @property
    def is_empty(self) -> bool:
        return self.lon0.size == 0

    @property
    def segments(self) -> list[tuple[GeoPoint, GeoPoint, str]]:
        return [
            (GeoPoint(a, b), GeoPoint(c, d), cls)
            for a, b, c, d, cls in zip(self.lon0, self.lat0, self.lon1, self.lat1, self.classes)
        ]

    @classmethod
    def from_polylines(cls, lines: Iterable[tuple[Polyline, str]], **kwargs) -> "RoadNetwork":
        parts = []
        labels = []
        for line, label in lines:
            a = line.array
            parts.append(np.hstack([a[:-1], a[1:]]))
            labels.extend([label] * (len(a) - 1))
        arr = np.vstack(parts) if parts else np.empty((0, 4))
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], np.array(labels, dtype=object), **kwargs)

    def subset(self, keep: np.ndarray) -> "RoadNetwork":
        return RoadNetwork(
            self.lon0[keep], self.lat0[keep], self.lon1[keep], self.lat1[keep],
            self.classes[keep], self.source_feature_count, self.report,
        )

    def total_length_m(self) -> float:
        return float(haversine_m(self.lon0, self.lat0, self.lon1, self.lat1).sum())


def filter_all_season_roads(fc: FeatureCollection, accepted=ALL_SEASON_HIGHWAY_TAGS) -> RoadNetwork:
    """Keep features whose ``highway`` tag is in ``accepted`` and explode them.

    Features without a ``highway`` property are skipped and counted.  Every
    other class, and any non-linear feature, is dropped and counted by class.
    """
    accepted = frozenset(accepted)
    if {"motorway", "motorway_link"} & accepted:
        log.warning("accepted highway classes include motorways, which the RAI definition excludes")
    report = RoadFilterReport()
    kept_lines = []
    for feat in fc.features:
        hw = feat.properties.get("highway", "")
        if not hw:
            report.missing_tag += 1
        elif hw in accepted and feat.is_linear:
            report.kept[hw] += 1
            kept_lines.extend((line, hw) for line in feat.geometries)
        else:
            report.dropped[hw] += 1
    network = RoadNetwork.from_polylines(kept_lines, source_feature_count=len(fc), report=report)
    if network.is_empty:
        log.warning("road filter kept no segments; proximity analysis will refuse this network")
    return network


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    code: str
    name: str
    polygons: tuple[Polygon, ...]

    def centroid(self) -> GeoPoint:
        """Area-weighted planar centroid over all parts."""
        parts = [p.centroid() for p in self.polygons]
        area = sum(abs(a) for _, _, a in parts)
        if area == 0:
            lon = sum(x for x, _, _ in parts) / len(parts)
            lat = sum(y for _, y, _ in parts) / len(parts)
        else:
            lon = sum(x * abs(a) for x, _, a in parts) / area
            lat = sum(y * abs(a) for _, y, a in parts) / area
        return GeoPoint(lon, lat)


@dataclass
class RegionSet:
    regions: list[Region]

    def __post_init__(self):
        seen = set()
        for r in self.regions:
            if r.code in seen:
                raise IngestError(f"duplicate region code {r.code!r}")
            if not r.polygons:
                raise IngestError(f"region {r.code!r} has no polygons")
            seen.add(r.code)

    def __len__(self):
        return len(self.regions)

    def __iter__(self):
        return iter(self.regions)

    @property
    def codes(self) -> list[str]:
        return [r.code for r in self.regions]

    def sorted(self) -> list[Region]:
        return sorted(self.regions, key=lambda r: r.code)

    def by_code(self) -> dict[str, Region]:
        return {r.code: r for r in self.regions}


def regions_from_features(fc: FeatureCollection, code_field="region_code", name_field="name") -> RegionSet:
    regions = []
    for i, feat in enumerate(fc.features):
        if feat.is_linear:
            raise IngestError(f"region feature {i} is not a polygon")
        code = feat.properties.get(code_field, "")
        if not code:
            raise IngestError(f"region feature {i} lacks a '{code_field}' property")
        regions.append(Region(code, feat.properties.get(name_field, code), feat.geometries))
    if not regions:
        raise IngestError("region layer contains no features")
    return RegionSet(regions)


def load_regions(path, code_field="region_code", name_field="name") -> RegionSet:
    fc = load_vector(path)
    try:
        return regions_from_features(fc, code_field, name_field)
    except IngestError as exc:
        exc.path = str(path)
        raise
