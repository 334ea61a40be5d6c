"""Run configuration: a TOML file plus command-line overrides."""

from __future__ import annotations

import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .accessibility import DEFAULT_THRESHOLD_M
from .ingest import ALL_SEASON_HIGHWAY_TAGS
from .spatial_stats import parse_mode

PATH_KEYS = ("population", "urban", "roads", "regions", "dem", "covariates")
REQUIRED_PATHS = ("population", "urban", "roads", "regions")
GINI_WEIGHTINGS = ("rural_population", "equal")
DEFAULT_KNN = 8


class ConfigError(ValueError):
    pass


def parse_weights(spec: str) -> tuple[str, int]:
    """``"queen"`` or ``"knn:<k>"``."""
    s = spec.strip().lower()
    if s == "queen":
        return "queen", 0
    if s == "knn":
        return "knn", DEFAULT_KNN
    if s.startswith("knn:"):
        try:
            k = int(s[4:])
        except ValueError:
            raise ConfigError(f"bad weights spec {spec!r}: k must be an integer") from None
        if k < 1:
            raise ConfigError(f"bad weights spec {spec!r}: k must be >= 1")
        return "knn", k
    raise ConfigError(f"bad weights spec {spec!r}: expected knn:<k> or queen")


@dataclass(frozen=True)
class PipelineConfig:
    population: Path | None = None
    urban: Path | None = None
    roads: Path | None = None
    regions: Path | None = None
    dem: Path | None = None
    covariates: Path | None = None
    threshold_m: float = DEFAULT_THRESHOLD_M
    highway_tags: tuple[str, ...] = tuple(sorted(ALL_SEASON_HIGHWAY_TAGS))
    weights: str = f"knn:{DEFAULT_KNN}"
    moran: str = "normality"
    gini_weighting: str = "rural_population"
    clip_roads_to_rural: bool = False
    region_code_field: str = "region_code"
    region_name_field: str = "name"
    output_dir: Path = Path("out")
    workers: int = 1
    seed: int = 0

    def validate(self, need_paths=REQUIRED_PATHS) -> "PipelineConfig":
        missing = [k for k in need_paths if getattr(self, k) is None]
        if missing:
            raise ConfigError(f"missing required path(s): {', '.join(missing)}")
        if not self.threshold_m > 0:
            raise ConfigError(f"threshold_m must be > 0, got {self.threshold_m}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if not self.highway_tags:
            raise ConfigError("highway_tags is empty")
        parse_weights(self.weights)
        try:
            parse_mode(self.moran)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.gini_weighting not in GINI_WEIGHTINGS:
            raise ConfigError(f"gini_weighting must be one of {', '.join(GINI_WEIGHTINGS)}")
        return self

    def echo(self) -> dict:
        """Settings that shape the results; worker count and output location are left out."""
        out = {}
        for f in fields(self):
            if f.name in ("workers", "output_dir"):
                continue
            v = getattr(self, f.name)
            if isinstance(v, Path):
                v = v.as_posix()
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


_SCALARS = {
    "threshold_m": float,
    "weights": str,
    "moran": str,
    "gini_weighting": str,
    "clip_roads_to_rural": bool,
    "region_code_field": str,
    "region_name_field": str,
    "workers": int,
    "seed": int,
}


def _coerce(key, value, kind):
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false")
        return value
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind is str and isinstance(value, str):
        return value
    raise ConfigError(f"{key} has the wrong type: {value!r}")


def load_config(path) -> PipelineConfig:
    """Read a config file; relative paths resolve against the file's directory.

    Paths may sit at top level or in a ``[paths]`` table.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from None
    return config_from_mapping(doc, base=path.parent)


def config_from_mapping(doc: dict, base: Path = Path(".")) -> PipelineConfig:
    doc = dict(doc)
    paths = doc.pop("paths", {})
    if not isinstance(paths, dict):
        raise ConfigError("[paths] must be a table")
    kw = {}
    for key in PATH_KEYS:
        v = paths.get(key, doc.pop(key, None))
        if v is not None:
            if not isinstance(v, str):
                raise ConfigError(f"path {key} must be a string")
            kw[key] = base / v
    unknown_paths = set(paths) - set(PATH_KEYS)
    if unknown_paths:
        raise ConfigError(f"unknown path key(s): {', '.join(sorted(unknown_paths))}")
    if "output_dir" in doc:
        kw["output_dir"] = base / _coerce("output_dir", doc.pop("output_dir"), str)
    if "highway_tags" in doc:
        tags = doc.pop("highway_tags")
        if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
            raise ConfigError("highway_tags must be a list of strings")
        kw["highway_tags"] = tuple(sorted(set(tags)))
    for key, kind in _SCALARS.items():
        if key in doc:
            kw[key] = _coerce(key, doc.pop(key), kind)
    if doc:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(doc))}")
    return PipelineConfig(**kw)


def with_overrides(cfg: PipelineConfig, **overrides) -> PipelineConfig:
    """Flags win over file values; ``None`` means not given."""
    given = {k: v for k, v in overrides.items() if v is not None}
    for k in PATH_KEYS + ("output_dir",):
        if k in given:
            given[k] = Path(given[k])
    return replace(cfg, **given)
