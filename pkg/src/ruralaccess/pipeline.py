"""Stage functions behind the command line: compute, stats, render."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

import numpy as np

from .accessibility import RoadIndex, build_rural_mask, classify_cells, clip_roads_to_rural
from .config import PipelineConfig, parse_weights
from .ingest import (
    IngestError,
    RegionSet,
    filter_all_season_roads,
    load_covariates,
    load_raster,
    load_regions,
    load_vector,
)
from .spatial_stats import (
    DEFAULT_PERMUTATIONS,
    CorrelationUndefined,
    GiniUndefined,
    MoranUndefined,
    build_knn_weights,
    build_queen_weights,
    classify_gini,
    correlation_table,
    gini,
    moran_i,
    parse_mode,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CSV_COLUMNS = ("region_code", "name", "pop_rural", "pop_served", "rai_percent", "nsrp")
INDICATOR_FIELDS = ("rai", "nsrp")


class StageError(Exception):
    """Failure inside a pipeline stage; ``kind`` selects the exit code."""

    def __init__(self, stage: str, kind: str, message: str, path: str | None = None):
        super().__init__(message)
        self.stage = stage
        self.kind = kind
        self.path = path

    def as_dict(self) -> dict:
        out = {"error": str(self), "stage": self.stage, "kind": self.kind}
        if self.path:
            out["path"] = self.path
        return out


@dataclass
class Timer:
    laps: dict = field(default_factory=dict)

    def lap(self, name, t0):
        self.laps[name] = round(time.perf_counter() - t0, 6)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def input_checksums(cfg: PipelineConfig, roles) -> dict:
    out = {}
    for role in roles:
        p = getattr(cfg, role)
        if p is not None and Path(p).is_file():
            out[role] = sha256_file(p)
    return out


def format_number(v) -> str:
    """Six significant digits, ``NA`` for None.

    Values of a million or more stay positional (``123457000``), not ``1.23457e+08``.
    """
    if v is None:
        return "NA"
    v = float(v)
    if v == 0:
        return "0"
    s = format(v, ".6g")
    if "e+" in s:
        return format(Decimal(s), "f")
    return s


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# compute
# ---------------------------------------------------------------------------


def _ingest(stage, fn, path, *args):
    if path is None:
        raise StageError(stage, "config", "required input path not configured")
    if not Path(path).exists():
        raise StageError(stage, "input", f"input file not found: {path}", str(path))
    try:
        return fn(path, *args)
    except IngestError as exc:
        raise StageError(stage, "input", str(exc), str(path)) from None


def load_region_set(cfg: PipelineConfig, stage: str) -> RegionSet:
    return _ingest(stage, load_regions, cfg.regions, cfg.region_code_field, cfg.region_name_field)


def run_compute(cfg: PipelineConfig) -> dict:
    """Rural mask, road proximity and per-region indicators; writes regions.csv/json."""
    stage = "compute"
    timer = Timer()
    t0 = time.perf_counter()
    pop = _ingest(stage, load_raster, cfg.population)
    urban = _ingest(stage, load_raster, cfg.urban)
    dem = _ingest(stage, load_raster, cfg.dem) if cfg.dem is not None else None
    regions = load_region_set(cfg, stage)
    roads_fc = _ingest(stage, load_vector, cfg.roads)
    timer.lap("ingest", t0)

    t0 = time.perf_counter()
    try:
        mask = build_rural_mask(pop, urban, regions)
    except ValueError as exc:
        raise StageError(stage, "input", str(exc)) from None
    network = filter_all_season_roads(roads_fc, cfg.highway_tags)
    if cfg.clip_roads_to_rural and not network.is_empty:
        network = clip_roads_to_rural(network, mask, pop)
    if network.is_empty:
        raise StageError(stage, "input", "no all-season roads loaded", str(cfg.roads))
    index = RoadIndex(network)
    timer.lap("prepare", t0)

    t0 = time.perf_counter()
    try:
        result = classify_cells(pop, mask, index, dem, cfg.threshold_m, workers=cfg.workers)
    except ValueError as exc:
        raise StageError(stage, "input", str(exc)) from None
    timer.lap("classify", t0)

    names = {r.code: r.name for r in regions}
    rows = [
        {
            "region_code": ind.code,
            "name": names[ind.code],
            "pop_rural": ind.pop_rural,
            "pop_served": ind.pop_served,
            "rai_percent": ind.rai,
            "nsrp": ind.nsrp,
        }
        for ind in result.indicators
    ]
    rural_total = sum(r["pop_rural"] for r in rows)
    served_total = sum(r["pop_served"] for r in rows)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "regions": rows,
        "summary": {
            "n_regions": len(rows),
            "n_rai_undefined": sum(r["rai_percent"] is None for r in rows),
            "pop_rural_total": rural_total,
            "pop_served_total": served_total,
            "nsrp_total": rural_total - served_total,
            "rai_overall_percent": served_total / rural_total * 100 if rural_total > 0 else None,
            "rural_cells": int(mask.rural.sum()),
            "served_cells": int(result.served.sum()),
            "dem_skipped_cells": result.dem_skipped,
        },
        "road_filter": network.report.as_dict(),
        "metadata": {
            "config": cfg.echo(),
            "checksums": input_checksums(cfg, ("population", "urban", "roads", "regions", "dem")),
        },
    }
    out = Path(cfg.output_dir)
    _write_text(out / "regions.csv", indicators_csv(rows))
    _write_text(out / "regions.json", _dump_json(doc))
    return {"doc": doc, "result": result, "timings": timer.laps}


def indicators_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([
            r["region_code"], r["name"], format_number(r["pop_rural"]), format_number(r["pop_served"]),
            format_number(r["rai_percent"]), format_number(r["nsrp"]),
        ])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# indicator files
# ---------------------------------------------------------------------------


def _num(s: str, what: str, line: int):
    s = s.strip()
    if s == "NA":
        return None
    try:
        v = float(s)
    except ValueError:
        raise IngestError(f"row {line}: {what} is not numeric: {s!r}") from None
    if not math.isfinite(v):
        raise IngestError(f"row {line}: {what} is not finite")
    return v


def read_indicator_rows(path) -> list[dict]:
    """Rows from regions.json (full precision) or a regions.csv with the standard columns."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            rows = doc["regions"]
            for r in rows:
                for c in CSV_COLUMNS:
                    r[c]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise IngestError(f"not an indicator JSON file: {exc}") from None
        return rows
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_COLUMNS:
            raise IngestError(f"indicator CSV header must be {','.join(CSV_COLUMNS)}")
        rows = []
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(CSV_COLUMNS):
                raise IngestError(f"row {line}: expected {len(CSV_COLUMNS)} cells")
            rural = _num(rec[2], "pop_rural", line)
            served = _num(rec[3], "pop_served", line)
            if rural is None or served is None:
                raise IngestError(f"row {line}: population columns cannot be NA")
            rows.append({
                "region_code": rec[0].strip(), "name": rec[1], "pop_rural": rural, "pop_served": served,
                "rai_percent": _num(rec[4], "rai_percent", line), "nsrp": _num(rec[5], "nsrp", line),
            })
    codes = [r["region_code"] for r in rows]
    if len(set(codes)) != len(codes):
        raise IngestError("duplicate region codes in indicator file")
    return rows


def _load_indicators(cfg: PipelineConfig, stage: str, path):
    path = Path(path) if path else Path(cfg.output_dir) / "regions.json"
    return path, _ingest(stage, read_indicator_rows, path)


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------


def _weights_for(codes, regions: RegionSet, cfg: PipelineConfig):
    kind, k = parse_weights(cfg.weights)
    by_code = regions.by_code()
    if kind == "queen":
        return build_queen_weights([by_code[c].polygons for c in codes]), "queen"
    k_used = min(k, len(codes) - 1)
    centroids = [by_code[c].centroid() for c in codes]
    return build_knn_weights(centroids, k_used), f"knn:{k_used}"


def _moran_block(values, codes, regions, cfg) -> dict:
    mode, n_perm = parse_mode(cfg.moran)
    if len(codes) < 3:
        return {"n": len(codes), "error": f"need ≥ 3 regions, got {len(codes)}"}
    try:
        w, label = _weights_for(codes, regions, cfg)
        res = moran_i(values, w, mode, n_perm=n_perm or DEFAULT_PERMUTATIONS, seed=cfg.seed, workers=cfg.workers)
    except (MoranUndefined, ValueError) as exc:
        return {"n": len(codes), "error": str(exc)}
    out = res.as_dict()
    out["weights"] = label
    return out


def _gini_block(values, rural, cfg) -> dict:
    rural = np.asarray(rural, dtype=float)
    if cfg.gini_weighting == "equal":
        shares = np.full(rural.size, 1.0 / max(rural.size, 1))
    else:
        total = rural.sum()
        if total <= 0:
            return {"error": "no rural population"}
        shares = rural / total
    try:
        g, _ = gini(values, shares)
    except (GiniUndefined, ValueError) as exc:
        return {"error": str(exc)}
    return {"gini": g, "class": classify_gini(g), "weighting": cfg.gini_weighting}


def run_stats(cfg: PipelineConfig, indicators_path=None) -> dict:
    """Moran's I, Gini and covariate correlations; writes stats.json."""
    stage = "stats"
    ipath, rows = _load_indicators(cfg, stage, indicators_path)
    rows = sorted(rows, key=lambda r: r["region_code"])
    if len(rows) < 3:
        raise StageError(stage, "input", f"need ≥ 3 regions, got {len(rows)}")
    regions = load_region_set(cfg, stage)
    known = regions.by_code()
    unmatched = [r["region_code"] for r in rows if r["region_code"] not in known]
    if unmatched:
        raise StageError(stage, "input", f"indicator rows without region geometry: {', '.join(unmatched)}")
    covariates = _ingest(stage, load_covariates, cfg.covariates) if cfg.covariates is not None else None

    all_codes = [r["region_code"] for r in rows]
    rai_rows = [r for r in rows if r["rai_percent"] is not None]
    rai_codes = [r["region_code"] for r in rai_rows]

    moran = {
        "rai": _moran_block([r["rai_percent"] for r in rai_rows], rai_codes, regions, cfg),
        "nsrp": _moran_block([r["nsrp"] for r in rows], all_codes, regions, cfg),
    }
    gini_out = {
        "rai": _gini_block([r["pop_served"] for r in rows], [r["pop_rural"] for r in rows], cfg),
        "nsrp": _gini_block([r["nsrp"] for r in rows], [r["pop_rural"] for r in rows], cfg),
    }

    correlation = None
    if covariates is not None:
        ind = {
            "rai": {r["region_code"]: r["rai_percent"] for r in rows},
            "nsrp": {r["region_code"]: r["nsrp"] for r in rows},
        }
        cov = {c: covariates.column(c) for c in covariates.columns}
        try:
            table = correlation_table(ind, cov)
        except CorrelationUndefined as exc:
            raise StageError(stage, "input", exc.reason, str(cfg.covariates)) from None
        correlation = {
            "columns": list(INDICATOR_FIELDS),
            "rows": [
                {"covariate": c, "dimension": covariates.dimension(c), **{f: table[f][c] for f in INDICATOR_FIELDS}}
                for c in covariates.columns
            ],
        }

    roles = ("regions", "covariates")
    checksums = input_checksums(cfg, roles)
    checksums["indicators"] = sha256_file(ipath)
    upstream = {}
    if ipath.suffix.lower() == ".json":
        upstream = json.loads(ipath.read_text(encoding="utf-8")).get("metadata", {}).get("checksums", {})
    doc = {
        "schema_version": SCHEMA_VERSION,
        "n_regions": len(rows),
        "n_rai_defined": len(rai_rows),
        "moran": moran,
        "gini": gini_out,
        "correlation": correlation,
        "metadata": {
            "config": cfg.echo(),
            "checksums": {**upstream, **checksums},
        },
    }
    _write_text(Path(cfg.output_dir) / "stats.json", _dump_json(doc))
    return doc


# ---------------------------------------------------------------------------
# render
# ---------------------------------------------------------------------------


def run_render(cfg: PipelineConfig, indicators_path=None, fields=INDICATOR_FIELDS) -> list[Path]:
    from .render import render_choropleth

    stage = "render"
    _, rows = _load_indicators(cfg, stage, indicators_path)
    regions = load_region_set(cfg, stage)
    out = []
    for f in fields:
        col = "rai_percent" if f == "rai" else "nsrp"
        values = {r["region_code"]: r[col] for r in rows}
        try:
            svg = render_choropleth(regions, values, title=f.upper())
        except ValueError as exc:
            raise StageError(stage, "input", str(exc)) from None
        p = Path(cfg.output_dir) / f"map_{f}.svg"
        _write_text(p, svg)
        out.append(p)
    return out

