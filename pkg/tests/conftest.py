import json
import sys
from pathlib import Path

import numpy as np
import pytest

TESTS = Path(__file__).parent
FIXTURES = TESTS / "fixtures"
E2E = FIXTURES / "e2e"

sys.path.insert(0, str(TESTS))


def write_asc(path, values, west, south, cs, nodata=-9999):
    values = np.asarray(values)
    lines = [
        f"ncols {values.shape[1]}",
        f"nrows {values.shape[0]}",
        f"xllcorner {west!r}",
        f"yllcorner {south!r}",
        f"cellsize {cs!r}",
        f"NODATA_value {nodata}",
    ]
    lines += [" ".join(repr(float(v)) if values.dtype.kind == "f" else str(v) for v in row) for row in values]
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def feature(geom_type, coords, **props):
    return {"type": "Feature", "properties": props, "geometry": {"type": geom_type, "coordinates": coords}}


def write_geojson(path, features):
    Path(path).write_text(json.dumps({"type": "FeatureCollection", "features": features}))
    return Path(path)


def box(w, s, e, n):
    return [[w, s], [e, s], [e, n], [w, n], [w, s]]


@pytest.fixture
def small_inputs(tmp_path):
    """4x4 grid at the equator, two regions side by side, one road.

    Region A (west half) has an urban column so a region with zero rural
    population can be produced by marking all of region B urban.
    """
    cs = 0.01
    pop = np.full((4, 4), 10.0)
    urban = np.zeros((4, 4), dtype=int)
    paths = {
        "population": write_asc(tmp_path / "pop.asc", pop, 0.0, 0.0, cs),
        "urban": write_asc(tmp_path / "urban.asc", urban, 0.0, 0.0, cs, nodata=-1),
        "regions": write_geojson(tmp_path / "regions.geojson", [
            feature("Polygon", [box(0.0, 0.0, 0.02, 0.04)], region_code="A", name="Alpha"),
            feature("Polygon", [box(0.02, 0.0, 0.04, 0.04)], region_code="B", name="Beta"),
            feature("Polygon", [box(0.0, 0.04, 0.04, 0.08)], region_code="C", name="Gamma"),
        ]),
        "roads": write_geojson(tmp_path / "roads.geojson", [
            feature("LineString", [[0.0, 0.02], [0.04, 0.02]], highway="primary"),
        ]),
    }
    return paths


# --- acceptance reporting --------------------------------------------------------

_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, {"title": title, "failed": [], "ran": 0})
    if rep.when == "call":
        entry["ran"] += 1
    if rep.failed or (rep.when == "call" and rep.skipped):
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        ok = e["ran"] > 0 and not e["failed"]
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {e['title']}"
        if e["failed"]:
            line += f"  (failed: {', '.join(e['failed'])})"
        terminalreporter.write_line(line)
