import csv
import hashlib
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from conftest import E2E, box, feature, write_asc, write_geojson
from hypothesis import given, settings
from hypothesis import strategies as st

from ruralaccess.cli import main
from ruralaccess.pipeline import format_number, read_indicator_rows

SVG = "{http://www.w3.org/2000/svg}"

# oracle sums (rural, served) for the committed fixture, from tests/oracles.py
E2E_SUMS = {"A": (35904.3, 21996.2), "B": (18272.1, 15640.4), "C": (18352.1, 14849.2)}


def run_cli(capsys, *args):
    code = main([str(a) for a in args])
    err = capsys.readouterr().err.strip()
    return code, (json.loads(err.splitlines()[-1]) if err else None)


def small_args(paths, out, *extra):
    args = []
    for k, v in paths.items():
        args += [f"--{k}", v]
    return [*args, "--output-dir", out, *extra]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def e2e_covariates(path):
    path.write_text("region_code,GDP per capita,Adult literacy rate\nA,1200,71.5\nB,3400,88.0\nC,2100,80.25\n")
    return path


# --- compute -----------------------------------------------------------------


def test_compute_e2e_matches_oracle(tmp_path, capsys):
    code, err = run_cli(capsys, "compute", "--config", E2E / "config.toml", "--output-dir", tmp_path)
    assert code == 0, err
    doc = json.loads((tmp_path / "regions.json").read_text())
    assert doc["schema_version"] == 1
    got = {r["region_code"]: r for r in doc["regions"]}
    assert sorted(got) == ["A", "B", "C"]
    for k, (rural, served) in E2E_SUMS.items():
        assert got[k]["pop_rural"] == pytest.approx(rural, rel=1e-9)
        assert got[k]["pop_served"] == pytest.approx(served, rel=1e-9)
        assert got[k]["rai_percent"] == pytest.approx(served / rural * 100, rel=1e-9)
    assert doc["road_filter"]["missing_highway_tag"] == 1
    assert doc["metadata"]["checksums"]["roads"] == sha(E2E / "roads.geojson")
    rows = read_csv(tmp_path / "regions.csv")
    assert [r["region_code"] for r in rows] == ["A", "B", "C"]
    assert (tmp_path / "timings_compute.json").exists()
    assert "timing" not in (tmp_path / "regions.json").read_text()


def test_compute_small_all_served_and_na_row(small_inputs, tmp_path, capsys):
    code, _ = run_cli(capsys, "compute", *small_args(small_inputs, tmp_path))
    assert code == 0
    rows = {r["region_code"]: r for r in read_csv(tmp_path / "regions.csv")}
    assert rows["A"] == {"region_code": "A", "name": "Alpha", "pop_rural": "80", "pop_served": "80",
                         "rai_percent": "100", "nsrp": "0"}
    assert rows["C"]["pop_rural"] == "0" and rows["C"]["rai_percent"] == "NA" and rows["C"]["nsrp"] == "0"
    doc = json.loads((tmp_path / "regions.json").read_text())
    assert doc["regions"][2]["rai_percent"] is None
    assert doc["summary"]["n_rai_undefined"] == 1


def test_compute_small_threshold_halves_access(small_inputs, tmp_path, capsys):
    # cell centres sit 556 m or 1668 m from the road
    code, _ = run_cli(capsys, "compute", *small_args(small_inputs, tmp_path, "--threshold-m", "1000"))
    assert code == 0
    rows = {r["region_code"]: r for r in read_csv(tmp_path / "regions.csv")}
    assert rows["B"]["pop_served"] == "40" and rows["B"]["rai_percent"] == "50" and rows["B"]["nsrp"] == "40"


def test_all_urban_region_gets_na(small_inputs, tmp_path, capsys):
    urban = np.zeros((4, 4), dtype=int)
    urban[:, 2:] = 1
    small_inputs["urban"] = write_asc(tmp_path / "u2.asc", urban, 0.0, 0.0, 0.01, nodata=-1)
    code, _ = run_cli(capsys, "compute", *small_args(small_inputs, tmp_path / "o"))
    assert code == 0
    rows = {r["region_code"]: r for r in read_csv(tmp_path / "o" / "regions.csv")}
    assert rows["B"]["rai_percent"] == "NA" and rows["B"]["pop_rural"] == "0"
    assert rows["A"]["rai_percent"] == "100"


def test_missing_roads_file(small_inputs, tmp_path, capsys):
    small_inputs["roads"] = tmp_path / "nowhere" / "roads.geojson"
    code, err = run_cli(capsys, "compute", *small_args(small_inputs, tmp_path / "o"))
    assert code == 2
    assert err["stage"] == "compute" and err["kind"] == "input"
    assert str(small_inputs["roads"]) in err["error"]
    assert not (tmp_path / "o" / "regions.csv").exists()


def test_no_all_season_roads(small_inputs, tmp_path, capsys):
    small_inputs["roads"] = write_geojson(tmp_path / "r.geojson", [
        feature("LineString", [[0, 0], [1, 1]], highway="motorway")])
    code, err = run_cli(capsys, "compute", *small_args(small_inputs, tmp_path / "o"))
    assert code == 2 and "no all-season roads" in err["error"]


def test_corrupt_raster_is_input_error(small_inputs, tmp_path, capsys):
    bad = tmp_path / "bad.asc"
    bad.write_text("ncols 4\nnrows 4\nxllcorner 0\n")
    small_inputs["population"] = bad
    code, err = run_cli(capsys, "compute", *small_args(small_inputs, tmp_path / "o"))
    assert code == 2 and err["kind"] == "input"


@pytest.mark.parametrize("extra,toml", [
    (["--weights", "knn:0"], None),
    (["--threshold-m", "-5"], None),
    (["--workers", "0"], None),
    (["--bogus"], None),
    ([], "threshold_m = 2000\nunknown_key = 1\n"),
    ([], "threshold_m = [\n"),
    ([], 'moran = "bootstrap"\n'),
    ([], "threshold_m = 0\n"),
])
def test_config_errors_exit_3(small_inputs, tmp_path, capsys, extra, toml):
    args = small_args(small_inputs, tmp_path / "o", *extra)
    if toml is not None:
        cfg = tmp_path / "c.toml"
        cfg.write_text(toml)
        args += ["--config", cfg]
    code, err = run_cli(capsys, "compute", *args)
    assert code == 3
    assert err["kind"] == "config"


def test_missing_required_path_is_config_error(small_inputs, tmp_path, capsys):
    del small_inputs["roads"]
    code, err = run_cli(capsys, "compute", *small_args(small_inputs, tmp_path))
    assert code == 3 and "roads" in err["error"]


def test_missing_config_file(tmp_path, capsys):
    code, err = run_cli(capsys, "compute", "--config", tmp_path / "none.toml")
    assert code == 3


# --- stats -------------------------------------------------------------------


def test_stats_refuses_two_regions(tmp_path, capsys):
    regions = write_geojson(tmp_path / "r.geojson", [
        feature("Polygon", [box(0, 0, 1, 1)], region_code="A"),
        feature("Polygon", [box(1, 0, 2, 1)], region_code="B"),
    ])
    ind = tmp_path / "regions.csv"
    ind.write_text("region_code,name,pop_rural,pop_served,rai_percent,nsrp\nA,A,10,5,50,5\nB,B,10,2,20,8\n")
    code, err = run_cli(capsys, "stats", "--regions", regions, "--indicators", ind, "--output-dir", tmp_path)
    assert code == 2
    assert err["stage"] == "stats"
    assert "need ≥ 3 regions, got 2" in err["error"]
    assert not (tmp_path / "stats.json").exists()


def test_stats_e2e_contents(tmp_path, capsys):
    cov = e2e_covariates(tmp_path / "cov.csv")
    assert run_cli(capsys, "compute", "--config", E2E / "config.toml", "--output-dir", tmp_path)[0] == 0
    code, err = run_cli(capsys, "stats", "--config", E2E / "config.toml", "--output-dir", tmp_path,
                        "--covariates", cov)
    assert code == 0, err
    st = json.loads((tmp_path / "stats.json").read_text())
    assert st["n_regions"] == 3
    m = st["moran"]["rai"]
    assert m["expectation"] == -0.5 and m["weights"] == "knn:1" and m["assumption"] == "normality"
    g = st["gini"]["rai"]
    assert 0 <= g["gini"] <= 1 and g["weighting"] == "rural_population"
    rows = {r["covariate"]: r for r in st["correlation"]["rows"]}
    assert rows["GDP per capita"]["dimension"] == "Economy"
    assert rows["GDP per capita"]["rai"]["n"] == 3
    assert st["correlation"]["columns"] == ["rai", "nsrp"]


def test_stats_csv_and_json_inputs_agree(tmp_path, capsys):
    run_cli(capsys, "compute", "--config", E2E / "config.toml", "--output-dir", tmp_path)
    a = tmp_path / "a"
    b = tmp_path / "b"
    run_cli(capsys, "stats", "--config", E2E / "config.toml", "--output-dir", a,
            "--indicators", tmp_path / "regions.json")
    run_cli(capsys, "stats", "--config", E2E / "config.toml", "--output-dir", b,
            "--indicators", tmp_path / "regions.csv")
    ja = json.loads((a / "stats.json").read_text())
    jb = json.loads((b / "stats.json").read_text())
    assert ja["moran"]["nsrp"]["morans_i"] == pytest.approx(jb["moran"]["nsrp"]["morans_i"], rel=1e-5)
    assert ja["gini"]["rai"]["gini"] == pytest.approx(jb["gini"]["rai"]["gini"], rel=1e-5)


def test_stats_permutation_mode_worker_independent(tmp_path, capsys):
    run_cli(capsys, "compute", "--config", E2E / "config.toml", "--output-dir", tmp_path)
    docs = []
    for w in (1, 4):
        out = tmp_path / f"w{w}"
        code, _ = run_cli(capsys, "stats", "--config", E2E / "config.toml", "--output-dir", out,
                          "--indicators", tmp_path / "regions.json", "--moran", "perm:999", "--workers", w,
                          "--seed", 11)
        assert code == 0
        docs.append((out / "stats.json").read_bytes())
    assert docs[0] == docs[1]
    assert json.loads(docs[0])["moran"]["rai"]["n_permutations"] == 999


def test_stats_degenerate_weights_reported(tmp_path, capsys):
    run_cli(capsys, "compute", "--config", E2E / "config.toml", "--output-dir", tmp_path)
    code, _ = run_cli(capsys, "stats", "--config", E2E / "config.toml", "--output-dir", tmp_path, "--weights", "knn:2")
    assert code == 0
    st = json.loads((tmp_path / "stats.json").read_text())
    assert "zero variance" in st["moran"]["rai"]["error"]
    assert "gini" in st["gini"]["rai"]


def test_stats_row_without_geometry(tmp_path, capsys):
    regions = write_geojson(tmp_path / "r.geojson", [
        feature("Polygon", [box(k, 0, k + 1, 1)], region_code=c) for k, c in enumerate("ABC")])
    ind = tmp_path / "regions.csv"
    ind.write_text("region_code,name,pop_rural,pop_served,rai_percent,nsrp\n"
                   "A,A,10,5,50,5\nB,B,10,2,20,8\nZ,Z,10,1,10,9\n")
    code, err = run_cli(capsys, "stats", "--regions", regions, "--indicators", ind, "--output-dir", tmp_path)
    assert code == 2 and "Z" in err["error"]


# --- render ------------------------------------------------------------------


def test_render_paths_swatches_and_hatch(small_inputs, tmp_path, capsys):
    assert run_cli(capsys, "compute", *small_args(small_inputs, tmp_path))[0] == 0
    code, _ = run_cli(capsys, "render", *small_args(small_inputs, tmp_path), "--field", "rai")
    assert code == 0
    first = (tmp_path / "map_rai.svg").read_bytes()
    assert not (tmp_path / "map_nsrp.svg").exists()
    root = ET.fromstring(first)
    paths = root.findall(f".//{SVG}path")
    assert len(paths) == 3
    by_code = {p.get("data-code"): p for p in paths}
    assert by_code["C"].get("fill") == "url(#nodata)" and by_code["C"].get("data-value") == "NA"
    assert by_code["A"].get("data-value") == "100.0"
    assert len(root.findall(f".//{SVG}rect[@class='swatch']")) == 5
    nodata = root.find(f".//{SVG}rect[@class='nodata']")
    assert nodata.get("data-codes") == "C"
    assert any(t.text == "undefined (1)" for t in root.iter(f"{SVG}text"))
    run_cli(capsys, "render", *small_args(small_inputs, tmp_path), "--field", "rai")
    assert (tmp_path / "map_rai.svg").read_bytes() == first


def test_render_without_indicators(small_inputs, tmp_path, capsys):
    code, err = run_cli(capsys, "render", *small_args(small_inputs, tmp_path))
    assert code == 2 and err["stage"] == "render" and "not found" in err["error"]


# --- run ---------------------------------------------------------------------


def test_run_writes_everything_with_consistent_checksums(tmp_path, capsys):
    cov = e2e_covariates(tmp_path / "cov.csv")
    out = tmp_path / "out"
    code, err = run_cli(capsys, "run", "--config", E2E / "config.toml", "--output-dir", out, "--covariates", cov)
    assert code == 0, err
    for name in ("regions.csv", "regions.json", "stats.json", "map_rai.svg", "map_nsrp.svg", "timings_run.json"):
        assert (out / name).is_file(), name
    reg = json.loads((out / "regions.json").read_text())["metadata"]["checksums"]
    st = json.loads((out / "stats.json").read_text())["metadata"]["checksums"]
    for role, fname in [("population", "population.asc"), ("urban", "urban.asc"), ("roads", "roads.geojson"),
                        ("regions", "regions.geojson")]:
        assert reg[role] == st[role] == sha(E2E / fname)
    assert st["covariates"] == sha(cov)
    assert st["indicators"] == sha(out / "regions.json")
    timings = json.loads((out / "timings_run.json").read_text())
    assert timings["total_s"] >= 0 and set(timings["compute"]) >= {"ingest", "classify"}


def test_run_with_corrupt_covariates_keeps_compute_outputs(tmp_path, capsys):
    cov = tmp_path / "cov.csv"
    cov.write_text("region_code,GDP per capita\nA,12\nB,not-a-number\nC,3\n")
    out = tmp_path / "out"
    code, err = run_cli(capsys, "run", "--config", E2E / "config.toml", "--output-dir", out, "--covariates", cov)
    assert code == 2
    assert err["stage"] == "stats" and err["kind"] == "input"
    assert "non-numeric" in err["error"] and err["path"] == str(cov)
    assert (out / "regions.csv").is_file() and (out / "regions.json").is_file()
    assert not (out / "stats.json").exists()


def test_workers_byte_identical(tmp_path, capsys):
    outs = []
    for w in (1, 8):
        out = tmp_path / f"w{w}"
        assert run_cli(capsys, "compute", "--config", E2E / "config.toml", "--output-dir", out,
                       "--workers", w)[0] == 0
        outs.append(out)
    for name in ("regions.csv", "regions.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_csv_nsrp_invariant(tmp_path, capsys):
    run_cli(capsys, "compute", "--config", E2E / "config.toml", "--output-dir", tmp_path)
    for r in read_csv(tmp_path / "regions.csv"):
        rural, served, nsrp = float(r["pop_rural"]), float(r["pop_served"]), float(r["nsrp"])
        # each CSV cell carries at most half a unit in the sixth significant digit
        slack = 5e-6 * (abs(rural) + abs(served) + abs(nsrp))
        assert abs(nsrp - (rural - served)) <= slack
    for r in json.loads((tmp_path / "regions.json").read_text())["regions"]:
        assert r["nsrp"] == r["pop_rural"] - r["pop_served"]


def test_format_number():
    assert format_number(None) == "NA"
    assert format_number(80.0) == "80"
    assert format_number(-0.0) == "0"
    assert format_number(1e12) == "1000000000000"
    assert format_number(123456789) == "123457000"
    assert format_number(999999.6) == "1000000"
    assert format_number(35904.3) == "35904.3"
    assert format_number(61.264871) == "61.2649"
    assert format_number(0.000123456789) == "0.000123457"


@settings(max_examples=300, deadline=None)
@given(st.floats(-1e12, 1e12, allow_nan=False))
def test_format_number_six_significant_digits(v):
    s = format_number(v)
    assert "e" not in s or abs(v) < 1e-4
    assert float(s) == pytest.approx(v, rel=5e-6, abs=0)


def test_read_indicator_rows_rejects_bad_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("code,rai\nA,1\n")
    with pytest.raises(Exception, match="header"):
        read_indicator_rows(p)


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "ruralaccess", "compute", "--config", str(E2E / "config.toml"),
         "--output-dir", str(tmp_path), "--roads", str(tmp_path / "missing.geojson")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2
    assert json.loads(proc.stderr.strip().splitlines()[-1])["kind"] == "input"
