import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import haversine, moran_double_loop
from scipy import stats

from ruralaccess.geo_core import GeoPoint, Polygon
from ruralaccess.spatial_stats import (
    CorrelationUndefined,
    GiniUndefined,
    MoranUndefined,
    WeightsMatrix,
    build_knn_weights,
    build_queen_weights,
    classify_gini,
    correlation_table,
    gini,
    gini_percent_axes,
    lattice_weights,
    lorenz_curve,
    moran_i,
    morans_i,
    parse_mode,
    pearson,
    pearson_r,
    pearson_raw_sums,
)

# --- weights ---------------------------------------------------------------------


def test_knn_tie_goes_to_lower_index():
    pts = [GeoPoint(-1, 0), GeoPoint(0, 0), GeoPoint(1, 0)]
    w = build_knn_weights(pts, 1)
    assert w.neighbors(1) == [0]


def test_knn_rows_have_k_entries_summing_to_one():
    rng = np.random.default_rng(4)
    pts = [GeoPoint(x, y) for x, y in rng.uniform(-50, 50, (30, 2))]
    w = build_knn_weights(pts, 5)
    assert np.all((w.w > 0).sum(axis=1) == 5)
    assert np.allclose(w.w.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.diag(w.w) == 0) and w.row_standardized


def test_knn_matches_brute_force():
    rng = np.random.default_rng(8)
    xy = rng.uniform([-20, -20], [20, 20], (25, 2))
    w = build_knn_weights([GeoPoint(x, y) for x, y in xy], 4)
    for i in range(25):
        d = [(float(haversine(xy[i, 0], xy[i, 1], xy[j, 0], xy[j, 1])), j) for j in range(25) if j != i]
        expected = sorted(j for _, j in sorted(d)[:4])
        assert w.neighbors(i) == expected


def test_knn_rejections():
    with pytest.raises(ValueError, match="duplicate"):
        build_knn_weights([GeoPoint(0, 0), GeoPoint(0, 0), GeoPoint(1, 1)], 1)
    with pytest.raises(ValueError):
        build_knn_weights([GeoPoint(0, 0), GeoPoint(1, 1)], 2)


def test_queen_grid_of_squares():
    polys = [[Polygon(((c, r), (c + 1, r), (c + 1, r + 1), (c, r + 1)))] for r in range(3) for c in range(3)]
    polys.append([Polygon(((10, 10), (11, 10), (11, 11)))])  # island
    w = build_queen_weights(polys, row_standardize=False)
    deg = (w.w > 0).sum(axis=1)
    assert deg[4] == 8
    assert deg[0] == 3 and deg[1] == 5
    assert deg[9] == 0
    assert np.array_equal(w.w, w.w.T)
    ws = build_queen_weights(polys)
    assert np.allclose(ws.w[:9].sum(axis=1), 1.0) and ws.w[9].sum() == 0


def test_weights_matrix_validation():
    with pytest.raises(ValueError):
        WeightsMatrix(np.ones((2, 3)))
    with pytest.raises(ValueError):
        WeightsMatrix(np.eye(2))
    with pytest.raises(ValueError):
        WeightsMatrix(-np.ones((2, 2)) + np.eye(2))


# --- Moran's I ------------------------------------------------------------------


def checkerboard(n=4):
    return np.array([1.0 if (r + c) % 2 else -1.0 for r in range(n) for c in range(n)])


def test_checkerboard_is_minus_one_against_double_loop():
    w = lattice_weights(4, 4, rook=True)
    x = checkerboard()
    res = moran_i(x, w)
    ref = moran_double_loop(x, w.w.tolist())
    assert ref == pytest.approx(-1.0, abs=1e-12)
    assert res.I == pytest.approx(ref, abs=1e-12)


def test_moran_random_matches_double_loop():
    rng = np.random.default_rng(0)
    for _ in range(10):
        n = int(rng.integers(4, 20))
        raw = rng.random((n, n)) * (rng.random((n, n)) < 0.4)
        np.fill_diagonal(raw, 0)
        w = WeightsMatrix.from_dense(raw, row_standardize=bool(rng.integers(2)))
        if w.w.sum() == 0:
            continue
        x = rng.normal(size=n)
        assert moran_i(x, w).I == pytest.approx(moran_double_loop(x, w.w.tolist()), rel=1e-10, abs=1e-12)


def test_expectation_n_203():
    rng = np.random.default_rng(1)
    pts = [GeoPoint(x, y) for x, y in zip(rng.uniform(-170, 170, 203), rng.uniform(-60, 70, 203))]
    res = moran_i(rng.normal(size=203), build_knn_weights(pts, 8))
    assert res.expectation == -1 / 202
    assert round(res.expectation, 5) == -0.00495
    assert math.floor(res.expectation * 1000) / 1000 == pytest.approx(-0.005)


def test_constant_attribute_rejected():
    with pytest.raises(MoranUndefined, match="constant attribute, Moran's I undefined"):
        moran_i(np.full(9, 3.0), lattice_weights(3, 3))


def test_too_few_regions():
    with pytest.raises(MoranUndefined, match="at least 3"):
        moran_i([1.0, 2.0], WeightsMatrix.from_dense([[0, 1], [1, 0]]))
    with pytest.raises(MoranUndefined, match="at least 4"):
        moran_i([1.0, 2.0, 4.0], WeightsMatrix.from_dense(np.ones((3, 3)) - np.eye(3)), "randomization")


@pytest.mark.parametrize("mode", ["normality", "randomization", "permutation"])
def test_complete_graph_has_no_variance(mode):
    w = WeightsMatrix.from_dense(np.ones((5, 5)) - np.eye(5))
    x = [1.0, 4.0, 2.0, 9.0, 3.0]
    assert morans_i(x, w) == pytest.approx(-0.25, abs=1e-12)
    with pytest.raises(MoranUndefined, match="zero variance"):
        moran_i(x, w, mode, n_perm=99)


def test_randomization_variance_equals_exact_enumeration():
    # every relabelling of 7 values: the exact permutation variance of I
    rng = np.random.default_rng(12)
    n = 7
    raw = (rng.random((n, n)) < 0.5).astype(float)
    raw = np.triu(raw, 1)
    raw = raw + raw.T
    raw[0, 1] = raw[1, 0] = 1.0
    w = WeightsMatrix.from_dense(raw, row_standardize=True)
    x = rng.exponential(size=n)
    z = x - x.mean()
    s0 = w.w.sum()
    sims = np.array([n / s0 * (z[list(p)] @ w.w @ z[list(p)]) / (z @ z) for p in itertools.permutations(range(n))])
    res = moran_i(x, w, "randomization")
    assert sims.mean() == pytest.approx(res.expectation, abs=1e-12)
    assert sims.var() == pytest.approx(res.variance, rel=1e-9)


def test_normality_variance_by_simulation():
    rng = np.random.default_rng(21)
    w = lattice_weights(4, 5)
    x = rng.normal(size=20)
    res = moran_i(x, w, "normality")
    z = rng.normal(size=(40_000, 20))
    z -= z.mean(axis=1, keepdims=True)
    sims = 20 / w.w.sum() * np.einsum("ij,ij->i", z @ w.w.T, z) / np.einsum("ij,ij->i", z, z)
    assert sims.var() == pytest.approx(res.variance, rel=0.03)


@pytest.mark.parametrize("mode", ["normality", "randomization"])
def test_z_and_p_consistency(mode):
    rng = np.random.default_rng(3)
    res = moran_i(rng.normal(size=25), lattice_weights(5, 5), mode)
    assert res.z_score == pytest.approx((res.I - res.expectation) / math.sqrt(res.variance), abs=1e-12)
    assert res.p_value == pytest.approx(2 * stats.norm.sf(abs(res.z_score)))
    assert 0 <= res.p_value <= 1
    assert res.assumption == mode


def test_permutation_agrees_with_randomization_on_30_regions():
    rng = np.random.default_rng(17)
    for trial in range(3):
        pts = [GeoPoint(x, y) for x, y in rng.uniform(-30, 30, (30, 2))]
        w = build_knn_weights(pts, 4)
        x = rng.normal(size=30) + 0.02 * np.array([p.lon for p in pts])
        a = moran_i(x, w, "randomization")
        b = moran_i(x, w, "permutation", n_perm=9999, seed=trial)
        assert abs(a.p_value - b.p_value) <= 0.02


def test_permutation_reproducible_and_worker_independent():
    rng = np.random.default_rng(2)
    x = rng.normal(size=16)
    w = lattice_weights(4, 4)
    a = moran_i(x, w, "permutation", n_perm=2500, seed=5, workers=1)
    b = moran_i(x, w, "permutation", n_perm=2500, seed=5, workers=4)
    c = moran_i(x, w, "permutation", n_perm=2500, seed=6)
    assert a == b
    assert a.variance != c.variance
    assert a.n_permutations == 2500 and 0 < a.p_value <= 1


def test_parse_mode():
    assert parse_mode("perm:99") == ("permutation", 99)
    assert parse_mode("permutation") == ("permutation", 9999)
    assert parse_mode("Normality") == ("normality", 0)
    with pytest.raises(ValueError):
        parse_mode("bootstrap")
    with pytest.raises(ValueError):
        parse_mode("perm:1")


# --- Gini ----------------------------------------------------------------------------


def test_gini_equal_distribution():
    g, curve = gini([5.0, 5.0, 5.0, 5.0])
    assert g == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(curve.x, curve.y)


def test_gini_two_units():
    for x in (1e-6, 1.0, 7.5, 1e9):
        g, _ = gini([0.0, x], [0.5, 0.5])
        assert g == pytest.approx(0.5, abs=1e-12)


def test_gini_equal_weights_matches_mean_abs_difference():
    rng = np.random.default_rng(10)
    for _ in range(50):
        n = int(rng.integers(2, 40))
        v = rng.exponential(size=n)
        ref = np.abs(v[:, None] - v[None, :]).sum() / (2 * n * n * v.mean())
        assert gini(v)[0] == pytest.approx(ref, abs=1e-12)


def test_gini_weighted_matches_expanded_units():
    # integer weights behave like repeated equal-weight units
    v = np.array([3.0, 1.0, 8.0])
    counts = np.array([2, 5, 1])
    g, _ = gini(v * counts, counts / counts.sum())
    expanded = np.repeat(v, counts)
    assert g == pytest.approx(gini(expanded)[0], abs=1e-12)


def test_lorenz_curve_shape():
    rng = np.random.default_rng(6)
    v = rng.exponential(size=12)
    w = rng.random(12)
    c = lorenz_curve(v, w / w.sum())
    assert c.x[0] == 0 and c.y[0] == 0 and c.x[-1] == 1 and c.y[-1] == 1
    assert np.all(np.diff(c.x) >= 0) and np.all(np.diff(c.y) >= 0)


def test_gini_percent_axes_agree():
    rng = np.random.default_rng(13)
    for _ in range(100):
        n = int(rng.integers(2, 60))
        v = rng.exponential(size=n)
        w = rng.random(n)
        w /= w.sum()
        assert gini_percent_axes(v, w) == pytest.approx(gini(v, w)[0], abs=1e-12)


def test_gini_rejections():
    with pytest.raises(GiniUndefined):
        gini([0.0, 0.0])
    with pytest.raises(ValueError):
        gini([1.0, 2.0], [1.5, -0.5])
    with pytest.raises(ValueError, match="sum to 1"):
        gini([1.0, 2.0], [0.2, 0.2])


@pytest.mark.parametrize("g,label", [
    (0.0, "highly equal"), (0.15, "highly equal"), (0.2, "relatively equal"), (0.299, "relatively equal"),
    (0.3, "relatively reasonable"), (0.4, "large inequality"), (0.557, "large inequality"),
    (0.6, "extremely large inequality"), (0.814, "extremely large inequality"), (1.0, "extremely large inequality"),
])
def test_classify_gini(g, label):
    assert classify_gini(g) == label


def test_classify_gini_out_of_range():
    with pytest.raises(ValueError):
        classify_gini(-0.01)
    with pytest.raises(ValueError):
        classify_gini(1.01)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1))
def test_classify_gini_total(g):
    assert classify_gini(g) in {
        "highly equal", "relatively equal", "relatively reasonable", "large inequality", "extremely large inequality",
    }


# --- Pearson -------------------------------------------------------------------------


def test_pearson_identity_and_reflection():
    x = np.array([1.0, 4.0, 2.0, 8.0, 5.0])
    assert pearson(x, x).r == pytest.approx(1.0, abs=1e-12)
    assert pearson(x, -2 * x + 7).r == pytest.approx(-1.0, abs=1e-12)


def test_pearson_two_formulas_example():
    x, y = [1, 2, 3, 4, 5], [2, 1, 4, 3, 6]
    assert pearson_r(x, y) == pytest.approx(pearson_raw_sums(x, y), abs=1e-12)
    # Sxy = 10, Sxx = 10, Syy = 14.8
    assert pearson_r(x, y) == pytest.approx(10 / math.sqrt(148), abs=1e-12)


def test_pearson_two_formulas_random():
    rng = np.random.default_rng(14)
    for _ in range(1000):
        n = int(rng.integers(3, 50))
        x = rng.normal(size=n)
        y = 0.5 * x + rng.normal(size=n)
        assert pearson_r(x, y) == pytest.approx(pearson_raw_sums(x, y), abs=1e-12)


def test_pearson_p_matches_scipy():
    rng = np.random.default_rng(15)
    for _ in range(50):
        n = int(rng.integers(4, 40))
        x = rng.normal(size=n)
        y = 0.3 * x + rng.normal(size=n)
        ref = stats.pearsonr(x, y)
        res = pearson(x, y)
        assert res.r == pytest.approx(ref[0], abs=1e-12)
        assert res.p_value == pytest.approx(ref[1], rel=1e-9, abs=1e-15)
        assert res.n == n


def test_pearson_stars():
    rng = np.random.default_rng(16)
    seen = set()
    for _ in range(300):
        n = int(rng.integers(5, 30))
        x = rng.normal(size=n)
        res = pearson(x, rng.uniform(0, 1) * x + rng.normal(size=n))
        expected = "**" if res.p_value < 0.01 else "*" if res.p_value < 0.05 else ""
        assert res.stars == expected
        seen.add(res.stars)
    assert seen == {"", "*", "**"}


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=3, max_size=30))
def test_pearson_symmetric_and_bounded(pairs):
    x = [a for a, _ in pairs]
    y = [b for _, b in pairs]
    try:
        r = pearson(x, y)
    except CorrelationUndefined:
        return
    assert -1 <= r.r <= 1
    assert r.r == pytest.approx(pearson(y, x).r, abs=1e-12)


def test_pearson_undefined():
    with pytest.raises(CorrelationUndefined, match="at least 3"):
        pearson([1, 2], [3, 4])
    with pytest.raises(CorrelationUndefined, match="zero variance"):
        pearson([1, 1, 1], [1, 2, 3])


def test_correlation_table_cases():
    rai = {"A": 10.0, "B": 20.0, "C": None, "D": 40.0, "E": 35.0}
    nsrp = {"A": 5.0, "B": 1.0, "C": 0.0, "D": 9.0, "E": 2.0}
    cov = {"same": dict(rai), "empty": {k: None for k in rai}}
    t = correlation_table({"rai": rai, "nsrp": nsrp}, cov)
    assert t["rai"]["same"]["r"] == pytest.approx(1.0)
    assert t["rai"]["same"]["n"] == 4
    assert t["rai"]["empty"]["r"] is None and t["rai"]["empty"]["n"] == 0
    assert "at least 3" in t["rai"]["empty"]["reason"]
    with pytest.raises(CorrelationUndefined, match="unmatched codes: A, X"):
        correlation_table({"rai": {"A": 1.0}}, {"c": {"X": 2.0}})


def test_planted_correlation_sign_and_interval():
    rng = np.random.default_rng(99)
    x = rng.uniform(0, 100, 10)

    def draw():
        return -0.8 * x + rng.normal(0, 15, 10)

    y = draw()
    t = correlation_table({"rai": dict(enumerate(x))}, {"cov": dict(enumerate(y))})
    r = t["rai"]["cov"]["r"]
    assert r < 0
    # spread of r across fresh draws from the same planted model
    reps = np.array([stats.pearsonr(x, draw())[0] for _ in range(4000)])
    lo, hi = np.quantile(reps, [0.005, 0.995])
    assert lo <= r <= hi
