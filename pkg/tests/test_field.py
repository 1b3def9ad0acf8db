import numpy as np
import pytest

from genie.errors import GenieError, NonIntegerRatio
from genie.gridstore import BBox, GridField, TimeInterval


def _field(values, sres=0.01, tres=0.25, lat0=36.2, lon0=-120.4, t0="2024-08-15"):
    values = np.asarray(values, dtype=float)
    nlat, nlon, nt = values.shape
    bbox = BBox(lat0, lat0 + nlat * sres, lon0, lon0 + nlon * sres)
    start = TimeInterval.from_strings(t0, t0).start
    iv = TimeInterval(start, start + round(nt * tres * 3600))
    return GridField(("smoke_dispersion", "concentration"), bbox, iv, sres, tres, values)


def test_shape_validation():
    with pytest.raises(GenieError):
        GridField(("t", "c"), BBox(0, 0.02, 0, 0.02),
                  TimeInterval(0, 3600), 0.01, 1.0, np.zeros((3, 2, 1)))


def test_nonfinite_rejected():
    vals = np.zeros((2, 2, 1))
    vals[0, 0, 0] = np.nan
    with pytest.raises(GenieError):
        _field(vals)


def test_block_mean_single_cell():
    f = _field(np.array([[[1.0], [2.0]], [[3.0], [4.0]]]))
    g = f.aggregate(0.02, 0.25)
    assert g.values.shape == (1, 1, 1)
    assert g.values[0, 0, 0] == 2.5


def test_uniform_field_stays_uniform():
    f = _field(np.full((4, 4, 4), 3.7))
    g = f.aggregate(0.04, 1.0)
    assert np.allclose(g.values, 3.7)


def test_block_mean_matches_bruteforce_oracle():
    rng = np.random.default_rng(11)
    vals = rng.uniform(0, 100, size=(8, 8, 4))
    f = _field(vals)
    g = f.aggregate(0.02, 0.5)
    # independent per-block mean
    expect = np.zeros((4, 4, 2))
    for i in range(4):
        for j in range(4):
            for t in range(2):
                expect[i, j, t] = vals[2 * i:2 * i + 2, 2 * j:2 * j + 2,
                                       2 * t:2 * t + 2].mean()
    assert np.array_equal(g.values, expect)


def test_aggregation_is_consistent_across_rungs():
    rng = np.random.default_rng(5)
    f = _field(rng.uniform(0, 10, size=(8, 8, 8)))
    once = f.aggregate(0.04, 1.0)
    twice = f.aggregate(0.02, 0.5).aggregate(0.04, 1.0)
    assert np.allclose(once.values, twice.values, rtol=1e-12)


def test_non_integer_ratio_rejected():
    f = _field(np.zeros((4, 4, 2)))
    with pytest.raises(NonIntegerRatio):
        f.aggregate(0.03, 0.25)
    with pytest.raises(NonIntegerRatio):
        f.aggregate(0.005, 0.25)


def test_bytes_roundtrip_preserves_metadata():
    rng = np.random.default_rng(2)
    f = _field(rng.uniform(0, 50, size=(3, 5, 2)).astype(np.float32))
    g = GridField.from_bytes(f.to_bytes())
    assert g.attribute == f.attribute
    assert g.bbox == f.bbox
    assert g.interval == f.interval
    assert g.spatial_res == f.spatial_res
    # float32 on disk: values already float32-exact here, so identical
    assert np.array_equal(g.values, f.values)
    # and the serialization itself is deterministic
    assert g.to_bytes() == f.to_bytes()


def test_geojson_cells(domain):
    f = _field(np.arange(4.0).reshape(2, 2, 1))
    doc = f.to_geojson(0)
    assert len(doc["features"]) == 4
    assert doc["features"][0]["properties"]["value"] == 0.0
