import math

import numpy as np
import pytest

from genie.errors import GenieError
from genie.gridstore import (BBox, Domain, TimeInterval, buffer_extent,
                             parse_timestamp, point_buffer, rectangle_union)


def test_bbox_validation():
    with pytest.raises(GenieError):
        BBox(1.0, 0.0, 0.0, 1.0)
    with pytest.raises(GenieError):
        BBox(0.0, 91.0, 0.0, 1.0)


def test_interval_ordering():
    with pytest.raises(GenieError):
        TimeInterval(10, 5)
    iv = TimeInterval.from_strings("2024-08-15", "2024-08-17 23:59")
    assert iv.duration_s == 2 * 86400 + 23 * 3600 + 59 * 60


def test_parse_timestamp_formats():
    assert parse_timestamp("2024-08-15") == parse_timestamp("2024-08-15 00:00")
    assert parse_timestamp("2024-08-15 06:30:15") - parse_timestamp("2024-08-15") == 23415


def test_equator_buffer_is_unit_box():
    # 111320 m at the equator is one degree on both axes
    box = point_buffer(0.0, 0.0, 111320.0)
    assert box.as_tuple() == pytest.approx((-1.0, 1.0, -1.0, 1.0), abs=1e-9)


def test_disjoint_station_buffers_stay_separate():
    # two stations ~10 km apart, 1 km radius
    pts = [(36.5, -119.5), (36.5, -119.5 + 10.0 / (111.32 * math.cos(math.radians(36.5))))]
    boxes = buffer_extent(pts, 1000.0)
    assert len(boxes) == 2
    assert not boxes[0].intersects(boxes[1])


def _raster_area(boxes, res=0.002):
    lat0 = min(b.lat_min for b in boxes)
    lat1 = max(b.lat_max for b in boxes)
    lon0 = min(b.lon_min for b in boxes)
    lon1 = max(b.lon_max for b in boxes)
    lats = np.arange(lat0 + res / 2, lat1, res)
    lons = np.arange(lon0 + res / 2, lon1, res)
    grid = np.zeros((len(lats), len(lons)), dtype=bool)
    for b in boxes:
        grid |= ((lats[:, None] > b.lat_min) & (lats[:, None] < b.lat_max)
                 & (lons[None, :] > b.lon_min) & (lons[None, :] < b.lon_max))
    return grid.sum() * res * res


def test_union_area_bounded_by_per_station_boxes():
    rng = np.random.default_rng(7)
    pts = [(36.3 + 1.2 * rng.random(), -120.3 + 2.2 * rng.random()) for _ in range(45)]
    boxes = buffer_extent(pts, 5000.0)
    # disjointness
    for i, a in enumerate(boxes):
        for b in boxes[i + 1:]:
            assert not a.intersects(b)
    single = point_buffer(36.9, -119.2, 5000.0)
    union_area = sum(b.area_deg2 for b in boxes)
    assert union_area <= 45 * single.area_deg2 * 1.001
    # union area matches a rasterized oracle of the same union
    assert union_area == pytest.approx(_raster_area(boxes), rel=0.02)


def test_rectangle_union_exactness():
    rng = np.random.default_rng(3)
    for _ in range(50):
        boxes = []
        for _ in range(rng.integers(1, 8)):
            la = rng.uniform(0, 5, 2)
            lo = rng.uniform(0, 5, 2)
            boxes.append(BBox(min(la), max(la) + 0.1, min(lo), max(lo) + 0.1))
        parts = rectangle_union(boxes)
        for i, a in enumerate(parts):
            for b in parts[i + 1:]:
                assert not a.intersects(b)
        assert sum(p.area_deg2 for p in parts) == pytest.approx(_raster_area(boxes), rel=0.05)


def test_domain_ladder_validation():
    with pytest.raises(GenieError):
        Domain(BBox(0, 1, 0, 1), TimeInterval(0, 3600),
               spatial_ladder=(0.5, 0.5), temporal_ladder=(1.0,))
    with pytest.raises(GenieError):
        Domain(BBox(0, 1, 0, 1), TimeInterval(0, 3600),
               spatial_ladder=(0.5, 0.3, 0.2), temporal_ladder=(1.0,))


def test_grid_snap_outward(domain):
    spec = domain.grid(0.5, 6.0)
    box, iv = spec.snap_outward(BBox(36.3, 36.6, -120.0, -119.9),
                                TimeInterval.from_strings("2024-08-15 01:00",
                                                          "2024-08-15 07:00"))
    assert box.as_tuple() == pytest.approx((36.2, 36.7, -120.4, -119.9))
    assert iv == TimeInterval.from_strings("2024-08-15 00:00", "2024-08-15 12:00")
    assert spec.is_aligned(box, iv)


def test_snap_resolution_to_ladder(domain):
    assert domain.snap_spatial(0.5) == 0.5
    assert domain.snap_spatial(0.30) == 0.2     # coarsest step finer-or-equal
    assert domain.snap_spatial(1.0 / 111.32) == pytest.approx(0.01)  # '1km'
    assert domain.snap_temporal(6.0) == 6.0
    assert domain.snap_temporal(2.0) == 1.0
