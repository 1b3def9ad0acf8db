import numpy as np
import pytest

from genie.coverage import CoverageEntry, CoverageMap, QueryLog
from genie.gridstore import BBox, TimeInterval, hours_to_seconds

ATTR = ("smoke_dispersion", "concentration")
PAIRS = [(0.16, 1.0), (0.08, 0.5), (0.04, 0.25), (0.02, 0.25), (0.01, 0.25)]


def _entry(domain, rng, sres, tres) -> CoverageEntry:
    su, ts = round(sres * 1e6), hours_to_seconds(tres)
    n_i = round(domain.bbox.height_deg * 1e6) // su
    n_j = round(domain.bbox.width_deg * 1e6) // su
    n_t = domain.interval.duration_s // ts
    i0, i1 = sorted(rng.choice(n_i + 1, size=2, replace=False))
    j0, j1 = sorted(rng.choice(n_j + 1, size=2, replace=False))
    t0, t1 = sorted(rng.choice(n_t + 1, size=2, replace=False))
    return CoverageEntry(
        ATTR,
        BBox(domain.bbox.lat_min + i0 * sres, domain.bbox.lat_min + i1 * sres,
             domain.bbox.lon_min + j0 * sres, domain.bbox.lon_min + j1 * sres),
        TimeInterval(domain.interval.start + t0 * ts, domain.interval.start + t1 * ts),
        sres, tres)


def oracle_uncovered(domain, entries, extent, interval, sres, tres):
    """Per-cell scan: requested cell uncovered unless an entry contains it
    at finer-or-equal resolution on both axes.  Independent arithmetic in
    integer micro-degrees / seconds."""
    su, ts = round(sres * 1e6), hours_to_seconds(tres)
    o_lat = round(domain.bbox.lat_min * 1e6)
    o_lon = round(domain.bbox.lon_min * 1e6)
    o_t = domain.interval.start
    n_i = (round(domain.bbox.lat_max * 1e6) - o_lat) // su
    n_j = (round(domain.bbox.lon_max * 1e6) - o_lon) // su
    n_t = (min(domain.interval.end, 10**18) - o_t) // ts
    lat_lo = o_lat + np.arange(n_i) * su
    lon_lo = o_lon + np.arange(n_j) * su
    t_lo = o_t + np.arange(n_t) * ts
    requested = np.zeros((n_i, n_j, n_t), dtype=bool)
    for b in extent:
        requested |= ((lat_lo[:, None, None] + su > round(b.lat_min * 1e6))
                      & (lat_lo[:, None, None] < round(b.lat_max * 1e6))
                      & (lon_lo[None, :, None] + su > round(b.lon_min * 1e6))
                      & (lon_lo[None, :, None] < round(b.lon_max * 1e6))
                      & (t_lo[None, None, :] + ts > interval.start)
                      & (t_lo[None, None, :] < interval.end))
    covered = np.zeros_like(requested)
    for e in entries:
        if round(e.spatial_res * 1e6) > su or hours_to_seconds(e.temporal_res) > ts:
            continue
        covered |= ((lat_lo[:, None, None] >= round(e.bbox.lat_min * 1e6))
                    & (lat_lo[:, None, None] + su <= round(e.bbox.lat_max * 1e6))
                    & (lon_lo[None, :, None] >= round(e.bbox.lon_min * 1e6))
                    & (lon_lo[None, :, None] + su <= round(e.bbox.lon_max * 1e6))
                    & (t_lo[None, None, :] >= e.interval.start)
                    & (t_lo[None, None, :] + ts <= e.interval.end))
    return requested & ~covered, (lat_lo, lon_lo, t_lo, su, ts)


def gapset_as_mask(domain, gaps, shape, su, ts):
    o_lat = round(domain.bbox.lat_min * 1e6)
    o_lon = round(domain.bbox.lon_min * 1e6)
    o_t = domain.interval.start
    mask = np.zeros(shape, dtype=bool)
    for box, iv in gaps:
        i0 = (round(box.lat_min * 1e6) - o_lat) // su
        i1 = (round(box.lat_max * 1e6) - o_lat) // su
        j0 = (round(box.lon_min * 1e6) - o_lon) // su
        j1 = (round(box.lon_max * 1e6) - o_lon) // su
        t0 = (iv.start - o_t) // ts
        t1 = (iv.end - o_t) // ts
        assert not mask[i0:i1, j0:j1, t0:t1].any(), "gap rectangles overlap"
        mask[i0:i1, j0:j1, t0:t1] = True
    return mask


def test_self_coverage_leaves_no_gaps(small_domain):
    cov = CoverageMap(small_domain)
    e = CoverageEntry(ATTR, BBox(0.0, 0.16, 10.0, 10.32),
                      TimeInterval.from_strings("2024-01-01", "2024-01-01 02:00"),
                      0.04, 0.5)
    cov.record(e)
    gaps = cov.find_gaps(ATTR, [e.bbox], e.interval, 0.04, 0.5)
    assert gaps.empty
    assert gaps.requested_cells == 4 * 8 * 4


def test_coarse_does_not_satisfy_fine(small_domain):
    cov = CoverageMap(small_domain)
    box = BBox(0.0, 0.16, 10.0, 10.16)
    iv = TimeInterval.from_strings("2024-01-01", "2024-01-01 01:00")
    cov.record(CoverageEntry(ATTR, box, iv, 0.16, 1.0))
    gaps = cov.find_gaps(ATTR, [box], iv, 0.01, 0.25)
    assert gaps.uncovered_cells == gaps.requested_cells == 16 * 16 * 4


def test_fine_satisfies_coarse_resolution_reuse(small_domain):
    cov = CoverageMap(small_domain)
    cov.record(CoverageEntry(ATTR, small_domain.bbox, small_domain.interval, 0.01, 0.25))
    gaps = cov.find_gaps(ATTR, [small_domain.bbox], small_domain.interval, 0.16, 1.0)
    assert gaps.empty
    rep = cov.classify_reuse(ATTR, [small_domain.bbox], small_domain.interval, 0.16, 1.0)
    assert rep.covered_fraction == 1.0
    assert "resolution" in rep.kinds


def test_cold_store_full_gap(small_domain):
    cov = CoverageMap(small_domain)
    gaps = cov.find_gaps(ATTR, [small_domain.bbox], small_domain.interval, 0.08, 0.5)
    assert len(gaps) == 1
    box, iv = gaps.gaps[0]
    assert box == small_domain.bbox and iv == small_domain.interval


def test_left_half_covered_gap_is_right_half(small_domain):
    cov = CoverageMap(small_domain)
    left = BBox(0.0, 0.64, 10.0, 10.32)
    cov.record(CoverageEntry(ATTR, left, small_domain.interval, 0.08, 0.5))
    gaps = cov.find_gaps(ATTR, [small_domain.bbox], small_domain.interval, 0.08, 0.5)
    assert len(gaps) == 1
    box, iv = gaps.gaps[0]
    assert box == BBox(0.0, 0.64, 10.32, 10.64)
    assert iv == small_domain.interval


@pytest.mark.parametrize("seed", range(12))
def test_find_gaps_matches_per_cell_oracle(small_domain, seed):
    rng = np.random.default_rng(500 + seed)
    cov = CoverageMap(small_domain)
    entries = []
    for _ in range(rng.integers(0, 20)):
        sres, tres = PAIRS[rng.integers(0, len(PAIRS))]
        e = _entry(small_domain, rng, sres, tres)
        entries.append(e)
        cov.record(e)
    sres, tres = PAIRS[rng.integers(0, len(PAIRS))]
    req = _entry(small_domain, rng, sres, tres)
    extent, interval = [req.bbox], req.interval
    gaps = cov.find_gaps(ATTR, extent, interval, sres, tres)
    oracle, (lat_lo, lon_lo, t_lo, su, ts) = oracle_uncovered(
        small_domain, entries, extent, interval, sres, tres)
    got = gapset_as_mask(small_domain, gaps.gaps, oracle.shape, su, ts)
    assert np.array_equal(got, oracle)


def test_monotonicity_adding_coverage_never_grows_gaps(small_domain):
    rng = np.random.default_rng(77)
    cov = CoverageMap(small_domain)
    req_box, req_iv = small_domain.bbox, small_domain.interval
    prev = cov.find_gaps(ATTR, [req_box], req_iv, 0.04, 0.5).uncovered_cells
    for _ in range(15):
        sres, tres = PAIRS[rng.integers(0, 3)]
        cov.record(_entry(small_domain, rng, sres, tres))
        cur = cov.find_gaps(ATTR, [req_box], req_iv, 0.04, 0.5).uncovered_cells
        assert cur <= prev
        prev = cur


def test_classify_reuse_disjoint_history(small_domain):
    cov = CoverageMap(small_domain)
    cov.record(CoverageEntry(ATTR, BBox(0.0, 0.16, 10.0, 10.16),
                             TimeInterval.from_strings("2024-01-01", "2024-01-01 01:00"),
                             0.04, 0.25))
    rep = cov.classify_reuse(ATTR, [BBox(0.32, 0.64, 10.32, 10.64)],
                             TimeInterval.from_strings("2024-01-01 02:00",
                                                       "2024-01-01 04:00"),
                             0.04, 0.25)
    assert rep.covered_fraction == 0.0
    assert rep.kinds == frozenset()


def test_classify_reuse_identical_repeat(small_domain):
    cov = CoverageMap(small_domain)
    box = BBox(0.0, 0.32, 10.0, 10.32)
    iv = TimeInterval.from_strings("2024-01-01", "2024-01-01 02:00")
    cold = cov.find_gaps(ATTR, [box], iv, 0.08, 0.5)
    cov.record(CoverageEntry(ATTR, box, iv, 0.08, 0.5))
    rep = cov.classify_reuse(ATTR, [box], iv, 0.08, 0.5)
    assert rep.covered_fraction == 1.0
    assert rep.avoided_invocations == len(cold)


def test_classify_reuse_spatial_neighbour(small_domain):
    cov = CoverageMap(small_domain)
    cov.record(CoverageEntry(ATTR, BBox(0.0, 0.32, 10.0, 10.32),
                             small_domain.interval, 0.08, 0.5))
    rep = cov.classify_reuse(ATTR, [BBox(0.16, 0.48, 10.16, 10.48)],
                             small_domain.interval, 0.08, 0.5)
    assert 0.0 < rep.covered_fraction < 1.0
    assert "spatial" in rep.kinds


def test_invalidate_drops_entries(small_domain):
    cov = CoverageMap(small_domain)
    box = BBox(0.0, 0.16, 10.0, 10.16)
    cov.record(CoverageEntry(ATTR, box, small_domain.interval, 0.04, 0.25))
    assert cov.invalidate(ATTR, box) == 1
    gaps = cov.find_gaps(ATTR, [box], small_domain.interval, 0.04, 0.25)
    assert not gaps.empty


def test_query_log_append_and_totals(tmp_path):
    log = QueryLog(tmp_path / "log.jsonl")
    log.log_query({"query_hash": "a", "invocations": 3, "estimated_s": 10.0,
                   "bytes_materialized": 100})
    log.log_query({"query_hash": "b", "invocations": 1, "estimated_s": 5.0,
                   "bytes_materialized": 50})
    assert [r["query_hash"] for r in log.records()] == ["a", "b"]
    totals = log.totals()
    assert totals["invocations"] == 4
    assert totals["estimated_s"] == 15.0
    # a reopened log replays to the same totals
    again = QueryLog(tmp_path / "log.jsonl")
    assert again.totals() == totals


def test_empty_log_zero_totals():
    log = QueryLog()
    assert log.totals() == {"invocations": 0, "estimated_s": 0,
                            "bytes_materialized": 0}
