import numpy as np
import pytest

from genie.errors import CoverageMiss, DomainExceeded
from genie.gridstore import (BBox, GridField, GridStore, TimeInterval,
                             hours_to_seconds, mask_to_regions)

ATTR = ("smoke_dispersion", "concentration")

# ladder pairs move both axes together so replacement ordering is total
PAIRS = [(0.16, 1.0), (0.08, 0.5), (0.04, 0.25), (0.02, 0.25), (0.01, 0.25)]


def _aligned_field(domain, rng, sres, tres, fill=None):
    su = round(sres * 1e6)
    ts = hours_to_seconds(tres)
    n_i = round(domain.bbox.height_deg * 1e6) // su
    n_j = round(domain.bbox.width_deg * 1e6) // su
    n_t = domain.interval.duration_s // ts
    i0, i1 = sorted(rng.choice(n_i + 1, size=2, replace=False))
    j0, j1 = sorted(rng.choice(n_j + 1, size=2, replace=False))
    t0, t1 = sorted(rng.choice(n_t + 1, size=2, replace=False))
    bbox = BBox(domain.bbox.lat_min + i0 * sres, domain.bbox.lat_min + i1 * sres,
                domain.bbox.lon_min + j0 * sres, domain.bbox.lon_min + j1 * sres)
    iv = TimeInterval(domain.interval.start + t0 * ts, domain.interval.start + t1 * ts)
    shape = (i1 - i0, j1 - j0, t1 - t0)
    vals = np.full(shape, fill) if fill is not None else rng.uniform(0, 100, shape)
    return GridField(ATTR, bbox, iv, sres, tres, vals)


def _replay(domain, events):
    """Independent per-cell event replay on the finest lattice."""
    fres, ftres = 0.01, 0.25
    fsu, fts = round(fres * 1e6), hours_to_seconds(ftres)
    n_i = round(domain.bbox.height_deg * 1e6) // fsu
    n_j = round(domain.bbox.width_deg * 1e6) // fsu
    n_t = domain.interval.duration_s // fts
    val = np.full((n_i, n_j, n_t), np.nan)
    cur_s = np.full((n_i, n_j, n_t), np.inf)
    cur_t = np.full((n_i, n_j, n_t), np.inf)
    for f in events:
        ks = round(f.spatial_res / fres)
        kt = round(f.temporal_res / ftres)
        i0 = round((f.bbox.lat_min - domain.bbox.lat_min) / fres)
        j0 = round((f.bbox.lon_min - domain.bbox.lon_min) / fres)
        t0 = (f.interval.start - domain.interval.start) // fts
        big = np.repeat(np.repeat(np.repeat(f.values, ks, 0), ks, 1), kt, 2)
        sl = (slice(i0, i0 + big.shape[0]), slice(j0, j0 + big.shape[1]),
              slice(t0, t0 + big.shape[2]))
        wins = (np.isnan(val[sl])
                | ((f.spatial_res <= cur_s[sl]) & (f.temporal_res <= cur_t[sl])))
        val[sl] = np.where(wins, big, val[sl])
        cur_s[sl] = np.where(wins, f.spatial_res, cur_s[sl])
        cur_t[sl] = np.where(wins, f.temporal_res, cur_t[sl])
    return val


def test_materialize_into_empty_store_is_all_new(small_domain):
    store = GridStore(small_domain)
    rng = np.random.default_rng(0)
    f = _aligned_field(small_domain, rng, 0.04, 0.25)
    rep = store.materialize(f)
    assert rep.all_new
    assert rep.new_cells == f.cell_count


def test_fine_replaces_coarse_and_not_vice_versa(small_domain):
    store = GridStore(small_domain)
    coarse = GridField(ATTR, small_domain.bbox, small_domain.interval, 0.16, 1.0,
                       np.full((4, 4, 4), 1.0))
    store.materialize(coarse)
    fine = GridField(ATTR, BBox(0.0, 0.16, 10.0, 10.16),
                     TimeInterval(small_domain.interval.start,
                                  small_domain.interval.start + 3600),
                     0.04, 0.25, np.full((4, 4, 4), 9.0))
    rep = store.materialize(fine)
    assert rep.replaced_cells == fine.cell_count and rep.retained_cells == 0
    assert len(rep.replaced_extents) == 1
    # a later coarse write over the refined region replaces nothing
    again = store.materialize(coarse)
    assert again.replaced_cells < coarse.cell_count
    assert again.retained_cells >= 1
    got = store.read(ATTR, fine.bbox, fine.interval, 0.04, 0.25)
    assert np.allclose(got.values, 9.0)


def test_read_identity_at_stored_resolution(small_domain):
    store = GridStore(small_domain)
    rng = np.random.default_rng(1)
    f = _aligned_field(small_domain, rng, 0.02, 0.25)
    store.materialize(f)
    got = store.read(ATTR, f.bbox, f.interval, 0.02, 0.25)
    assert np.array_equal(got.values, f.values)


def test_read_coarser_is_block_mean(small_domain):
    store = GridStore(small_domain)
    vals = np.random.default_rng(2).uniform(0, 10, (8, 8, 4))
    f = GridField(ATTR, BBox(0.0, 0.08, 10.0, 10.08),
                  TimeInterval(small_domain.interval.start,
                               small_domain.interval.start + 4 * 900),
                  0.01, 0.25, vals)
    store.materialize(f)
    got = store.read(ATTR, f.bbox, f.interval, 0.02, 0.5)
    expect = vals.reshape(4, 2, 4, 2, 2, 2).mean(axis=(1, 3, 5))
    assert np.allclose(got.values, expect, rtol=1e-12)


def test_read_uncovered_raises(small_domain):
    store = GridStore(small_domain)
    with pytest.raises(CoverageMiss):
        store.read(ATTR, small_domain.bbox, small_domain.interval, 0.16, 1.0)
    rng = np.random.default_rng(3)
    store.materialize(_aligned_field(small_domain, rng, 0.16, 1.0))
    # a coarse field never satisfies a finer request
    with pytest.raises(CoverageMiss):
        store.read(ATTR, small_domain.bbox, small_domain.interval, 0.01, 0.25)


def test_domain_exceeded(small_domain):
    store = GridStore(small_domain)
    f = GridField(ATTR, BBox(0.0, 0.16, 9.0, 9.16),
                  TimeInterval(small_domain.interval.start,
                               small_domain.interval.start + 3600),
                  0.04, 0.25, np.zeros((4, 4, 4)))
    with pytest.raises(DomainExceeded):
        store.materialize(f)


@pytest.mark.parametrize("seed", range(8))
def test_replacement_matches_replay_oracle(small_domain, seed):
    rng = np.random.default_rng(100 + seed)
    store = GridStore(small_domain)
    events = []
    for _ in range(rng.integers(3, 12)):
        sres, tres = PAIRS[rng.integers(0, len(PAIRS))]
        f = _aligned_field(small_domain, rng, sres, tres)
        events.append(f)
        store.materialize(f)
    replay = _replay(small_domain, events)
    state, _ = store.resolve_state(ATTR, small_domain.bbox, small_domain.interval)
    # lattice of resolve_state is the gcd of involved resolutions; expand to finest
    ks = replay.shape[0] // state.shape[0]
    kt = replay.shape[2] // state.shape[2]
    state = np.repeat(np.repeat(np.repeat(state, ks, 0), ks, 1), kt, 2)
    assert np.array_equal(np.isnan(state), np.isnan(replay))
    mask = ~np.isnan(replay)
    assert np.array_equal(state[mask], replay[mask])


def test_read_provenance_traces_to_materializations(small_domain):
    rng = np.random.default_rng(9)
    store = GridStore(small_domain)
    f1 = _aligned_field(small_domain, rng, 0.08, 0.5)
    f2 = _aligned_field(small_domain, rng, 0.02, 0.25)
    store.materialize(f1)
    store.materialize(f2)
    seqs = store.read_provenance(ATTR, f1.bbox, f1.interval, 0.08, 0.5)
    assert set(np.unique(seqs)) <= {0, 1, 2}
    assert (seqs > 0).any()


def test_persistence_roundtrip_and_crash_orphans(small_domain, tmp_path):
    rng = np.random.default_rng(4)
    store = GridStore(small_domain, tmp_path / "data")
    f = _aligned_field(small_domain, rng, 0.04, 0.25)
    store.materialize(f, epoch=2, runtime_s=1.5)
    # simulate a crash mid-materialize: orphan field file, manifest untouched
    orphan = tmp_path / "data" / "fields" / "smoke_dispersion.concentration" / "99999999.gfd"
    orphan.write_bytes(f.to_bytes())
    (tmp_path / "data" / "junk.gfd.tmp").write_bytes(b"partial")
    reopened = GridStore(small_domain, tmp_path / "data")
    fields = reopened.fields(ATTR)
    assert len(fields) == 1
    assert fields[0].epoch == 2
    got = reopened.read(ATTR, f.bbox, f.interval, f.spatial_res, f.temporal_res)
    # float32 on disk: values round-trip at float32 precision
    assert np.allclose(got.values, f.values, rtol=1e-6)


def test_ingest_stations_csv(tmp_path, small_domain):
    csv = tmp_path / "stations.csv"
    csv.write_text("station_id,lat,lon,station_name,station_type\n"
                   "1,0.10,10.10,Alpha,urban\n2,0.20,10.20,Beta,rural\n")
    store = GridStore(small_domain)
    t = store.ingest("monitoring_stations", csv, primary_key="station_id")
    assert len(t) == 2
    assert t.points() == [(0.10, 10.10), (0.20, 10.20)]


def test_ingest_rejects_bad_latitude(tmp_path):
    csv = tmp_path / "bad.csv"
    csv.write_text("station_id,lat,lon\n1,91.0,10.0\n")
    from genie.errors import ParseError
    from genie.gridstore import ingest_table
    with pytest.raises(ParseError, match="row 2"):
        ingest_table("s", csv)


def test_ingest_empty_csv_with_header(tmp_path):
    csv = tmp_path / "empty.csv"
    csv.write_text("station_id,lat,lon\n")
    from genie.gridstore import ingest_table
    t = ingest_table("s", csv, columns=["station_id", "location"])
    assert len(t) == 0
