import numpy as np
import pytest

from genie.engine import Engine, EngineConfig, Session
from genie.engine.bench import answer_accuracy, bench_reuse, bundled_query
from genie.errors import ConflictingHints, NoPriorQuery, UnknownColumn
from genie.gridstore import BBox
from genie.qlang import parse
from genie.qlang.ast import HintClause, HintEntry

from corpus_util import corpus_text

STATION_IMPACT = corpus_text("station_impact.sql")
HINTED = """
SELECT station_id, AVG(concentration) AS avg_conc
  FROM monitoring_stations s
  JOIN smoke_dispersion d ON ST_DWithin(s.location, d.grid_cell, 5000)
 WHERE d.timestamp BETWEEN '2024-08-15 00:00' AND '2024-08-17 00:00'
GROUP BY station_id
WITH HINT (spatial_res=0.5, temporal_res=6);
"""


@pytest.fixture(scope="module")
def engine():
    eng = Engine(EngineConfig(auto_epoch3=True))
    yield eng
    eng.close()


def test_ddl_applies_synchronously(engine):
    assert "hysplit" in engine.catalog.simulators
    assert engine.catalog.virtual_column("smoke_dispersion", "concentration")
    assert len(engine.store.table("monitoring_stations")) == 45


def test_station_query_epochs_and_reuse(engine):
    engine.reset_state()
    results = list(engine.execute(STATION_IMPACT))
    assert [r.epoch for r in results] == [1, 2, 3]
    assert results[0].invocations > 0
    assert results[0].covered_fraction == 0.0
    # epoch resolutions never coarsen
    assert results[0].spatial_res >= results[-1].spatial_res
    # identical repeat: nothing regenerates anywhere in the stream
    again = list(engine.execute(STATION_IMPACT))
    assert sum(r.invocations for r in again) == 0
    assert again[0].covered_fraction == 1.0
    # and answers are reproducible
    assert again[-1].rows == list(engine.execute(STATION_IMPACT))[-1].rows


def test_hinted_query_single_epoch(engine):
    engine.reset_state()
    results = list(engine.execute(HINTED))
    assert len(results) == 1
    assert results[0].spatial_res == 0.5
    repeat = list(engine.execute(HINTED))
    assert len(repeat) == 1
    assert repeat[0].invocations == 0


def test_unknown_column_bind_error(engine):
    with pytest.raises(UnknownColumn):
        list(engine.execute("SELECT bogus FROM smoke_dispersion;"))


def test_stored_only_query(engine):
    rows = list(engine.execute(
        "SELECT COUNT(station_id) AS n FROM monitoring_stations;"))[-1].rows
    assert rows == [{"n": 45}]


def test_every_invocation_logged(engine):
    engine.reset_state()
    before = engine.query_log.totals()["invocations"]
    results = list(engine.execute(HINTED))
    after = engine.query_log.totals()["invocations"]
    assert after - before == sum(r.invocations for r in results)


FULL_HINTED = """
SELECT AVG(concentration) AS avg_conc
  FROM smoke_dispersion
 WHERE timestamp BETWEEN '2024-08-15 00:00' AND '2024-08-18 00:00'
WITH HINT (spatial_res=0.5, temporal_res=6);
"""


def test_refine_zero_when_covered_and_gaps_when_not(engine):
    engine.reset_state()
    session = Session("s1")
    list(engine.execute(FULL_HINTED, session))
    region = BBox(36.7, 37.0, -120.2, -119.8)
    # same resolution as the prior query: fully covered, no invocations
    res = list(engine.refine(session, region,
                             HintClause([HintEntry("spatial_res", None, 0.5),
                                         HintEntry("temporal_res", None, 6.0)])))
    assert sum(r.invocations for r in res) == 0
    # a finer request over one hotspot generates exactly its gap
    res = list(engine.refine(session, region,
                             HintClause([HintEntry("spatial_res", None, 0.1),
                                         HintEntry("temporal_res", None, 1.0)])))
    assert sum(r.invocations for r in res) > 0
    gaps = engine.coverage.find_gaps(("smoke_dispersion", "concentration"),
                                     [region], engine.domain.interval, 0.1, 1.0)
    assert gaps.empty


def test_refine_requires_prior_query(engine):
    with pytest.raises(NoPriorQuery):
        list(engine.refine(Session("fresh"), BBox(36.5, 36.6, -120, -119.9)))


def test_refine_conflicting_hints(engine):
    session = Session("s2")
    list(engine.execute(FULL_HINTED, session))
    # a bare key and a scoped key for the same parameter with different
    # values have no defined precedence
    with pytest.raises(ConflictingHints):
        list(engine.refine(session, BBox(36.5, 36.7, -120.0, -119.8),
                           HintClause([HintEntry("spatial_res", None, 0.05),
                                       HintEntry("spatial_res", "hysplit", 0.1)])))


def test_warm_start_zero_budget(engine):
    engine.reset_state()
    assert engine.warm_start(0.0) == []


def test_warm_start_full_and_partial(engine):
    engine.reset_state()
    entries = engine.warm_start(1e9)
    attrs = {e.attribute for e in entries}
    assert attrs == {("fire_emissions", "emission_rate"),
                     ("smoke_dispersion", "concentration")}
    assert all(e.epoch == 0 for e in entries)
    for attr in attrs:
        gaps = engine.coverage.find_gaps(attr, [engine.domain.bbox],
                                         engine.domain.interval, 0.5, 6.0)
        assert gaps.empty
    total_estimate = _warm_total_estimate(engine)

    engine.reset_state()
    half = engine.warm_start(total_estimate * 0.5)
    assert 0 < len(half) < len(entries)
    # estimate-driven tiling oracle: greedy prefix of the same tile walk
    oracle = _warm_oracle_prefix(engine, total_estimate * 0.5)
    assert [(e.attribute, e.bbox) for e in half] == oracle


def _warm_tiles(engine):
    domain = engine.domain
    sres, tres = domain.spatial_ladder[0], domain.temporal_ladder[0]
    spec = domain.grid(sres, tres)
    box, iv = spec.snap_outward(domain.bbox, domain.interval)
    (i0, i1), (j0, j1), _ = spec.cells_intersecting(domain.bbox, domain.interval)
    estimator = engine._estimator()
    order = []
    for vdef in engine.catalog.virtual_columns():
        for item in engine.catalog.topo_order(vdef.attribute):
            if item[0].attribute not in {a for a, _ in order}:
                pass
    seen = set()
    chain = []
    for vdef in engine.catalog.virtual_columns():
        for item in engine.catalog.topo_order(vdef.attribute):
            if item[0].attribute not in seen:
                seen.add(item[0].attribute)
                chain.append(item)
    for vdef, reg in chain:
        for i in range(i0, i1):
            for j in range(j0, j1):
                tile = spec.cell_bbox(i, j)
                est, _ = estimator(vdef.simulators[0],
                                   {"spatial_res": sres, "temporal_res": tres,
                                    "particle_count": 1000},
                                   tile.area_deg2, iv)
                order.append((vdef.attribute, tile, est))
    return order


def _warm_total_estimate(engine):
    return sum(est for _, _, est in _warm_tiles(engine))


def _warm_oracle_prefix(engine, budget):
    out, spent = [], 0.0
    for attr, tile, est in _warm_tiles(engine):
        if spent + est > budget:
            break
        spent += est
        out.append((attr, tile))
    return out


def test_crash_safe_restart_replans_only_gaps(tmp_path):
    cfg = EngineConfig(data_dir=str(tmp_path / "state"))
    eng = Engine(cfg)
    try:
        first = list(eng.execute(HINTED))
        assert sum(r.invocations for r in first) > 0
        # leftover temp file simulates a crash between write and link
        (tmp_path / "state" / "store" / "orphan.gfd.tmp").write_bytes(b"xx")
    finally:
        eng.close()
    eng2 = Engine(EngineConfig(data_dir=str(tmp_path / "state")))
    try:
        again = list(eng2.execute(HINTED))
        assert sum(r.invocations for r in again) == 0
        rows_a = first[-1].rows
        rows_b = again[-1].rows
        # float32 on disk: values match at single precision
        assert answer_accuracy(rows_a, rows_b) == pytest.approx(1.0, abs=1e-6)
    finally:
        eng2.close()


def test_bench_reuse_single_query_identical_modes():
    single = bundled_query("workload_reuse.sql").split(";")[0] + ";"
    with pytest.raises(ValueError):
        bench_reuse(single + "\n")
    two = single + "\n" + single
    report = bench_reuse(two)
    # a workload of one repeated query: the second run reuses everything
    assert report.without_reuse.queries[0].invocations == \
        report.with_reuse.queries[0].invocations


def test_answer_accuracy_metric():
    a = [{"station_id": 1, "v": 10.0}, {"station_id": 2, "v": 20.0}]
    assert answer_accuracy(a, a) == 1.0
    b = [{"station_id": 1, "v": 11.0}, {"station_id": 2, "v": 19.0}]
    assert answer_accuracy(a, b) == pytest.approx(1.0 - 2.0 / 30.0)
    assert answer_accuracy([], []) == 1.0
