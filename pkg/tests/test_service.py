import json
import time

import pytest
from fastapi.testclient import TestClient

from genie.engine import Engine, EngineConfig
from genie.engine.service import create_app

from corpus_util import corpus_text


@pytest.fixture(scope="module")
def client():
    engine = Engine(EngineConfig())
    app = create_app(engine)
    with TestClient(app) as c:
        c.engine = engine
        yield c
    engine.close()


def _wait_done(client, qid, timeout=60.0):
    t0 = time.time()
    after = 0
    epochs = []
    while time.time() - t0 < timeout:
        doc = client.get(f"/v1/query/{qid}/epochs", params={"after": after}).json()
        epochs.extend(doc["epochs"])
        after = doc["next_after"]
        if doc["done"]:
            return doc, epochs
        time.sleep(0.05)
    raise TimeoutError("query did not finish")


def test_submit_query_and_stream_epochs(client):
    r = client.post("/v1/query", json={"text": corpus_text("station_average.sql")})
    assert r.status_code == 202
    body = r.json()
    assert "query_id" in body and "engine_version" in body
    doc, epochs = _wait_done(client, body["query_id"])
    assert doc["status"] == "done"
    assert epochs, "expected at least one epoch"
    assert [e["seq"] for e in epochs] == list(range(len(epochs)))
    assert epochs[0]["epoch"] == 1
    assert "rows" in epochs[0] and "latency_s" in epochs[0]


def test_malformed_query_is_syntax_error(client):
    r = client.post("/v1/query", json={"text": "SELECT FROM WHERE;"})
    assert r.status_code == 400
    body = r.json()
    assert body["error"] == "QlangSyntaxError"
    assert body["line"] == 1 and body["col"] >= 1


def test_coverage_endpoint_matches_module_export(client):
    r = client.get("/v1/coverage")
    assert r.status_code == 200
    doc = r.json()
    direct = client.engine.coverage.to_geojson()
    assert len(doc["features"]) == len(direct["features"])
    got = {json.dumps(f["geometry"], sort_keys=True) for f in doc["features"]}
    want = {json.dumps(f["geometry"], sort_keys=True) for f in direct["features"]}
    assert got == want


def test_field_endpoint_grid_payload(client):
    # make sure something is materialized
    r = client.post("/v1/query", json={
        "text": "SELECT AVG(concentration) FROM smoke_dispersion "
                "WITH HINT (spatial_res=0.5, temporal_res=6);"})
    _wait_done(client, r.json()["query_id"])
    r = client.get("/v1/field", params={
        "attribute": "smoke_dispersion.concentration",
        "lat_min": 36.2, "lat_max": 37.7, "lon_min": -120.4, "lon_max": -117.9,
        "res": 0.5, "tres": 6.0})
    assert r.status_code == 200
    doc = r.json()
    assert doc["spatial_res"] == 0.5
    assert len(doc["values"]) == len(doc["valid"])
    assert doc["max"] >= doc["min"]
    geo = client.get("/v1/field", params={
        "attribute": "smoke_dispersion.concentration",
        "lat_min": 36.2, "lat_max": 37.7, "lon_min": -120.4, "lon_max": -117.9,
        "res": 0.5, "tres": 6.0, "format": "geojson", "t": "2024-08-15 06:00"})
    assert geo.status_code == 200
    assert geo.json()["features"]


def test_refine_endpoint(client):
    r = client.post("/v1/query", json={"text": corpus_text("station_average.sql")})
    qid = r.json()["query_id"]
    _, first = _wait_done(client, qid)
    r2 = client.post(f"/v1/query/{qid}/refine", json={
        "bbox": {"lat_min": 36.6, "lat_max": 37.0,
                 "lon_min": -120.3, "lon_max": -119.9},
        "hints": {"spatial_res": 0.05, "temporal_res": 1}})
    assert r2.status_code == 202
    doc, more = _wait_done(client, qid)
    assert doc["status"] == "done"
    assert len(more) >= 1   # refinement epochs appended to the same stream


def test_catalog_endpoint(client):
    doc = client.get("/v1/catalog").json()
    assert {s["name"] for s in doc["simulators"]} >= {"hysplit", "wrf_sfire"}
    assert len(doc["stations"]) == 45
    assert "domain" in doc and "timing_ms" in doc


def test_unknown_query_id(client):
    assert client.get("/v1/query/nope/epochs").status_code == 404
