"""HTTP JSON API for the console: queries stream epoch results by polling."""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field as dc_field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .. import __version__
from ..errors import GenieError, QlangSyntaxError
from ..gridstore.geometry import BBox, TimeInterval, parse_timestamp
from ..qlang.ast import HintClause, HintEntry
from ..qlang.parser import normalize_hint_value
from .core import Engine, Session


class QueryBody(BaseModel):
    text: str


class RefineBody(BaseModel):
    bbox: dict
    hints: dict = {}


@dataclass
class QueryState:
    query_id: str
    text: str
    session: Session
    epochs: list[dict] = dc_field(default_factory=list)
    status: str = "pending"            # pending | running | done | error
    error: str | None = None
    lock: threading.Lock = dc_field(default_factory=threading.Lock)

    def snapshot(self, after: int) -> dict:
        with self.lock:
            return {"query_id": self.query_id, "status": self.status,
                    "error": self.error,
                    "epochs": self.epochs[after:],
                    "next_after": len(self.epochs),
                    "done": self.status in ("done", "error")}


def _meta(t0: float) -> dict:
    return {"engine_version": __version__,
            "timing_ms": round(1000 * (time.perf_counter() - t0), 2)}


def create_app(engine: Engine, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="genie", version=__version__)
    queries: dict[str, QueryState] = {}

    def _run(state: QueryState, generator) -> None:
        with state.lock:
            state.status = "running"
        try:
            for seq, res in enumerate(generator):
                payload = res.to_json()
                with state.lock:
                    payload["seq"] = len(state.epochs)
                    state.epochs.append(payload)
            with state.lock:
                state.status = "done"
        except GenieError as exc:
            with state.lock:
                state.status = "error"
                state.error = str(exc)

    @app.exception_handler(GenieError)
    async def _genie_error(_, exc: GenieError):
        status = 400 if isinstance(exc, QlangSyntaxError) else 422
        body = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, QlangSyntaxError):
            body["line"], body["col"] = exc.line, exc.col
        return JSONResponse(status_code=status, content=body)

    @app.post("/v1/query", status_code=202)
    def submit_query(body: QueryBody):
        t0 = time.perf_counter()
        stream = engine.execute(body.text, session := Session(str(uuid.uuid4())))
        state = QueryState(str(uuid.uuid4()), body.text, session)
        queries[state.query_id] = state
        threading.Thread(target=_run, args=(state, stream), daemon=True).start()
        return {"query_id": state.query_id, **_meta(t0)}

    @app.get("/v1/query/{query_id}/epochs")
    def epochs(query_id: str, after: int = 0):
        t0 = time.perf_counter()
        state = queries.get(query_id)
        if state is None:
            raise HTTPException(404, "unknown query id")
        return {**state.snapshot(after), **_meta(t0)}

    @app.post("/v1/query/{query_id}/refine", status_code=202)
    def refine(query_id: str, body: RefineBody):
        t0 = time.perf_counter()
        state = queries.get(query_id)
        if state is None:
            raise HTTPException(404, "unknown query id")
        box = BBox(body.bbox["lat_min"], body.bbox["lat_max"],
                   body.bbox["lon_min"], body.bbox["lon_max"])
        entries = []
        for key, value in body.hints.items():
            scope, name = (key.split(".", 1) + [None])[:2] if "." in key \
                else (None, key)
            if name is None:
                scope, name = None, key
            entries.append(HintEntry(name, scope, normalize_hint_value(name, value)))
        hint = HintClause(entries) if entries else None
        stream = engine.refine(state.session, box, hint)
        threading.Thread(target=_run, args=(state, stream), daemon=True).start()
        return {"query_id": state.query_id, **_meta(t0)}

    @app.get("/v1/coverage")
    def coverage(attribute: str | None = None):
        t0 = time.perf_counter()
        attr = tuple(attribute.split(".", 1)) if attribute else None
        doc = engine.coverage.to_geojson(attr)
        doc.update(_meta(t0))
        return doc

    @app.get("/v1/field")
    def field(attribute: str,
              lat_min: float, lat_max: float, lon_min: float, lon_max: float,
              res: float, tres: float,
              t: str | None = None,
              fmt: str = Query("grid", alias="format")):
        t0 = time.perf_counter()
        attr = tuple(attribute.split(".", 1))
        if len(attr) != 2:
            raise HTTPException(400, "attribute must be table.column")
        box = BBox(lat_min, lat_max, lon_min, lon_max)
        grid_field, valid = engine.store.read_window(
            attr, box, engine.domain.interval, res, tres)
        starts = grid_field.timestep_starts()
        if t is not None:
            ts = parse_timestamp(t)
            t_index = int(max(0, min(grid_field.nt - 1,
                                     (ts - grid_field.interval.start)
                                     // round(tres * 3600))))
        else:
            t_index = None
        if fmt == "geojson":
            doc = grid_field.to_geojson(t_index or 0)
            doc.update(_meta(t0))
            return doc
        vals = grid_field.values[:, :, t_index] if t_index is not None \
            else grid_field.values.max(axis=2)
        mask = valid[:, :, t_index] if t_index is not None else valid.any(axis=2)
        return {
            "attribute": attribute,
            "bbox": grid_field.bbox.to_json(),
            "spatial_res": grid_field.spatial_res,
            "temporal_res": grid_field.temporal_res,
            "t_index": t_index,
            "timesteps": [int(s) for s in starts],
            "values": [[round(float(v), 6) for v in row] for row in vals],
            "valid": [[bool(b) for b in row] for row in mask],
            "min": float(vals[mask].min()) if mask.any() else 0.0,
            "max": float(vals[mask].max()) if mask.any() else 0.0,
            **_meta(t0),
        }

    @app.get("/v1/catalog")
    def catalog():
        t0 = time.perf_counter()
        doc = engine.catalog.to_json()
        doc["domain"] = engine.domain.to_json()
        stations = engine.store.table("monitoring_stations")
        doc["stations"] = [
            {"station_id": r.get("station_id"), "lat": r.get("lat"),
             "lon": r.get("lon"), "name": r.get("station_name")}
            for r in (stations.rows if stations else [])]
        doc.update(_meta(t0))
        return doc

    if static_dir is not None and Path(static_dir).exists():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="console")
    return app


def serve(engine: Engine, port: int, static_dir: str | Path | None = None) -> None:
    import uvicorn
    app = create_app(engine, static_dir)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
