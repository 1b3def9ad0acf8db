"""The state manager: what has been simulated, where, when, at what settings.

Coverage entries are indexed in an R-tree; gap identification snaps the
requested extent outward to the requested grid and marks cells satisfied
by any entry whose resolution is finer-or-equal on both axes (the rule
that enables resolution reuse).  Uncovered cells are coalesced into
maximal aligned rectangles.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import GenieError
from .gridstore.geometry import (BBox, Domain, TimeInterval, format_timestamp,
                                 hours_to_seconds, to_udeg)
from .gridstore.regions import mask_to_regions
from .gridstore.rtree import RTree


@dataclass(frozen=True)
class CoverageEntry:
    attribute: tuple[str, str]
    bbox: BBox
    interval: TimeInterval
    spatial_res: float      # degrees
    temporal_res: float     # hours
    param_signature: str = ""
    epoch: int = 1
    created_at: float = 0.0
    runtime_s: float = 0.0

    @property
    def sres_u(self) -> int:
        return to_udeg(self.spatial_res)

    @property
    def tres_s(self) -> int:
        return hours_to_seconds(self.temporal_res)

    def to_json(self) -> dict:
        return {"attribute": list(self.attribute), "bbox": self.bbox.to_json(),
                "interval": {"start": self.interval.start, "end": self.interval.end},
                "spatial_res": self.spatial_res, "temporal_res": self.temporal_res,
                "param_signature": self.param_signature, "epoch": self.epoch,
                "created_at": self.created_at, "runtime_s": self.runtime_s}


@dataclass
class GapSet:
    """Uncovered regions at the requested resolution; disjoint and aligned."""

    gaps: list[tuple[BBox, TimeInterval]] = dc_field(default_factory=list)
    requested_cells: int = 0
    uncovered_cells: int = 0

    def __iter__(self):
        return iter(self.gaps)

    def __len__(self) -> int:
        return len(self.gaps)

    @property
    def empty(self) -> bool:
        return not self.gaps


@dataclass
class ReuseReport:
    covered_fraction: float
    kinds: frozenset[str]            # subset of {"spatial", "temporal", "resolution"}
    avoided_invocations: int


class CoverageMap:
    def __init__(self, domain: Domain, strict_signature: bool = False):
        self.domain = domain
        self.strict_signature = strict_signature
        self._entries: dict[tuple[str, str], list[CoverageEntry]] = {}
        self._index: dict[tuple[str, str], RTree] = {}
        self._lock = threading.Lock()

    # -- recording -------------------------------------------------------

    def record(self, entry: CoverageEntry) -> None:
        if not self.domain.on_spatial_ladder(entry.spatial_res):
            raise GenieError(f"spatial_res {entry.spatial_res} not on the ladder")
        if not self.domain.on_temporal_ladder(entry.temporal_res):
            raise GenieError(f"temporal_res {entry.temporal_res} not on the ladder")
        self.domain.check_contains(entry.bbox, entry.interval)
        with self._lock:
            self._entries.setdefault(entry.attribute, []).append(entry)
            self._index.setdefault(entry.attribute, RTree()).insert(entry.bbox, entry)

    def entries(self, attribute: tuple[str, str] | None = None) -> list[CoverageEntry]:
        with self._lock:
            if attribute is not None:
                return list(self._entries.get(attribute, []))
            return [e for lst in self._entries.values() for e in lst]

    def invalidate(self, attribute: tuple[str, str], extent: BBox) -> int:
        """Drop entries intersecting the extent; returns how many were removed."""
        with self._lock:
            keep, dropped = [], 0
            for e in self._entries.get(attribute, []):
                if e.bbox.intersects(extent):
                    dropped += 1
                else:
                    keep.append(e)
            self._entries[attribute] = keep
            index = RTree()
            for e in keep:
                index.insert(e.bbox, e)
            self._index[attribute] = index
        return dropped

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()
            self._index.clear()

    # -- gap identification ------------------------------------------------

    def _candidates(self, attribute, probe: BBox, sres_u: int, tres_s: int,
                    param_signature: str | None) -> list[CoverageEntry]:
        with self._lock:
            index = self._index.get(attribute)
            found = index.search(probe) if index is not None else []
        out = [e for e in found if e.sres_u <= sres_u and e.tres_s <= tres_s]
        if self.strict_signature and param_signature is not None:
            out = [e for e in out
                   if e.param_signature == param_signature
                   or (e.sres_u, e.tres_s) != (sres_u, tres_s)]
        return out

    def _request_window(self, extent: list[BBox], interval: TimeInterval,
                        spatial_res: float, temporal_res: float):
        spec = self.domain.grid(spatial_res, temporal_res)
        boxes = []
        for b in extent:
            clipped = self.domain.clamp(b)
            if clipped is not None:
                boxes.append(clipped)
        if not boxes:
            raise GenieError("requested extent lies outside the domain")
        w_lat0 = min(b.lat_min for b in boxes)
        w_lat1 = max(b.lat_max for b in boxes)
        w_lon0 = min(b.lon_min for b in boxes)
        w_lon1 = max(b.lon_max for b in boxes)
        window = BBox(w_lat0, w_lat1, w_lon0, w_lon1)
        iv = TimeInterval(max(interval.start, self.domain.interval.start),
                          min(interval.end, self.domain.interval.end))
        (i0, i1), (j0, j1), (t0, t1) = spec.cells_intersecting(window, iv)
        shape = (i1 - i0, j1 - j0, t1 - t0)
        requested = np.zeros(shape, dtype=bool)
        for b in boxes:
            (a0, a1), (c0, c1), (d0, d1) = spec.cells_intersecting(b, iv)
            requested[a0 - i0:a1 - i0, c0 - j0:c1 - j0, d0 - t0:d1 - t0] = True
        return spec, (i0, j0, t0), window, iv, requested

    def _covered_mask(self, attribute, spec, origin_idx, window: BBox,
                      iv: TimeInterval, shape, param_signature: str | None):
        i0, j0, t0 = origin_idx
        covered = np.zeros(shape, dtype=bool)
        for e in self._candidates(attribute, window, spec.sres_u, spec.tres_s,
                                  param_signature):
            if e.interval.end <= iv.start or e.interval.start >= iv.end:
                continue
            (a0, a1), (c0, c1), (d0, d1) = self._contained_clipped(spec, e)
            a0, a1 = max(a0 - i0, 0), min(a1 - i0, shape[0])
            c0, c1 = max(c0 - j0, 0), min(c1 - j0, shape[1])
            d0, d1 = max(d0 - t0, 0), min(d1 - t0, shape[2])
            if a0 < a1 and c0 < c1 and d0 < d1:
                covered[a0:a1, c0:c1, d0:d1] = True
        return covered

    def _contained_clipped(self, spec, e: CoverageEntry):
        """Cells whose in-domain part lies inside the entry.

        Requests snapped outward at coarse rungs can poke past the query
        domain into the aligned padding; those rim cells only need their
        in-domain portion covered, so an entry reaching the domain edge
        satisfies them.
        """
        o_lat, o_lon, o_t = self.domain.origin
        su, ts = spec.sres_u, spec.tres_s
        d = self.domain

        def upper(entry_hi_u, dom_hi_u, origin):
            if entry_hi_u >= dom_hi_u:
                return -((-(dom_hi_u - origin)) // su)   # rim cells included
            return (entry_hi_u - origin) // su

        i0 = -((-(to_udeg(e.bbox.lat_min) - o_lat)) // su)
        i1 = upper(to_udeg(e.bbox.lat_max), to_udeg(d.bbox.lat_max), o_lat)
        j0 = -((-(to_udeg(e.bbox.lon_min) - o_lon)) // su)
        j1 = upper(to_udeg(e.bbox.lon_max), to_udeg(d.bbox.lon_max), o_lon)
        t0 = -((-(e.interval.start - o_t)) // ts)
        if e.interval.end >= d.interval.end:
            t1 = -((-(d.interval.end - o_t)) // ts)
        else:
            t1 = (e.interval.end - o_t) // ts
        return (i0, max(i0, i1)), (j0, max(j0, j1)), (t0, max(t0, t1))

    def fully_covered(self, attribute: tuple[str, str], extent: list[BBox],
                      interval: TimeInterval, spatial_res: float,
                      temporal_res: float) -> bool:
        """Gap emptiness without rectangle coalescing (planner fast path)."""
        with self._lock:
            entries = self._entries.get(attribute, [])
        su = to_udeg(spatial_res)
        ts = hours_to_seconds(temporal_res)
        if not any(e.sres_u <= su and e.tres_s <= ts for e in entries):
            return False
        spec, origin_idx, window, iv, requested = self._request_window(
            extent, interval, spatial_res, temporal_res)
        covered = self._covered_mask(attribute, spec, origin_idx, window, iv,
                                     requested.shape, None)
        return bool((requested & covered).sum() == requested.sum())

    def finest_resolutions(self, attribute: tuple[str, str]) -> tuple[int, int]:
        """(min sres_u, min tres_s) across entries; large sentinels if none."""
        with self._lock:
            entries = self._entries.get(attribute, [])
        if not entries:
            return (1 << 60, 1 << 60)
        return (min(e.sres_u for e in entries), min(e.tres_s for e in entries))

    def find_gaps(self, attribute: tuple[str, str], extent: list[BBox],
                  interval: TimeInterval, spatial_res: float, temporal_res: float,
                  param_signature: str | None = None) -> GapSet:
        if not self.domain.on_spatial_ladder(spatial_res):
            raise GenieError(f"spatial_res {spatial_res} not on the ladder")
        if not self.domain.on_temporal_ladder(temporal_res):
            raise GenieError(f"temporal_res {temporal_res} not on the ladder")
        spec, origin_idx, window, iv, requested = self._request_window(
            extent, interval, spatial_res, temporal_res)
        covered = self._covered_mask(attribute, spec, origin_idx, window, iv,
                                     requested.shape, param_signature)
        gaps_mask = requested & ~covered
        i0, j0, t0 = origin_idx
        gaps = [spec.region(i0 + a0, i0 + a1, j0 + c0, j0 + c1, t0 + d0, t0 + d1)
                for (a0, a1, c0, c1, d0, d1) in mask_to_regions(gaps_mask)]
        return GapSet(gaps, requested_cells=int(requested.sum()),
                      uncovered_cells=int(gaps_mask.sum()))

    # -- reuse classification ----------------------------------------------

    def classify_reuse(self, attribute: tuple[str, str], extent: list[BBox],
                       interval: TimeInterval, spatial_res: float,
                       temporal_res: float) -> ReuseReport:
        spec, origin_idx, window, iv, requested = self._request_window(
            extent, interval, spatial_res, temporal_res)
        covered = self._covered_mask(attribute, spec, origin_idx, window, iv,
                                     requested.shape, None)
        total = int(requested.sum())
        ncov = int((requested & covered).sum())
        fraction = ncov / total if total else 1.0

        kinds: set[str] = set()
        if ncov:
            i0, j0, t0 = origin_idx
            req_rects = {spec.snap_outward(b, iv)[0] for b in extent
                         if self.domain.clamp(b) is not None}
            snapped_iv = spec.snap_outward(window, iv)[1]
            for e in self._candidates(attribute, window, spec.sres_u, spec.tres_s, None):
                (a0, a1), (c0, c1), (d0, d1) = self._contained_clipped(spec, e)
                a0, a1 = max(a0 - i0, 0), min(a1 - i0, requested.shape[0])
                c0, c1 = max(c0 - j0, 0), min(c1 - j0, requested.shape[1])
                d0, d1 = max(d0 - t0, 0), min(d1 - t0, requested.shape[2])
                if a0 >= a1 or c0 >= c1 or d0 >= d1:
                    continue
                if not requested[a0:a1, c0:c1, d0:d1].any():
                    continue
                if e.sres_u < spec.sres_u or e.tres_s < spec.tres_s:
                    kinds.add("resolution")
                if e.bbox not in req_rects:
                    kinds.add("spatial")
                if e.interval != snapped_iv:
                    kinds.add("temporal")

        live_gaps = len(self.find_gaps(attribute, extent, interval,
                                       spatial_res, temporal_res))
        cold = CoverageMap(self.domain)
        cold_gaps = len(cold.find_gaps(attribute, extent, interval,
                                       spatial_res, temporal_res))
        return ReuseReport(covered_fraction=fraction, kinds=frozenset(kinds),
                           avoided_invocations=max(cold_gaps - live_gaps, 0))

    # -- export ----------------------------------------------------------------

    def to_geojson(self, attribute: tuple[str, str] | None = None) -> dict:
        now = time.time()
        features = []
        for e in self.entries(attribute):
            b = e.bbox
            features.append({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [[
                    [b.lon_min, b.lat_min], [b.lon_max, b.lat_min],
                    [b.lon_max, b.lat_max], [b.lon_min, b.lat_max],
                    [b.lon_min, b.lat_min]]]},
                "properties": {
                    "attribute": f"{e.attribute[0]}.{e.attribute[1]}",
                    "spatial_res": e.spatial_res, "temporal_res": e.temporal_res,
                    "epoch": e.epoch, "age_s": max(now - e.created_at, 0.0),
                    "runtime_s": e.runtime_s, "param_signature": e.param_signature,
                    "interval": [format_timestamp(e.interval.start),
                                 format_timestamp(e.interval.end)],
                },
            })
        return {"type": "FeatureCollection", "features": features}


class QueryLog:
    """Append-only JSON-lines log of executed queries."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._records: list[dict] = []
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                self._records = [json.loads(line) for line in fh if line.strip()]

    def log_query(self, record: dict) -> None:
        record = dict(record)
        record.setdefault("timestamp", format_timestamp(int(time.time())))
        with self._lock:
            self._records.append(record)
            if self.path is not None:
                try:
                    with open(self.path, "a", encoding="utf-8") as fh:
                        fh.write(json.dumps(record, sort_keys=True) + "\n")
                except OSError as exc:      # log failures surface, engine continues
                    record["_io_error"] = str(exc)

    def records(self) -> list[dict]:
        with self._lock:
            return list(self._records)

    def totals(self, keys=("invocations", "estimated_s", "bytes_materialized")) -> dict:
        out = {k: 0 for k in keys}
        for r in self.records():
            for k in keys:
                out[k] += r.get(k, 0)
        return out
