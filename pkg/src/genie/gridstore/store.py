"""Materialized-field storage with replacement consistency.

Fields are kept whole (one file per materialization plus a manifest);
reads resolve a per-cell winner among fields that satisfy the requested
resolution: the finest field wins, with later materializations breaking
ties.  "Finer" compares spatial resolution first, then temporal, so a
refinement that tightens both axes always replaces, and coarser incoming
data never shadows finer existing data.

All winner resolution happens on a lattice at the GCD of the involved
resolutions, which the nested ladder keeps exact.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from ..errors import CoverageMiss, DomainExceeded, GenieError
from .field import GridField, block_mean
from .geometry import (BBox, Domain, GridSpec, TimeInterval, from_udeg,
                       hours_to_seconds, to_udeg)
from .regions import mask_to_regions
from .tables import StoredTable, ingest_table

MANIFEST_FORMAT = "genie-store/1"


@dataclass
class StoredField:
    seq: int
    field: GridField
    epoch: int = 1
    runtime_s: float = 0.0
    created_at: float = 0.0

    @property
    def sres_u(self) -> int:
        return to_udeg(self.field.spatial_res)

    @property
    def tres_s(self) -> int:
        return hours_to_seconds(self.field.temporal_res)


@dataclass
class MergeReport:
    attribute: tuple[str, str]
    new_cells: int = 0
    replaced_cells: int = 0
    retained_cells: int = 0
    replaced_extents: list[tuple[BBox, TimeInterval]] = dc_field(default_factory=list)
    retained_extents: list[tuple[BBox, TimeInterval]] = dc_field(default_factory=list)

    @property
    def all_new(self) -> bool:
        return self.replaced_cells == 0 and self.retained_cells == 0


class GridStore:
    def __init__(self, domain: Domain, data_dir: str | Path | None = None):
        self.domain = domain
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self._fields: dict[tuple[str, str], list[StoredField]] = {}
        self._tables: dict[str, StoredTable] = {}
        self._seq = 0
        self._locks: dict[tuple[str, str], threading.Lock] = {}
        self._mutex = threading.Lock()
        if self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            self._load_manifest()

    # -- stored tables -----------------------------------------------------

    def ingest(self, name: str, path: str | Path, columns: list[str] | None = None,
               primary_key: str | None = None) -> StoredTable:
        table = ingest_table(name, path, columns=columns, primary_key=primary_key)
        self._tables[name] = table
        return table

    def put_table(self, table: StoredTable) -> None:
        self._tables[table.name] = table

    def table(self, name: str) -> StoredTable | None:
        return self._tables.get(name)

    @property
    def tables(self) -> dict[str, StoredTable]:
        return dict(self._tables)

    # -- materialization -----------------------------------------------------

    def _lock_for(self, attribute: tuple[str, str]) -> threading.Lock:
        with self._mutex:
            return self._locks.setdefault(attribute, threading.Lock())

    def materialize(self, field: GridField, epoch: int = 1, runtime_s: float = 0.0) -> MergeReport:
        self.domain.check_contains(field.bbox, field.interval)
        field.check_aligned(self.domain)
        with self._lock_for(field.attribute):
            report = self._classify_incoming(field)
            with self._mutex:
                self._seq += 1
                seq = self._seq
            stored = StoredField(seq, field, epoch=epoch, runtime_s=runtime_s,
                                 created_at=time.time())
            if self.data_dir is not None:
                self._persist(stored)
            self._fields.setdefault(field.attribute, []).append(stored)
        return report

    def fields(self, attribute: tuple[str, str]) -> list[StoredField]:
        return list(self._fields.get(attribute, []))

    def attributes(self) -> list[tuple[str, str]]:
        return sorted(self._fields.keys())

    def total_disk_bytes(self) -> int:
        return sum(sf.field.disk_bytes for lst in self._fields.values() for sf in lst)

    # -- reads ---------------------------------------------------------------

    def read(self, attribute: tuple[str, str], bbox: BBox, interval: TimeInterval,
             spatial_res: float, temporal_res: float) -> GridField:
        """Best-available data resampled onto the requested grid.

        Finer data aggregates down via block means; any requested cell
        with no satisfying field raises CoverageMiss.
        """
        spec = self.domain.grid(spatial_res, temporal_res)
        bbox, interval = spec.snap_outward(bbox, interval)
        self.domain.check_contains(bbox, interval)
        values, _ = self._resolve(attribute, bbox, interval,
                                  to_udeg(spatial_res), hours_to_seconds(temporal_res))
        sig = "+".join(sorted({sf.field.param_signature
                               for sf in self._qualifying(attribute, spatial_res, temporal_res)}))
        kind = next((sf.field.value_kind for sf in self._fields.get(attribute, [])), "intensive")
        return GridField(attribute, bbox, interval, spatial_res, temporal_res,
                         values, param_signature=sig, value_kind=kind)

    def read_window(self, attribute: tuple[str, str], bbox: BBox,
                    interval: TimeInterval, spatial_res: float,
                    temporal_res: float,
                    exact_res: bool = False) -> tuple[GridField, np.ndarray]:
        """Best-effort read: uncovered cells come back 0 with a False mask.

        Consumers must treat masked-out cells as absent; the strict read()
        remains the fabrication-safe path.  ``exact_res`` restricts the
        sources to fields at exactly the requested resolution, which keeps
        refinement rules deterministic after finer data lands.
        """
        spec = self.domain.grid(spatial_res, temporal_res)
        bbox, interval = spec.snap_outward(bbox, interval)
        self.domain.check_contains(bbox, interval)
        req_su, req_ts = to_udeg(spatial_res), hours_to_seconds(temporal_res)
        cands = [sf for sf in self._fields.get(attribute, [])
                 if ((sf.sres_u == req_su and sf.tres_s == req_ts) if exact_res
                     else (sf.sres_u <= req_su and sf.tres_s <= req_ts))
                 and sf.field.bbox.intersects(bbox)
                 and sf.field.interval.intersects(interval)]
        shape = GridField.expected_shape(bbox, interval, spatial_res, temporal_res)
        kind = next((sf.field.value_kind for sf in self._fields.get(attribute, [])),
                    "intensive")
        if not cands:
            field = GridField(attribute, bbox, interval, spatial_res, temporal_res,
                              np.zeros(shape), value_kind=kind)
            return field, np.zeros(shape, dtype=bool)
        lat_su = math.gcd(req_su, *(sf.sres_u for sf in cands))
        lat_ts = math.gcd(req_ts, *(sf.tres_s for sf in cands))
        lat_vals, _ = self._paint_lattice(cands, bbox, interval, lat_su, lat_ts)
        inside = self._inside_domain_mask(bbox, interval, lat_su, lat_ts)
        missing = np.isnan(lat_vals)
        ks, kt = req_su // lat_su, req_ts // lat_ts

        def blocks(arr):
            s = arr.shape
            return arr.reshape(s[0] // ks, ks, s[1] // ks, ks, s[2] // kt, kt) \
                      .transpose(0, 2, 4, 1, 3, 5) \
                      .reshape(s[0] // ks, s[1] // ks, s[2] // kt, ks * ks * kt)

        valid = (~blocks(missing & inside).any(axis=-1)
                 & blocks(inside).any(axis=-1))
        filled = np.where(missing, 0.0, lat_vals)
        counts = blocks(~missing).sum(axis=-1)
        values = blocks(filled).sum(axis=-1) / np.maximum(counts, 1)
        field = GridField(attribute, bbox, interval, spatial_res, temporal_res,
                          values, value_kind=kind)
        return field, valid

    def read_provenance(self, attribute: tuple[str, str], bbox: BBox,
                        interval: TimeInterval, spatial_res: float,
                        temporal_res: float) -> np.ndarray:
        """Winning materialization seq per lattice cell (testing/debug aid)."""
        spec = self.domain.grid(spatial_res, temporal_res)
        bbox, interval = spec.snap_outward(bbox, interval)
        _, seqs = self._resolve(attribute, bbox, interval,
                                to_udeg(spatial_res), hours_to_seconds(temporal_res))
        return seqs

    def resolve_state(self, attribute: tuple[str, str], bbox: BBox,
                      interval: TimeInterval) -> tuple[np.ndarray, np.ndarray]:
        """Replacement-resolved state over a region at the common lattice.

        Considers every stored field regardless of requested resolution;
        cells nothing covers come back NaN.  Returns (values, winner seqs).
        """
        cands = [sf for sf in self._fields.get(attribute, [])
                 if sf.field.bbox.intersects(bbox) and sf.field.interval.intersects(interval)]
        if not cands:
            su = to_udeg(self.domain.spatial_ladder[-1])
            ts = hours_to_seconds(self.domain.temporal_ladder[-1])
            shape = ((to_udeg(bbox.lat_max) - to_udeg(bbox.lat_min)) // su,
                     (to_udeg(bbox.lon_max) - to_udeg(bbox.lon_min)) // su,
                     interval.duration_s // ts)
            return np.full(shape, np.nan), np.zeros(shape, dtype=np.int64)
        lat_su = math.gcd(*(sf.sres_u for sf in cands))
        lat_ts = math.gcd(*(sf.tres_s for sf in cands))
        return self._paint_lattice(cands, bbox, interval, lat_su, lat_ts)

    def _qualifying(self, attribute, spatial_res: float, temporal_res: float) -> list[StoredField]:
        su, ts = to_udeg(spatial_res), hours_to_seconds(temporal_res)
        return [sf for sf in self._fields.get(attribute, [])
                if sf.sres_u <= su and sf.tres_s <= ts]

    def _resolve(self, attribute, bbox: BBox, interval: TimeInterval,
                 req_su: int, req_ts: int) -> tuple[np.ndarray, np.ndarray]:
        """Winner-resolved values on the request grid.

        Returns (values on the requested grid, winner seq per lattice cell).
        """
        cands = [sf for sf in self._fields.get(attribute, [])
                 if sf.sres_u <= req_su and sf.tres_s <= req_ts
                 and sf.field.bbox.intersects(bbox) and sf.field.interval.intersects(interval)]
        if not cands:
            raise CoverageMiss(f"no data for {attribute} at {bbox} x {interval}")
        lat_su = math.gcd(req_su, *(sf.sres_u for sf in cands))
        lat_ts = math.gcd(req_ts, *(sf.tres_s for sf in cands))
        lat_vals, lat_seqs = self._paint_lattice(cands, bbox, interval, lat_su, lat_ts)
        missing = np.isnan(lat_vals)
        if missing.any():
            # rim lattice cells wholly past the query domain may stay empty;
            # the block mean then averages the in-domain part only
            inside = self._inside_domain_mask(bbox, interval, lat_su, lat_ts)
            if (missing & inside).any():
                raise CoverageMiss(
                    f"uncovered cells for {attribute} at {bbox} x {interval}")
            ks, kt = req_su // lat_su, req_ts // lat_ts
            shape = lat_vals.shape
            v = lat_vals.reshape(shape[0] // ks, ks, shape[1] // ks, ks,
                                 shape[2] // kt, kt)
            v = v.transpose(0, 2, 4, 1, 3, 5).reshape(
                shape[0] // ks, shape[1] // ks, shape[2] // kt, ks * ks * kt)
            values = np.nanmean(v, axis=-1)
            return values, lat_seqs
        ks, kt = req_su // lat_su, req_ts // lat_ts
        values = block_mean(lat_vals, ks, ks, kt)
        return values, lat_seqs

    def _inside_domain_mask(self, bbox: BBox, interval: TimeInterval,
                            lat_su: int, lat_ts: int) -> np.ndarray:
        """True for lattice cells that intersect the query domain."""
        b_lat, b_lon, b_t = to_udeg(bbox.lat_min), to_udeg(bbox.lon_min), interval.start
        nlat = (to_udeg(bbox.lat_max) - b_lat) // lat_su
        nlon = (to_udeg(bbox.lon_max) - b_lon) // lat_su
        nt = (interval.end - b_t) // lat_ts
        d = self.domain
        lat_lo = b_lat + np.arange(nlat) * lat_su
        lon_lo = b_lon + np.arange(nlon) * lat_su
        t_lo = b_t + np.arange(nt) * lat_ts
        return ((lat_lo < to_udeg(d.bbox.lat_max))[:, None, None]
                & (lon_lo < to_udeg(d.bbox.lon_max))[None, :, None]
                & (t_lo < d.interval.end)[None, None, :])

    def _paint_lattice(self, cands: list[StoredField], bbox: BBox, interval: TimeInterval,
                       lat_su: int, lat_ts: int) -> tuple[np.ndarray, np.ndarray]:
        o_lat, o_lon, o_t = self.domain.origin
        b_lat, b_lon, b_t = to_udeg(bbox.lat_min), to_udeg(bbox.lon_min), interval.start
        nlat = (to_udeg(bbox.lat_max) - b_lat) // lat_su
        nlon = (to_udeg(bbox.lon_max) - b_lon) // lat_su
        nt = (interval.end - b_t) // lat_ts
        vals = np.full((nlat, nlon, nt), np.nan)
        seqs = np.zeros((nlat, nlon, nt), dtype=np.int64)
        # worst priority first; the last write at a cell is the winner
        order = sorted(cands, key=lambda sf: (sf.sres_u, sf.tres_s, -sf.seq), reverse=True)
        for sf in order:
            f = sf.field
            f_lat, f_lon = to_udeg(f.bbox.lat_min), to_udeg(f.bbox.lon_min)
            f_t = f.interval.start
            i0 = max(0, (f_lat - b_lat) // lat_su)
            i1 = min(nlat, (to_udeg(f.bbox.lat_max) - b_lat) // lat_su)
            j0 = max(0, (f_lon - b_lon) // lat_su)
            j1 = min(nlon, (to_udeg(f.bbox.lon_max) - b_lon) // lat_su)
            t0 = max(0, (f_t - b_t) // lat_ts)
            t1 = min(nt, (f.interval.end - b_t) // lat_ts)
            if i0 >= i1 or j0 >= j1 or t0 >= t1:
                continue
            fi = (b_lat + np.arange(i0, i1) * lat_su - f_lat) // to_udeg(f.spatial_res)
            fj = (b_lon + np.arange(j0, j1) * lat_su - f_lon) // to_udeg(f.spatial_res)
            ft = (b_t + np.arange(t0, t1) * lat_ts - f_t) // hours_to_seconds(f.temporal_res)
            sub = f.values[np.ix_(fi, fj, ft)]
            vals[i0:i1, j0:j1, t0:t1] = sub
            seqs[i0:i1, j0:j1, t0:t1] = sf.seq
        return vals, seqs

    # -- merge classification -------------------------------------------------

    def _classify_incoming(self, field: GridField) -> MergeReport:
        prior = [sf for sf in self._fields.get(field.attribute, [])
                 if sf.field.bbox.intersects(field.bbox)
                 and sf.field.interval.intersects(field.interval)]
        report = MergeReport(field.attribute)
        if not prior:
            report.new_cells = field.cell_count
            return report
        in_su, in_ts = to_udeg(field.spatial_res), hours_to_seconds(field.temporal_res)
        lat_su = math.gcd(in_su, *(sf.sres_u for sf in prior))
        lat_ts = math.gcd(in_ts, *(sf.tres_s for sf in prior))
        o_su, o_ts = self._prior_resolution_grids(prior, field.bbox, field.interval,
                                                  lat_su, lat_ts)
        ks, kt = in_su // lat_su, in_ts // lat_ts
        nlat, nlon, nt = field.values.shape

        def blocks(arr):
            return arr.reshape(nlat, ks, nlon, ks, nt, kt)

        has_prior = blocks(o_su < np.iinfo(np.int64).max).any(axis=(1, 3, 5))
        wins = blocks((in_su <= o_su) & (in_ts <= o_ts)).all(axis=(1, 3, 5))
        new_mask = ~has_prior
        replaced_mask = has_prior & wins
        retained_mask = has_prior & ~wins
        report.new_cells = int(new_mask.sum())
        report.replaced_cells = int(replaced_mask.sum())
        report.retained_cells = int(retained_mask.sum())
        spec = self.domain.grid(field.spatial_res, field.temporal_res)
        (bi, _), (bj, _), (bt, _) = spec.cells_intersecting(field.bbox, field.interval)
        for mask, sink in ((replaced_mask, report.replaced_extents),
                           (retained_mask, report.retained_extents)):
            for (i0, i1, j0, j1, t0, t1) in mask_to_regions(mask):
                sink.append(spec.region(bi + i0, bi + i1, bj + j0, bj + j1, bt + t0, bt + t1))
        return report

    def _prior_resolution_grids(self, prior: list[StoredField], bbox: BBox,
                                interval: TimeInterval, lat_su: int, lat_ts: int):
        """Per lattice cell, the winning prior field's (sres_u, tres_s)."""
        b_lat, b_lon, b_t = to_udeg(bbox.lat_min), to_udeg(bbox.lon_min), interval.start
        nlat = (to_udeg(bbox.lat_max) - b_lat) // lat_su
        nlon = (to_udeg(bbox.lon_max) - b_lon) // lat_su
        nt = (interval.end - b_t) // lat_ts
        big = np.iinfo(np.int64).max
        o_su = np.full((nlat, nlon, nt), big, dtype=np.int64)
        o_ts = np.full((nlat, nlon, nt), big, dtype=np.int64)
        order = sorted(prior, key=lambda sf: (sf.sres_u, sf.tres_s, -sf.seq), reverse=True)
        for sf in order:
            f = sf.field
            i0 = max(0, (to_udeg(f.bbox.lat_min) - b_lat) // lat_su)
            i1 = min(nlat, (to_udeg(f.bbox.lat_max) - b_lat) // lat_su)
            j0 = max(0, (to_udeg(f.bbox.lon_min) - b_lon) // lat_su)
            j1 = min(nlon, (to_udeg(f.bbox.lon_max) - b_lon) // lat_su)
            t0 = max(0, (f.interval.start - b_t) // lat_ts)
            t1 = min(nt, (f.interval.end - b_t) // lat_ts)
            if i0 >= i1 or j0 >= j1 or t0 >= t1:
                continue
            o_su[i0:i1, j0:j1, t0:t1] = sf.sres_u
            o_ts[i0:i1, j0:j1, t0:t1] = sf.tres_s
        return o_su, o_ts

    # -- persistence -----------------------------------------------------------

    def _attr_dir(self, attribute: tuple[str, str]) -> Path:
        d = self.data_dir / "fields" / f"{attribute[0]}.{attribute[1]}"
        d.mkdir(parents=True, exist_ok=True)
        return d

    def _persist(self, stored: StoredField) -> None:
        path = self._attr_dir(stored.field.attribute) / f"{stored.seq:08d}.gfd"
        tmp = path.with_suffix(".gfd.tmp")
        tmp.write_bytes(stored.field.to_bytes())
        os.replace(tmp, path)  # field durable before the manifest references it
        self._write_manifest(extra=(stored, path))

    def _manifest_entries(self) -> list[dict]:
        out = []
        for attr in sorted(self._fields):
            for sf in self._fields[attr]:
                out.append(self._manifest_entry(sf, self._attr_dir(attr) / f"{sf.seq:08d}.gfd"))
        return out

    def _manifest_entry(self, sf: StoredField, path: Path) -> dict:
        f = sf.field
        return {"seq": sf.seq, "path": str(path.relative_to(self.data_dir)),
                "attribute": list(f.attribute), "bbox": f.bbox.to_json(),
                "interval": {"start": f.interval.start, "end": f.interval.end},
                "spatial_res": f.spatial_res, "temporal_res": f.temporal_res,
                "param_signature": f.param_signature, "epoch": sf.epoch,
                "runtime_s": sf.runtime_s, "created_at": sf.created_at}

    def _write_manifest(self, extra: tuple[StoredField, Path] | None = None) -> None:
        entries = self._manifest_entries()
        if extra is not None:
            entries.append(self._manifest_entry(extra[0], extra[1]))
        entries.sort(key=lambda e: e["seq"])
        doc = {"format": MANIFEST_FORMAT, "seq_counter": self._seq, "entries": entries}
        tmp = self.data_dir / "manifest.json.tmp"
        tmp.write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")
        os.replace(tmp, self.data_dir / "manifest.json")

    def _load_manifest(self) -> None:
        path = self.data_dir / "manifest.json"
        if not path.exists():
            return
        doc = json.loads(path.read_text(encoding="utf-8"))
        if doc.get("format") != MANIFEST_FORMAT:
            raise GenieError(f"unsupported store format: {doc.get('format')}")
        self._seq = doc["seq_counter"]
        for e in doc["entries"]:
            f = GridField.load(self.data_dir / e["path"])
            sf = StoredField(e["seq"], f, epoch=e["epoch"], runtime_s=e["runtime_s"],
                             created_at=e["created_at"])
            self._fields.setdefault(f.attribute, []).append(sf)
        for lst in self._fields.values():
            lst.sort(key=lambda sf: sf.seq)

    def manifest_records(self) -> list[dict]:
        return self._manifest_entries()

    def reset_fields(self) -> None:
        self._fields.clear()
        self._seq = 0
        if self.data_dir is not None:
            self._write_manifest()
