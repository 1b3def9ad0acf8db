"""Stored (non-virtual) tables: stations, ignition metadata, and friends."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ParseError, SchemaMismatch
from .geometry import BBox
from .rtree import RTree

GEOMETRY_COLUMNS = ("location",)


@dataclass
class StoredTable:
    name: str
    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    primary_key: str | None = None
    index: RTree = field(default_factory=RTree, repr=False)

    def add_row(self, row: dict, rownum: int | None = None) -> None:
        missing = [c for c in self.columns if c not in row]
        if missing:
            raise SchemaMismatch(f"table {self.name}: row missing columns {missing}")
        if self.primary_key is not None:
            key = row[self.primary_key]
            if any(r[self.primary_key] == key for r in self.rows):
                raise ParseError(f"duplicate primary key {key!r}", rownum)
        if "lat" in row and "lon" in row:
            lat, lon = float(row["lat"]), float(row["lon"])
            if not -90.0 <= lat <= 90.0:
                raise ParseError(f"latitude out of range: {lat}", rownum)
            if not -180.0 <= lon <= 180.0:
                raise ParseError(f"longitude out of range: {lon}", rownum)
            self.index.insert(BBox(lat, lat, lon, lon), len(self.rows))
        self.rows.append(row)

    def points(self) -> list[tuple[float, float]]:
        return [(float(r["lat"]), float(r["lon"])) for r in self.rows
                if "lat" in r and "lon" in r]

    def __len__(self) -> int:
        return len(self.rows)


def _coerce(value: str):
    value = value.strip()
    if value == "":
        return None
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        return value


def ingest_table(name: str, path: str | Path, columns: list[str] | None = None,
                 primary_key: str | None = None) -> StoredTable:
    """Load a CSV (header row) or GeoJSON point collection into a table.

    GEOMETRY columns are carried as paired ``lat``/``lon`` fields; a CSV
    providing those two columns satisfies a declared geometry column.
    """
    path = Path(path)
    if path.suffix.lower() in (".geojson", ".json"):
        available, rows = _rows_from_geojson(path)
    else:
        available, rows = _rows_from_csv(path)
    declared = _resolve_columns(columns, available) if columns else available
    table = StoredTable(name, declared, primary_key=primary_key)
    for i, row in enumerate(rows, start=2):  # header is row 1
        table.add_row(row, rownum=i)
    return table


def _resolve_columns(declared: list[str], available: list[str]) -> list[str]:
    cols: list[str] = []
    for c in declared:
        if c in GEOMETRY_COLUMNS or c == "location":
            if "lat" not in available or "lon" not in available:
                raise SchemaMismatch(f"geometry column {c!r} needs lat/lon in the file")
            cols.extend(["lat", "lon"])
        elif c in available:
            cols.append(c)
        else:
            raise SchemaMismatch(f"declared column {c!r} missing from file")
    return cols


def _rows_from_csv(path: Path) -> tuple[list[str], list[dict]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError("missing header row", 1)
        fields = [f.strip() for f in reader.fieldnames]
        rows = []
        for i, raw in enumerate(reader, start=2):
            if any(v is None for v in raw.values()):
                raise ParseError("short row", i)
            rows.append({k.strip(): _coerce(v) for k, v in raw.items()})
        return fields, rows


def _rows_from_geojson(path: Path) -> tuple[list[str], list[dict]]:
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("type") != "FeatureCollection":
        raise ParseError("expected a GeoJSON FeatureCollection")
    rows = []
    for i, feat in enumerate(doc.get("features", []), start=1):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Point":
            raise ParseError("only Point geometries are supported", i)
        lon, lat = geom["coordinates"][:2]
        row = dict(feat.get("properties") or {})
        row["lat"], row["lon"] = float(lat), float(lon)
        rows.append(row)
    available = list(rows[0].keys()) if rows else ["lat", "lon"]
    return available, rows
