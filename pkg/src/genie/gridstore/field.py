"""Dense lat/lon/time rasters: the unit of simulator output and storage.

On-disk layout (all little-endian): 8-byte magic ``GENIEFLD``, uint32
format version (1), uint32 JSON header length, the UTF-8 JSON header
(attribute, bbox, interval, resolutions, param signature, value kind,
shape), then the cell values as float32 in row-major (lat, lon, time)
order.  In memory values are float64.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import GenieError, NonIntegerRatio
from .geometry import (BBox, Domain, TimeInterval, from_udeg, hours_to_seconds,
                       to_udeg)

MAGIC = b"GENIEFLD"
FORMAT_VERSION = 1

INTENSIVE = "intensive"
EXTENSIVE = "extensive"


@dataclass
class GridField:
    attribute: tuple[str, str]
    bbox: BBox
    interval: TimeInterval
    spatial_res: float          # degrees
    temporal_res: float         # hours
    values: np.ndarray          # (nlat, nlon, nt) float64
    param_signature: str = ""
    value_kind: str = INTENSIVE

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expect = self.expected_shape(self.bbox, self.interval,
                                     self.spatial_res, self.temporal_res)
        if self.values.shape != expect:
            raise GenieError(
                f"value shape {self.values.shape} != expected {expect} for {self.attribute}")
        if not np.isfinite(self.values).all():
            raise GenieError(f"non-finite cell values in {self.attribute}")

    @staticmethod
    def expected_shape(bbox: BBox, interval: TimeInterval,
                       sres: float, tres: float) -> tuple[int, int, int]:
        su, ts = to_udeg(sres), hours_to_seconds(tres)
        nlat = -((-to_udeg(bbox.height_deg)) // su)
        nlon = -((-to_udeg(bbox.width_deg)) // su)
        nt = -((-interval.duration_s) // ts)
        return (nlat, nlon, nt)

    @property
    def nlat(self) -> int:
        return self.values.shape[0]

    @property
    def nlon(self) -> int:
        return self.values.shape[1]

    @property
    def nt(self) -> int:
        return self.values.shape[2]

    @property
    def cell_count(self) -> int:
        return int(self.values.size)

    @property
    def disk_bytes(self) -> int:
        return 4 * self.cell_count

    def lat_centers(self) -> np.ndarray:
        return self.bbox.lat_min + (np.arange(self.nlat) + 0.5) * self.spatial_res

    def lon_centers(self) -> np.ndarray:
        return self.bbox.lon_min + (np.arange(self.nlon) + 0.5) * self.spatial_res

    def timestep_starts(self) -> np.ndarray:
        return self.interval.start + np.arange(self.nt) * hours_to_seconds(self.temporal_res)

    def check_aligned(self, domain: Domain) -> None:
        spec = domain.grid(self.spatial_res, self.temporal_res)
        if not spec.is_aligned(self.bbox, self.interval):
            raise GenieError(f"field {self.attribute} not aligned to domain origin")

    # -- resolution aggregation ------------------------------------------

    def aggregate(self, target_res: float, target_tres: float) -> "GridField":
        """Block-mean the field down to a coarser grid (exact integer ratios)."""
        ks = _ratio(to_udeg(target_res), to_udeg(self.spatial_res), "spatial")
        kt = _ratio(hours_to_seconds(target_tres), hours_to_seconds(self.temporal_res),
                    "temporal")
        if self.nlat % ks or self.nlon % ks or self.nt % kt:
            raise NonIntegerRatio(
                f"shape {self.values.shape} not tileable by ({ks}, {ks}, {kt})")
        out = block_mean(self.values, ks, ks, kt)
        return GridField(self.attribute, self.bbox, self.interval,
                         target_res, target_tres, out,
                         param_signature=self.param_signature, value_kind=self.value_kind)

    # -- persistence -------------------------------------------------------

    def header(self) -> dict:
        return {
            "attribute": list(self.attribute),
            "bbox": self.bbox.to_json(),
            "interval": {"start": self.interval.start, "end": self.interval.end},
            "spatial_res": self.spatial_res,
            "temporal_res": self.temporal_res,
            "param_signature": self.param_signature,
            "value_kind": self.value_kind,
            "shape": list(self.values.shape),
        }

    def to_bytes(self) -> bytes:
        head = json.dumps(self.header(), sort_keys=True).encode("utf-8")
        return (MAGIC + struct.pack("<II", FORMAT_VERSION, len(head)) + head
                + self.values.astype("<f4").tobytes(order="C"))

    @staticmethod
    def from_bytes(blob: bytes) -> "GridField":
        if blob[:8] != MAGIC:
            raise GenieError("bad field file magic")
        version, hlen = struct.unpack("<II", blob[8:16])
        if version != FORMAT_VERSION:
            raise GenieError(f"unsupported field format version {version}")
        head = json.loads(blob[16:16 + hlen].decode("utf-8"))
        shape = tuple(head["shape"])
        values = np.frombuffer(blob[16 + hlen:], dtype="<f4").reshape(shape).astype(np.float64)
        return GridField(tuple(head["attribute"]), BBox.from_json(head["bbox"]),
                         TimeInterval(head["interval"]["start"], head["interval"]["end"]),
                         head["spatial_res"], head["temporal_res"], values,
                         param_signature=head["param_signature"],
                         value_kind=head["value_kind"])

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @staticmethod
    def load(path) -> "GridField":
        with open(path, "rb") as fh:
            return GridField.from_bytes(fh.read())

    # -- export -------------------------------------------------------------

    def to_geojson(self, t_index: int = 0) -> dict:
        """One polygon feature per cell at a single timestep."""
        features = []
        for i in range(self.nlat):
            la0 = self.bbox.lat_min + i * self.spatial_res
            la1 = la0 + self.spatial_res
            for j in range(self.nlon):
                lo0 = self.bbox.lon_min + j * self.spatial_res
                lo1 = lo0 + self.spatial_res
                features.append({
                    "type": "Feature",
                    "geometry": {"type": "Polygon", "coordinates": [[
                        [lo0, la0], [lo1, la0], [lo1, la1], [lo0, la1], [lo0, la0]]]},
                    "properties": {"value": float(self.values[i, j, t_index])},
                })
        return {"type": "FeatureCollection", "features": features}


def _ratio(coarse: int, fine: int, axis: str) -> int:
    if coarse < fine or coarse % fine != 0:
        raise NonIntegerRatio(f"{axis} target must be an integer multiple of the source")
    return coarse // fine


def block_mean(values: np.ndarray, ki: int, kj: int, kt: int) -> np.ndarray:
    """Per-block mean, averaging each block's cells in row-major order so the
    result is bit-identical to ``values[block].mean()`` per block."""
    ni, nj, nt = values.shape
    v = values.reshape(ni // ki, ki, nj // kj, kj, nt // kt, kt)
    v = v.transpose(0, 2, 4, 1, 3, 5).reshape(ni // ki, nj // kj, nt // kt, ki * kj * kt)
    return v.mean(axis=-1)
