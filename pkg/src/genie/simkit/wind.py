"""Wind fields: uniform or gridded hourly (u, v) in m/s."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import GenieError
from ..gridstore.geometry import BBox

MAX_SPEED = 40.0


@dataclass
class UniformWind:
    u: float
    v: float

    def __post_init__(self):
        if not np.isfinite([self.u, self.v]).all() or np.hypot(self.u, self.v) > MAX_SPEED:
            raise GenieError(f"wind out of range: ({self.u}, {self.v})")

    def sample(self, lats: np.ndarray, lons: np.ndarray, t_s: int):
        shape = np.broadcast(lats, lons).shape
        return np.full(shape, self.u), np.full(shape, self.v)


class GriddedWind:
    """Piecewise-hourly wind on a coarse node grid, bilinear in space."""

    def __init__(self, lat_nodes: np.ndarray, lon_nodes: np.ndarray,
                 t0_s: int, u: np.ndarray, v: np.ndarray):
        self.lat_nodes = np.asarray(lat_nodes, dtype=float)
        self.lon_nodes = np.asarray(lon_nodes, dtype=float)
        self.t0_s = int(t0_s)
        self.u = np.asarray(u, dtype=float)     # (hours, nlat, nlon)
        self.v = np.asarray(v, dtype=float)
        if self.u.shape != self.v.shape:
            raise GenieError("u/v shape mismatch")
        if self.u.shape[1:] != (len(self.lat_nodes), len(self.lon_nodes)):
            raise GenieError("wind grid shape mismatch")
        speed = np.hypot(self.u, self.v)
        if not np.isfinite(speed).all() or speed.max() > MAX_SPEED:
            raise GenieError("wind speed out of range")

    def _hour_index(self, t_s: int) -> int:
        h = (int(t_s) - self.t0_s) // 3600
        return min(max(h, 0), self.u.shape[0] - 1)

    def sample(self, lats: np.ndarray, lons: np.ndarray, t_s: int):
        h = self._hour_index(t_s)
        lats = np.asarray(lats, dtype=float)
        lons = np.asarray(lons, dtype=float)
        i = np.clip(np.searchsorted(self.lat_nodes, lats) - 1, 0, len(self.lat_nodes) - 2)
        j = np.clip(np.searchsorted(self.lon_nodes, lons) - 1, 0, len(self.lon_nodes) - 2)
        la0, la1 = self.lat_nodes[i], self.lat_nodes[i + 1]
        lo0, lo1 = self.lon_nodes[j], self.lon_nodes[j + 1]
        wy = np.clip((lats - la0) / (la1 - la0), 0.0, 1.0)
        wx = np.clip((lons - lo0) / (lo1 - lo0), 0.0, 1.0)
        u, v = self.u[h], self.v[h]
        uu = ((1 - wy) * (1 - wx) * u[i, j] + (1 - wy) * wx * u[i, j + 1]
              + wy * (1 - wx) * u[i + 1, j] + wy * wx * u[i + 1, j + 1])
        vv = ((1 - wy) * (1 - wx) * v[i, j] + (1 - wy) * wx * v[i, j + 1]
              + wy * (1 - wx) * v[i + 1, j] + wy * wx * v[i + 1, j + 1])
        return uu, vv

    @staticmethod
    def from_csv(path: str | Path, t0_s: int) -> "GriddedWind":
        """Columns: hour, lat, lon, u, v on a complete node grid."""
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                rows.append((int(rec["hour"]), float(rec["lat"]), float(rec["lon"]),
                             float(rec["u"]), float(rec["v"])))
        if not rows:
            raise GenieError(f"empty wind file {path}")
        hours = sorted({r[0] for r in rows})
        lats = np.array(sorted({r[1] for r in rows}))
        lons = np.array(sorted({r[2] for r in rows}))
        u = np.full((len(hours), len(lats), len(lons)), np.nan)
        v = np.full_like(u, np.nan)
        hidx = {h: k for k, h in enumerate(hours)}
        lidx = {la: k for k, la in enumerate(lats)}
        jidx = {lo: k for k, lo in enumerate(lons)}
        for h, la, lo, uu, vv in rows:
            u[hidx[h], lidx[la], jidx[lo]] = uu
            v[hidx[h], lidx[la], jidx[lo]] = vv
        if np.isnan(u).any() or np.isnan(v).any():
            raise GenieError(f"incomplete wind node grid in {path}")
        if hours != list(range(hours[0], hours[0] + len(hours))):
            raise GenieError("wind hours must be contiguous")
        return GriddedWind(lats, lons, t0_s + hours[0] * 3600, u, v)
