"""Analytic Gaussian-puff transport: the cheap, rougher alternative model.

Each release becomes a puff advected by hourly winds whose spread grows
as sigma^2 = 2*K*(t - t0); concentrations are closed-form sums of puff
densities evaluated at cell centers.  No particles, so it runs fast and
misses what the random walk resolves; it exists to exercise ensembles
and cheapest-feasible simulator selection.
"""

from __future__ import annotations

import math

import numpy as np

from ..gridstore.field import GridField
from ..gridstore.geometry import M_PER_DEG, TimeInterval, hours_to_seconds, to_udeg
from .base import Adapter, SimRequest, SimResult, param_signature
from .plume import PlumeAdapter


class PuffAdapter(Adapter):
    adapter_id = "calpuff"

    def __init__(self, wind, diffusivity_m2s: float = 500.0):
        self.wind = wind
        self.K = diffusivity_m2s

    def translate(self, request: SimRequest) -> dict:
        return {
            "model": "gaussian-puff",
            "spatial_res_deg": request.spatial_res,
            "temporal_res_h": request.temporal_res,
            "release_every_s": max(hours_to_seconds(request.temporal_res), 3600),
            "diffusivity_m2s": self.K,
            "extent": [b.as_tuple() for b in request.extent],
            "interval": [request.interval.start, request.interval.end],
            "seed": request.seed,
        }

    def run(self, request: SimRequest, config: dict) -> SimResult:
        em = next(iter(request.inputs.values()))
        sres = request.spatial_res
        dt_s = hours_to_seconds(request.temporal_res)
        cadence = config["release_every_s"]
        start = request.interval.start
        nt = (request.interval.end - start) // dt_s
        em_dt = hours_to_seconds(em.temporal_res)
        src_lat, src_lon, rate_area = PlumeAdapter(self.wind, self.K)._sources(em)

        # puffs: (lat, lon, mass, release time); centers advected hourly
        puffs: list[list[float]] = []
        fields_accum = []
        box = request.domain.storage_bbox
        nlat = (to_udeg(box.lat_max) - to_udeg(box.lat_min)) // to_udeg(sres)
        nlon = (to_udeg(box.lon_max) - to_udeg(box.lon_min)) // to_udeg(sres)
        lat_c = box.lat_min + (np.arange(nlat) + 0.5) * sres
        lon_c = box.lon_min + (np.arange(nlon) + 0.5) * sres
        conc = np.zeros((nlat, nlon, nt))
        for t in range(nt):
            ts = start + t * dt_s
            if (ts - start) % cadence == 0:
                bin_idx = (ts - em.interval.start) // em_dt
                if 0 <= bin_idx < em.nt:
                    rates = rate_area[:, bin_idx]
                    total = rates.sum()
                    if total > 0:
                        for k in np.nonzero(rates)[0]:
                            puffs.append([float(src_lat[k]), float(src_lon[k]),
                                          float(rates[k] * cadence), ts])
            for p in puffs:
                u, v = self.wind.sample(np.array([p[0]]), np.array([p[1]]), ts)
                p[0] += float(v[0]) * dt_s / M_PER_DEG
                p[1] += float(u[0]) * dt_s / (M_PER_DEG * math.cos(math.radians(p[0])))
            t_end = ts + dt_s
            for lat_p, lon_p, mass, t0 in puffs:
                var = 2.0 * self.K * (t_end - t0)
                if var <= 0:
                    continue
                dy = (lat_c - lat_p) * M_PER_DEG
                dx = (lon_c - lon_p) * M_PER_DEG * math.cos(math.radians(lat_p))
                g = np.exp(-(dy[:, None] ** 2 + dx[None, :] ** 2) / (2.0 * var))
                conc[:, :, t] += mass / (2.0 * math.pi * var) * g
        fields = []
        for b in request.extent:
            i0 = (to_udeg(b.lat_min) - to_udeg(box.lat_min)) // to_udeg(sres)
            i1 = (to_udeg(b.lat_max) - to_udeg(box.lat_min)) // to_udeg(sres)
            j0 = (to_udeg(b.lon_min) - to_udeg(box.lon_min)) // to_udeg(sres)
            j1 = (to_udeg(b.lon_max) - to_udeg(box.lon_min)) // to_udeg(sres)
            attribute = (request.attribute if request.attribute != ("", "")
                         else ("smoke_dispersion", "concentration"))
            fields.append(GridField(attribute, b, request.interval, sres,
                                    request.temporal_res, conc[i0:i1, j0:j1, :],
                                    param_signature=param_signature(
                                        self.adapter_id, request.params)))
        return SimResult(fields, 0.0, {
            "simulator": self.adapter_id,
            "signature": param_signature(self.adapter_id, request.params),
            "seed": request.seed,
        })

    def estimate(self, params: dict, extent_area_deg2: float,
                 interval: TimeInterval) -> tuple[float, float]:
        from .costmodel import puff_estimate
        return puff_estimate(params, extent_area_deg2, interval)
