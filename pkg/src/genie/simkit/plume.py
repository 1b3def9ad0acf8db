"""Synthetic Lagrangian plume transport.

Particles carry equal mass shares from emitting cells and random-walk
with the wind: each transport step covers one output bin,
``pos += wind*dt + N(0, sqrt(2*K*dt))`` per axis.  Concentration is the
binned particle mass per cell area at the end of each bin.  Particles
leaving the (padded) domain stop contributing to concentration but stay
on the mass ledger, so airborne plus exited mass always equals released
mass.

The particle budget per release is shaped by resolution and extent so
end-to-end runtime tracks the calibrated cost model: finer spatial grids
demand proportionally more particles for per-cell convergence, and the
budget grows mildly with the sampling window.  Wind is sampled at the
run's own grid centers, so coarse runs feel quantized shear; source
positions are emission-cell centers, so coarse emissions smear the
source.  Those two effects are what make accuracy genuinely
resolution-dependent rather than decorative.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import EmissionsGeometryMismatch, SimError
from ..gridstore.field import GridField
from ..gridstore.geometry import (M_PER_DEG, TimeInterval, hours_to_seconds,
                                  to_udeg)
from .base import Adapter, SimRequest, SimResult, param_signature

SPATIAL_REF = 0.1       # budget-neutral spatial resolution, degrees
AREA_REF = 3.75         # budget-neutral extent area, square degrees
TEMPORAL_BUDGET_EXP = 0.218


class PlumeAdapter(Adapter):
    adapter_id = "hysplit"

    candidates = {
        "spatial_res": (0.5, 0.2, 0.1, 0.05, 0.02, 0.01),
        "temporal_res": (6.0, 3.0, 1.0, 0.5, 0.25),
        "particle_count": (500, 1000, 2000, 5000, 10000),
    }

    def __init__(self, wind, diffusivity_m2s: float = 500.0,
                 area_floor: float = 0.25):
        self.wind = wind
        self.K = diffusivity_m2s
        self.area_floor = area_floor

    # -- translation ---------------------------------------------------------

    def translate(self, request: SimRequest) -> dict:
        sres = request.spatial_res
        tres = request.temporal_res
        pc = int(request.params.get("particle_count", 1000))
        if pc < 10:
            raise SimError("particle_count must be at least 10")
        dt_s = hours_to_seconds(tres)
        release_every_s = dt_s      # one emission cycle per transport step
        area_factor = max(request.extent_area_deg2() / AREA_REF, self.area_floor)
        budget_shape = tres ** (1.0 + TEMPORAL_BUDGET_EXP)
        particles_per_release = max(10, round(
            pc * (SPATIAL_REF / sres) * budget_shape * area_factor))
        return {
            "model": "lagrangian-random-walk",
            "spatial_res_deg": sres,
            "temporal_res_h": tres,
            "transport_dt_s": dt_s,
            "release_every_s": release_every_s,
            "particles_per_release": particles_per_release,
            "diffusivity_m2s": self.K,
            "area_factor": area_factor,
            "extent": [b.as_tuple() for b in request.extent],
            "interval": [request.interval.start, request.interval.end],
            "seed": request.seed,
        }

    # -- execution -------------------------------------------------------------

    def run(self, request: SimRequest, config: dict) -> SimResult:
        emissions = self._emissions(request)
        dom = request.domain
        sres = request.spatial_res
        dt_s = config["transport_dt_s"]
        box = dom.storage_bbox
        lat0, lon0 = box.lat_min, box.lon_min
        nlat = (to_udeg(box.lat_max) - to_udeg(lat0)) // to_udeg(sres)
        nlon = (to_udeg(box.lon_max) - to_udeg(lon0)) // to_udeg(sres)
        start, end = request.interval.start, request.interval.end
        if (end - start) % dt_s != 0:
            raise SimError("request interval must align to the transport step")
        nt = (end - start) // dt_s
        accum = np.zeros((nlat, nlon, nt))

        rng = np.random.default_rng(request.seed)
        pp = config["particles_per_release"]
        cadence = config["release_every_s"]
        em_dt = hours_to_seconds(emissions.temporal_res)

        src_lat, src_lon, src_rate_area = self._sources(emissions)

        capacity = pp * (nt // max(cadence // dt_s, 1) + 1)
        buf_lat = np.empty(capacity)
        buf_lon = np.empty(capacity)
        buf_mass = np.empty(capacity)
        alive = 0
        released = 0.0
        exited = 0.0
        ledger = []

        for t in range(nt):
            ts = start + t * dt_s
            if (ts - start) % cadence == 0:
                bin_idx = (ts - emissions.interval.start) // em_dt
                if 0 <= bin_idx < emissions.nt:
                    rates = src_rate_area[:, bin_idx]
                    total = rates.sum()
                    if total > 0:
                        mass = total * cadence
                        cdf = np.cumsum(rates)
                        pick = np.searchsorted(cdf, rng.random(pp) * cdf[-1],
                                               side="right").clip(0, len(rates) - 1)
                        buf_lat[alive:alive + pp] = src_lat[pick]
                        buf_lon[alive:alive + pp] = src_lon[pick]
                        buf_mass[alive:alive + pp] = mass / pp
                        alive += pp
                        released += mass
            p_lat = buf_lat[:alive]
            p_lon = buf_lon[:alive]
            p_mass = buf_mass[:alive]
            if p_lat.size:
                # wind sampled at the run grid's cell centers, hour-quantized
                q_lat = lat0 + (np.floor((p_lat - lat0) / sres) + 0.5) * sres
                q_lon = lon0 + (np.floor((p_lon - lon0) / sres) + 0.5) * sres
                u, v = self.wind.sample(q_lat, q_lon, ts)
                coslat = np.cos(np.radians(p_lat))
                sigma = math.sqrt(2.0 * self.K * dt_s)
                noise = rng.standard_normal((2, p_lat.size)) * sigma
                prev_lat, prev_lon = p_lat, p_lon
                p_lat = p_lat + (v * dt_s + noise[0]) / M_PER_DEG
                p_lon = p_lon + (u * dt_s + noise[1]) / (M_PER_DEG * coslat)
                inside = ((p_lat >= box.lat_min) & (p_lat < box.lat_max)
                          & (p_lon >= box.lon_min) & (p_lon < box.lon_max))
                # bin the move's midpoint: a one-point average of the path
                # over the sampling interval (clipped so mass stays counted)
                mid_lat = np.clip(0.5 * (prev_lat + p_lat),
                                  box.lat_min, box.lat_max - 1e-9)
                mid_lon = np.clip(0.5 * (prev_lon + p_lon),
                                  box.lon_min, box.lon_max - 1e-9)
                if p_lat.size:
                    i = ((mid_lat[inside] - lat0) / sres).astype(np.int64)
                    j = ((mid_lon[inside] - lon0) / sres).astype(np.int64)
                    flat = np.bincount(i * nlon + j, weights=p_mass[inside],
                                       minlength=nlat * nlon)
                    accum[:, :, t] = flat.reshape(nlat, nlon)
                if not inside.all():
                    exited += float(p_mass[~inside].sum())
                    keep = int(inside.sum())
                    buf_lat[:keep] = p_lat[inside]
                    buf_lon[:keep] = p_lon[inside]
                    buf_mass[:keep] = p_mass[inside]
                    alive = keep
                else:
                    buf_lat[:alive] = p_lat
                    buf_lon[:alive] = p_lon
                p_lat = buf_lat[:alive]
                p_lon = buf_lon[:alive]
                p_mass = buf_mass[:alive]
            ledger.append({"t": ts + dt_s, "released": released,
                           "airborne": float(accum[:, :, t].sum()),
                           "exited": exited})

        concentration = accum / self._cell_areas(lat0, nlat, sres)[:, None, None]
        fields = [self._slice_field(request, concentration, lat0, lon0, sres, b)
                  for b in request.extent]
        return SimResult(fields, 0.0, {
            "simulator": self.adapter_id,
            "signature": param_signature(self.adapter_id, request.params),
            "seed": request.seed,
        }, diagnostics={"mass_ledger": ledger,
                        "particles_per_release": pp})

    def _emissions(self, request: SimRequest) -> GridField:
        if len(request.inputs) != 1:
            raise EmissionsGeometryMismatch(
                f"expected exactly one emissions input, got {sorted(request.inputs)}")
        em = next(iter(request.inputs.values()))
        if to_udeg(em.spatial_res) != to_udeg(request.spatial_res):
            raise EmissionsGeometryMismatch(
                f"emissions at {em.spatial_res} deg, run at {request.spatial_res} deg")
        if em.interval.start > request.interval.start:
            raise EmissionsGeometryMismatch("emissions start after the request window")
        return em

    def _sources(self, em: GridField):
        """Emitting cell centers and their rate*area time series."""
        active = em.values.max(axis=2) > 0
        ii, jj = np.nonzero(active)
        lat_c = em.bbox.lat_min + (ii + 0.5) * em.spatial_res
        lon_c = em.bbox.lon_min + (jj + 0.5) * em.spatial_res
        areas = self._cell_areas_at(lat_c, em.spatial_res)
        rate_area = em.values[ii, jj, :] * areas[:, None]
        return lat_c, lon_c, rate_area

    @staticmethod
    def _cell_areas(lat0: float, nlat: int, sres: float) -> np.ndarray:
        centers = lat0 + (np.arange(nlat) + 0.5) * sres
        return PlumeAdapter._cell_areas_at(centers, sres)

    @staticmethod
    def _cell_areas_at(lat_centers: np.ndarray, sres: float) -> np.ndarray:
        dy = sres * M_PER_DEG
        dx = sres * M_PER_DEG * np.cos(np.radians(lat_centers))
        return dy * dx

    def _slice_field(self, request: SimRequest, conc: np.ndarray, lat0: float,
                     lon0: float, sres: float, box) -> GridField:
        i0 = (to_udeg(box.lat_min) - to_udeg(lat0)) // to_udeg(sres)
        i1 = (to_udeg(box.lat_max) - to_udeg(lat0)) // to_udeg(sres)
        j0 = (to_udeg(box.lon_min) - to_udeg(lon0)) // to_udeg(sres)
        j1 = (to_udeg(box.lon_max) - to_udeg(lon0)) // to_udeg(sres)
        attribute = request.attribute if request.attribute != ("", "") else ("smoke_dispersion", "concentration")
        return GridField(attribute, box, request.interval, sres,
                         request.temporal_res, conc[i0:i1, j0:j1, :],
                         param_signature=param_signature(self.adapter_id, request.params))

    # -- estimates ---------------------------------------------------------------

    def estimate(self, params: dict, extent_area_deg2: float,
                 interval: TimeInterval) -> tuple[float, float]:
        from .costmodel import plume_estimate
        return plume_estimate(params, extent_area_deg2, interval)
