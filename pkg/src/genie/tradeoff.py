"""Measured-vs-modeled trade-off sweeps on the bundled scenario.

The spine of ``genie tradeoff``: run the plume along each parameter axis,
score it against the axis reference, time it, and put the cost model's
prediction next to it.
"""

from __future__ import annotations

import time

import numpy as np

from .gridstore import BBox, GridField
from .gridstore.geometry import to_udeg
from .simkit import SimRequest, build_adapters, load_scenario
from .simkit.costmodel import accuracy_score, plume_estimate

COMPARISON_BOX = BBox(36.2, 37.2, -119.4, -118.4)   # aligned to every rung

TEMPORAL_SWEEP = (0.25, 0.5, 1.0, 2.0, 3.0, 6.0)
SPATIAL_SWEEP = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5)


def crop(field: GridField, box: BBox) -> GridField:
    su = to_udeg(field.spatial_res)
    i0 = (to_udeg(box.lat_min) - to_udeg(field.bbox.lat_min)) // su
    i1 = (to_udeg(box.lat_max) - to_udeg(field.bbox.lat_min)) // su
    j0 = (to_udeg(box.lon_min) - to_udeg(field.bbox.lon_min)) // su
    j1 = (to_udeg(box.lon_max) - to_udeg(field.bbox.lon_min)) // su
    return GridField(field.attribute, box, field.interval, field.spatial_res,
                     field.temporal_res, field.values[i0:i1, j0:j1, :],
                     param_signature=field.param_signature)


class PlumeRunner:
    def __init__(self, scenario=None):
        self.scenario = scenario or load_scenario()
        self.adapters = build_adapters(self.scenario)
        self.domain = self.scenario.domain

    def run(self, sres: float, tres: float, pc: int = 1000, seed: int = 7):
        dom = self.domain
        spec = dom.grid(sres, tres)
        box, iv = spec.snap_outward(dom.bbox, dom.interval)
        fire_req = SimRequest(dom, [box], iv,
                              {"spatial_res": sres, "temporal_res": tres},
                              attribute=("fire_emissions", "emission_rate"),
                              seed=seed)
        em = self.adapters["wrf_sfire"].execute(fire_req).fields[0]
        plume_req = SimRequest(dom, [box], iv,
                               {"spatial_res": sres, "temporal_res": tres,
                                "particle_count": pc},
                               attribute=("smoke_dispersion", "concentration"),
                               inputs={("fire_emissions", "emission_rate"): em},
                               seed=seed)
        t0 = time.perf_counter()
        res = self.adapters["hysplit"].execute(plume_req)
        wall = time.perf_counter() - t0
        return crop(res.fields[0], COMPARISON_BOX), wall, box, iv


def measure_tradeoff(seeds: int = 1, runner: PlumeRunner | None = None) -> list[dict]:
    runner = runner or PlumeRunner()
    seed_list = tuple(range(7, 7 + max(seeds, 1)))
    rows: list[dict] = []

    t_ref, _, box, iv = runner.run(0.1, 0.25, seed=3)
    for tau in TEMPORAL_SWEEP:
        walls, scores = [], []
        for s in seed_list:
            f, wall, _, _ = runner.run(0.1, tau, seed=s)
            walls.append(wall)
            scores.append(accuracy_score(f, t_ref) if tau != 0.25 else 1.0)
        est_t, est_a = plume_estimate({"spatial_res": 0.1, "temporal_res": tau,
                                       "particle_count": 1000}, box.area_deg2, iv)
        rows.append({"axis": "temporal", "value": tau,
                     "est_seconds": round(est_t, 4),
                     "meas_seconds": round(float(np.median(walls)), 4),
                     "est_accuracy": round(est_a, 4),
                     "meas_accuracy": round(float(np.median(scores)), 4)})

    s_ref, _, _, _ = runner.run(0.01, 1.0, seed=3)
    for sres in SPATIAL_SWEEP:
        walls, scores = [], []
        for s in seed_list:
            f, wall, _, _ = runner.run(sres, 1.0, seed=s)
            walls.append(wall)
            scores.append(accuracy_score(f, s_ref) if sres != 0.01 else 1.0)
        est_t, est_a = plume_estimate({"spatial_res": sres, "temporal_res": 1.0,
                                       "particle_count": 1000}, box.area_deg2, iv)
        rows.append({"axis": "spatial", "value": sres,
                     "est_seconds": round(est_t, 4),
                     "meas_seconds": round(float(np.median(walls)), 4),
                     "est_accuracy": round(est_a, 4),
                     "meas_accuracy": round(float(np.median(scores)), 4)})
    return rows


def combined_anchor_scores(runner: PlumeRunner | None = None,
                           seeds=(7, 8, 9)) -> list[dict]:
    """Coarse-run validation anchors against the global finest reference."""
    runner = runner or PlumeRunner()
    ref, _, box, iv = runner.run(0.01, 0.25, seed=3)
    out = []
    for (s, t) in ((0.5, 6.0), (0.2, 3.0), (0.5, 1.0)):
        scores = [accuracy_score(runner.run(s, t, seed=sd)[0], ref)
                  for sd in seeds]
        _, est_a = plume_estimate({"spatial_res": s, "temporal_res": t,
                                   "particle_count": 1000}, box.area_deg2, iv)
        out.append({"spatial_res": s, "temporal_res": t,
                    "measured": float(np.median(scores)), "modeled": est_a})
    return out
