"""Calibrated runtime and accuracy models for the built-in simulators.

T(P) is closed-form in extent area, resolutions, and particle count;
A(P) comes from monotone error tables combined with max() and linearly
interpolated between ladder knots.  T is strictly decreasing and A
non-increasing as any resolution coarsens, with A = 1 at the finest
settings by convention.

Calibration constants were fit against measured runs of the synthetic
plume on the reference scenario (see ``genie tradeoff``): the spatial
0.01 vs 0.1 degree runtime ratio is 10x, the 15 min vs 6 h sampling
ratio is 12x, and the temporal error knots track measured accuracy
scores within 0.05.

One known divergence: the runtime estimate is linear in extent area by
contract, while the particle budget of the actual plume run has a floor
at a quarter of the reference area, so measured runtimes flatten out
below that extent.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import DegenerateReference, UnknownCandidate
from ..gridstore.field import GridField
from ..gridstore.geometry import TimeInterval, hours_to_seconds, to_udeg

AREA_REF = 3.75          # square degrees
DURATION_REF_H = 24.0
TEMPORAL_COST_EXP = 0.842
SPATIAL_COST_EXP = 1.05  # slightly superlinear: grid handling grows with cells

# per-run seconds at reference area, default params, 24 h window
PLUME_COST_REF_S = 0.0415
FIRE_COST_PER_CELL_STEP_S = 2.0e-8
PUFF_COST_PER_CELL_STEP_S = 2.5e-8

# error-table knots: (value, error); linear between knots, clamped outside
SPATIAL_ERROR = ((0.01, 0.0), (0.02, 0.015), (0.05, 0.025), (0.1, 0.04),
                 (0.2, 0.066), (0.5, 0.110))
TEMPORAL_ERROR = ((0.25, 0.0), (0.5, 0.03), (1.0, 0.101), (2.0, 0.105),
                  (3.0, 0.105), (4.0, 0.20), (6.0, 0.2969))
PARTICLE_ERROR = ((500, 0.025), (1000, 0.015), (2000, 0.01), (5000, 0.005),
                  (10000, 0.0))

SPATIAL_RANGE = (0.01, 0.5)
TEMPORAL_RANGE = (0.25, 6.0)


def _interp(table, x: float) -> float:
    xs = [t[0] for t in table]
    ys = [t[1] for t in table]
    return float(np.interp(x, xs, ys))


def _check_resolutions(params: dict) -> tuple[float, float]:
    try:
        sres = float(params["spatial_res"])
        tres = float(params["temporal_res"])
    except (KeyError, TypeError, ValueError) as exc:
        raise UnknownCandidate(f"missing or malformed resolution parameters: {exc}")
    if not (SPATIAL_RANGE[0] <= sres <= SPATIAL_RANGE[1]):
        raise UnknownCandidate(f"spatial_res {sres} outside {SPATIAL_RANGE}")
    if not (TEMPORAL_RANGE[0] <= tres <= TEMPORAL_RANGE[1]):
        raise UnknownCandidate(f"temporal_res {tres} outside {TEMPORAL_RANGE}")
    return sres, tres


def plume_accuracy(params: dict) -> float:
    sres, tres = _check_resolutions(params)
    pc = int(params.get("particle_count", 1000))
    if pc <= 0:
        raise UnknownCandidate("particle_count must be positive")
    # independent error sources compound in quadrature
    err = math.hypot(_interp(SPATIAL_ERROR, sres),
                     math.hypot(_interp(TEMPORAL_ERROR, tres),
                                _interp(PARTICLE_ERROR, pc)))
    return max(0.0, min(1.0, 1.0 - err))


def plume_estimate(params: dict, extent_area_deg2: float,
                   interval: TimeInterval) -> tuple[float, float]:
    sres, tres = _check_resolutions(params)
    pc = int(params.get("particle_count", 1000))
    if pc <= 0:
        raise UnknownCandidate("particle_count must be positive")
    t = (PLUME_COST_REF_S
         * (extent_area_deg2 / AREA_REF)
         * (0.1 / sres) ** SPATIAL_COST_EXP
         * (interval.duration_h / DURATION_REF_H)
         * tres ** (-TEMPORAL_COST_EXP)
         * (pc / 1000.0))
    return t, plume_accuracy(params)


def fire_estimate(params: dict, extent_area_deg2: float,
                  interval: TimeInterval) -> tuple[float, float]:
    sres, tres = _check_resolutions(params)
    cells = extent_area_deg2 / (sres * sres)
    steps = interval.duration_h / tres
    t = FIRE_COST_PER_CELL_STEP_S * cells * steps
    err = 0.5 * max(_interp(SPATIAL_ERROR, sres), _interp(TEMPORAL_ERROR, tres))
    return t, max(0.0, min(1.0, 1.0 - err))


def puff_estimate(params: dict, extent_area_deg2: float,
                  interval: TimeInterval) -> tuple[float, float]:
    sres, tres = _check_resolutions(params)
    cells = extent_area_deg2 / (sres * sres)
    steps = interval.duration_h / tres
    t = PUFF_COST_PER_CELL_STEP_S * cells * steps
    err = 1.6 * max(_interp(SPATIAL_ERROR, sres), _interp(TEMPORAL_ERROR, tres))
    return t, max(0.0, min(1.0, 1.0 - err))


# --- offline validation -------------------------------------------------------

def accuracy_score(field: GridField, reference: GridField) -> float:
    """1 - RMSE(field, reference aggregated onto field's grid) / ref range."""
    ref = _align_reference(reference, field)
    rng = float(ref.values.max() - ref.values.min())
    if rng == 0.0:
        return 1.0 if np.array_equal(field.values, ref.values) else 0.0
    rmse = float(np.sqrt(np.mean((field.values - ref.values) ** 2)))
    return max(0.0, min(1.0, 1.0 - rmse / rng))


def _align_reference(reference: GridField, field: GridField) -> GridField:
    if (not reference.bbox.contains(field.bbox)
            or not reference.interval.contains(field.interval)):
        raise DegenerateReference("reference does not cover the evaluated field")
    su_r, su_f = to_udeg(reference.spatial_res), to_udeg(field.spatial_res)
    ts_r = hours_to_seconds(reference.temporal_res)
    ts_f = hours_to_seconds(field.temporal_res)
    i0 = (to_udeg(field.bbox.lat_min) - to_udeg(reference.bbox.lat_min)) // su_r
    j0 = (to_udeg(field.bbox.lon_min) - to_udeg(reference.bbox.lon_min)) // su_r
    t0 = (field.interval.start - reference.interval.start) // ts_r
    ni = (to_udeg(field.bbox.lat_max) - to_udeg(field.bbox.lat_min)) // su_r
    nj = (to_udeg(field.bbox.lon_max) - to_udeg(field.bbox.lon_min)) // su_r
    nt = (field.interval.end - field.interval.start) // ts_r
    sub = GridField(reference.attribute, field.bbox, field.interval,
                    reference.spatial_res, reference.temporal_res,
                    reference.values[i0:i0 + ni, j0:j0 + nj, t0:t0 + nt],
                    param_signature=reference.param_signature,
                    value_kind=reference.value_kind)
    if su_r == su_f and ts_r == ts_f:
        return sub
    return sub.aggregate(field.spatial_res, field.temporal_res)
