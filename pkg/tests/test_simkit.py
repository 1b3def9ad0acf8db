import math

import numpy as np
import pytest
from scipy.special import erf

from genie.errors import (DegenerateReference, EmissionsGeometryMismatch,
                          MissingIgnitionFields, UnknownCandidate)
from genie.gridstore import BBox, Domain, GridField, TimeInterval
from genie.simkit import (FireAdapter, PlumeAdapter, PuffAdapter, SimRequest,
                          UniformWind, accuracy_score, plume_estimate)
from genie.simkit.costmodel import fire_estimate, plume_accuracy

M_PER_DEG = 111320.0


@pytest.fixture
def flat_domain() -> Domain:
    return Domain(BBox(0.0, 1.0, 10.0, 11.0),
                  TimeInterval.from_strings("2024-01-01", "2024-01-01 06:00"))


def _point_emissions(domain, sres, tres, lat, lon, rate=1.0, active_bins=(0,)):
    spec = domain.grid(sres, tres)
    box, iv = spec.snap_outward(domain.bbox, domain.interval)
    shape = GridField.expected_shape(box, iv, sres, tres)
    vals = np.zeros(shape)
    i = int((lat - box.lat_min) / sres)
    j = int((lon - box.lon_min) / sres)
    for t in active_bins:
        vals[i, j, t] = rate
    return GridField(("fire_emissions", "emission_rate"), box, iv, sres, tres, vals)


def _plume_request(domain, em, sres, tres, pc, seed=1):
    return SimRequest(domain, [em.bbox], em.interval,
                      {"spatial_res": sres, "temporal_res": tres,
                       "particle_count": pc},
                      attribute=("smoke_dispersion", "concentration"),
                      inputs={("fire_emissions", "emission_rate"): em}, seed=seed)


# --- fire ---------------------------------------------------------------------

def _fire(domain, intensity, duration, sres=0.01, tres=4.0, wind=None):
    adapter = FireAdapter(wind, pulse_amplitude=0.0)
    adapter.set_ignitions([{"fire_id": 1, "lat": 0.5, "lon": 10.5,
                            "start_time": domain.interval.start,
                            "duration": duration, "fire_intensity": intensity}])
    spec = domain.grid(sres, tres)
    box, iv = spec.snap_outward(domain.bbox, domain.interval)
    req = SimRequest(domain, [box], iv, {"spatial_res": sres, "temporal_res": tres},
                     attribute=("fire_emissions", "emission_rate"), seed=0)
    return adapter.execute(req).fields[0]


def test_zero_intensity_emits_nothing(flat_domain):
    f = _fire(flat_domain, intensity=0.0, duration=12.0)
    assert not f.values.any()


def test_zero_duration_emits_nothing(flat_domain):
    f = _fire(flat_domain, intensity=3.0, duration=0.0)
    assert not f.values.any()


def test_burn_front_matches_disk_oracle(flat_domain):
    # spread 0.5 km/h per intensity unit, intensity 2 -> 1 km/h; the first
    # 4 h bin averages the front over its quadrature sub-times, so the
    # radii are 2/3, 2, and 10/3 km (no wind: plain disks)
    f = _fire(flat_domain, intensity=2.0, duration=12.0, sres=0.01, tres=4.0)
    burn = f.values[:, :, 0]
    lat_c = f.bbox.lat_min + (np.arange(f.nlat) + 0.5) * 0.01
    lon_c = f.bbox.lon_min + (np.arange(f.nlon) + 0.5) * 0.01
    dy = (lat_c[:, None] - 0.5) * M_PER_DEG
    dx = (lon_c[None, :] - 10.5) * M_PER_DEG * math.cos(math.radians(0.5))
    dist = np.hypot(dx, dy)
    cell_m = 0.01 * M_PER_DEG
    half_diag = 0.5 * math.hypot(cell_m, cell_m * math.cos(math.radians(0.5)))
    rate = 2.0 * FireAdapter().beta
    radii = [1000.0 * (4.0 / 6.0), 2000.0, 1000.0 * (20.0 / 6.0)]
    # cells wholly inside the smallest disk burn at the full rate;
    # wholly past the largest disk, nothing burns
    inside = dist <= min(radii) - half_diag
    outside = dist >= max(radii) + half_diag
    assert np.allclose(burn[inside], rate)
    assert not burn[outside].any()
    # total burning area equals the mean of the three analytic disks
    cell_area = (0.01 * M_PER_DEG) * (0.01 * M_PER_DEG * math.cos(math.radians(0.5)))
    area = burn.sum() / rate * cell_area
    expect = math.pi * sum(r * r for r in radii) / 3.0
    assert area == pytest.approx(expect, rel=0.03)


def test_wind_elongates_front(flat_domain):
    f = _fire(flat_domain, intensity=2.0, duration=12.0, sres=0.01, tres=4.0,
              wind=UniformWind(5.0, 0.0))
    burn = f.values[:, :, 0] > 0
    ii, jj = np.nonzero(burn)
    lon_span = (jj.max() - jj.min() + 1)
    lat_span = (ii.max() - ii.min() + 1)
    assert lon_span > lat_span   # stretched along the (eastward) wind


def test_missing_ignition_fields_rejected():
    adapter = FireAdapter()
    with pytest.raises(MissingIgnitionFields):
        adapter.set_ignitions([{"fire_id": 1, "lat": 0.0}])


# --- plume ---------------------------------------------------------------------

def test_zero_emissions_zero_concentration(flat_domain):
    em = _point_emissions(flat_domain, 0.05, 1.0, 0.5, 10.5, rate=0.0)
    res = PlumeAdapter(UniformWind(2.0, 0.0)).execute(
        _plume_request(flat_domain, em, 0.05, 1.0, 1000))
    assert not res.fields[0].values.any()


def test_mass_conserved_every_sampling_step(flat_domain):
    em = _point_emissions(flat_domain, 0.05, 1.0, 0.5, 10.5, rate=3.0,
                          active_bins=(0, 1, 2))
    res = PlumeAdapter(UniformWind(4.0, 1.0)).execute(
        _plume_request(flat_domain, em, 0.05, 1.0, 2000))
    for step in res.diagnostics["mass_ledger"]:
        if step["released"] > 0:
            err = abs(step["airborne"] + step["exited"] - step["released"])
            assert err / step["released"] < 1e-9


def test_determinism_bit_identical(flat_domain):
    em = _point_emissions(flat_domain, 0.05, 1.0, 0.5, 10.5, rate=2.0)
    a = PlumeAdapter(UniformWind(3.0, 0.5)).execute(
        _plume_request(flat_domain, em, 0.05, 1.0, 1500, seed=42))
    b = PlumeAdapter(UniformWind(3.0, 0.5)).execute(
        _plume_request(flat_domain, em, 0.05, 1.0, 1500, seed=42))
    assert np.array_equal(a.fields[0].values, b.fields[0].values)
    c = PlumeAdapter(UniformWind(3.0, 0.5)).execute(
        _plume_request(flat_domain, em, 0.05, 1.0, 1500, seed=43))
    assert not np.array_equal(a.fields[0].values, c.fields[0].values)


def _gaussian_oracle_nrmse(domain, sres, pc, seed):
    """NRMSE of the final bin against the cell-averaged analytic solution."""
    K, u, v = 500.0, 2.0, 0.5
    em = _point_emissions(domain, sres, 1.0, 0.5, 10.3, rate=1.0)
    adapter = PlumeAdapter(UniformWind(u, v), diffusivity_m2s=K)
    req = _plume_request(domain, em, sres, 1.0, pc, seed=seed)
    res = adapter.execute(req)
    field = res.fields[0]
    dt = 3600.0
    t_end = 6 * 3600.0
    led = res.diagnostics["mass_ledger"][-1]
    mass = led["released"]
    src_i = int((10.3 - field.bbox.lon_min) / sres)
    src_lat = field.bbox.lat_min + (int((0.5 - field.bbox.lat_min) / sres) + 0.5) * sres
    src_lon = field.bbox.lon_min + (src_i + 0.5) * sres
    # midpoint binning represents the state at t - dt/2 with variance
    # accumulated to t - 3dt/4: Var((X_{n-1}+X_n)/2) = 2K dt (n - 3/4)
    t_mean = t_end - 0.5 * dt
    t_var = t_end - 0.75 * dt
    mu_lat = src_lat + v * t_mean / M_PER_DEG
    mu_lon = src_lon + u * t_mean / (M_PER_DEG * math.cos(math.radians(src_lat)))
    sigma = math.sqrt(2.0 * K * t_var)
    lat_edges = field.bbox.lat_min + np.arange(field.nlat + 1) * sres
    lon_edges = field.bbox.lon_min + np.arange(field.nlon + 1) * sres
    y_edges = (lat_edges - mu_lat) * M_PER_DEG
    x_edges = (lon_edges - mu_lon) * M_PER_DEG * math.cos(math.radians(src_lat))
    cdf_y = 0.5 * (1.0 + erf(y_edges / (sigma * math.sqrt(2.0))))
    cdf_x = 0.5 * (1.0 + erf(x_edges / (sigma * math.sqrt(2.0))))
    cell_mass = mass * np.outer(np.diff(cdf_y), np.diff(cdf_x))
    lat_centers = field.bbox.lat_min + (np.arange(field.nlat) + 0.5) * sres
    areas = (sres * M_PER_DEG) * (sres * M_PER_DEG * np.cos(np.radians(lat_centers)))
    oracle = cell_mass / areas[:, None]
    got = field.values[:, :, -1]
    rmse = math.sqrt(np.mean((got - oracle) ** 2))
    return rmse / (oracle.max() - oracle.min())


def test_point_release_matches_analytic_gaussian(flat_domain):
    # effective particles per release = pc * (0.1/0.02) * area_factor(1/3.75)
    pc = round(100000 / (5.0 * (1.0 / 3.75)))
    nrmse = _gaussian_oracle_nrmse(flat_domain, 0.02, pc, seed=11)
    assert nrmse < 0.1


def test_convergence_with_particle_count(flat_domain):
    factor = 5.0 * (1.0 / 3.75)
    meds = []
    for target in (1000, 10000, 100000):
        pc = round(target / factor)
        vals = [_gaussian_oracle_nrmse(flat_domain, 0.02, pc, seed=s)
                for s in (1, 2, 3, 4, 5)]
        meds.append(np.median(vals))
    assert meds[0] > meds[1] > meds[2]


def test_emissions_resolution_mismatch_rejected(flat_domain):
    em = _point_emissions(flat_domain, 0.05, 1.0, 0.5, 10.5)
    with pytest.raises(EmissionsGeometryMismatch):
        PlumeAdapter(UniformWind(1.0, 0.0)).execute(
            _plume_request(flat_domain, em, 0.02, 1.0, 1000))


def test_config_record_written(flat_domain, tmp_path):
    em = _point_emissions(flat_domain, 0.05, 1.0, 0.5, 10.5)
    adapter = PlumeAdapter(UniformWind(1.0, 0.0))
    adapter.execute(_plume_request(flat_domain, em, 0.05, 1.0, 1000),
                    config_dir=tmp_path)
    records = list(tmp_path.glob("hysplit-*.control"))
    assert len(records) == 1
    text = records[0].read_text()
    assert "adapter hysplit" in text
    assert "particles_per_release" in text


# --- puff ------------------------------------------------------------------------

def test_puff_runs_and_roughly_tracks_plume(flat_domain):
    em = _point_emissions(flat_domain, 0.05, 1.0, 0.5, 10.3, rate=1.0)
    wind = UniformWind(2.0, 0.5)
    plume = PlumeAdapter(wind).execute(_plume_request(flat_domain, em, 0.05, 1.0, 20000))
    puff = PuffAdapter(wind).execute(_plume_request(flat_domain, em, 0.05, 1.0, 1000))
    a, b = plume.fields[0].values[:, :, -1], puff.fields[0].values[:, :, -1]
    ia = np.unravel_index(np.argmax(a), a.shape)
    ib = np.unravel_index(np.argmax(b), b.shape)
    assert abs(ia[0] - ib[0]) <= 2 and abs(ia[1] - ib[1]) <= 2
    assert b.max() == pytest.approx(a.max(), rel=0.5)


# --- estimates and accuracy ---------------------------------------------------------

def _iv(hours=72):
    return TimeInterval.from_strings("2024-08-15", "2024-08-15").start, hours


def test_estimate_linear_in_area():
    iv = TimeInterval(0, 72 * 3600)
    p = {"spatial_res": 0.1, "temporal_res": 1.0, "particle_count": 1000}
    t1, _ = plume_estimate(p, 2.0, iv)
    t2, _ = plume_estimate(p, 4.0, iv)
    assert t2 == pytest.approx(2 * t1)


def test_estimate_spatial_ratio_window():
    iv = TimeInterval(0, 72 * 3600)
    t_fine, _ = plume_estimate({"spatial_res": 0.01, "temporal_res": 1.0,
                                "particle_count": 1000}, 3.75, iv)
    t_coarse, _ = plume_estimate({"spatial_res": 0.1, "temporal_res": 1.0,
                                  "particle_count": 1000}, 3.75, iv)
    assert 8.0 <= t_fine / t_coarse <= 12.0


def test_estimate_temporal_ratio_window():
    iv = TimeInterval(0, 72 * 3600)
    t_fine, _ = plume_estimate({"spatial_res": 0.1, "temporal_res": 0.25,
                                "particle_count": 1000}, 3.75, iv)
    t_coarse, _ = plume_estimate({"spatial_res": 0.1, "temporal_res": 6.0,
                                  "particle_count": 1000}, 3.75, iv)
    assert 10.0 <= t_fine / t_coarse <= 15.0


def test_estimate_accuracy_sweet_spot():
    a = plume_accuracy({"spatial_res": 0.1, "temporal_res": 1.5,
                        "particle_count": 1000})
    assert 0.85 <= a <= 0.90
    for tau in (1.0, 1.25, 1.75, 2.0):
        a = plume_accuracy({"spatial_res": 0.1, "temporal_res": tau,
                            "particle_count": 1000})
        assert 0.85 <= a <= 0.90, tau
    for tau in (4.0, 5.0, 6.0):
        a = plume_accuracy({"spatial_res": 0.1, "temporal_res": tau,
                            "particle_count": 1000})
        assert 0.70 <= a <= 0.80, tau


def test_estimate_monotone_along_axes():
    iv = TimeInterval(0, 72 * 3600)
    # walk coarse -> fine: T strictly increases, A never decreases
    for axis, values in (("spatial_res", (0.5, 0.2, 0.1, 0.05, 0.02, 0.01)),
                         ("temporal_res", (6.0, 3.0, 1.0, 0.5, 0.25))):
        prev_t, prev_a = None, None
        for v in values:
            params = {"spatial_res": 0.1, "temporal_res": 1.0,
                      "particle_count": 1000, axis: v}
            t, a = plume_estimate(params, 3.75, iv)
            if prev_t is not None:
                assert t > prev_t
                assert a >= prev_a
            prev_t, prev_a = t, a


def test_estimate_finest_is_unit_accuracy():
    a = plume_accuracy({"spatial_res": 0.01, "temporal_res": 0.25,
                        "particle_count": 10000})
    assert a == 1.0


def test_estimate_rejects_out_of_range():
    iv = TimeInterval(0, 3600)
    with pytest.raises(UnknownCandidate):
        plume_estimate({"spatial_res": 5.0, "temporal_res": 1.0}, 1.0, iv)
    with pytest.raises(UnknownCandidate):
        plume_estimate({"spatial_res": 0.1, "temporal_res": 24.0}, 1.0, iv)
    with pytest.raises(UnknownCandidate):
        plume_estimate({"spatial_res": 0.1}, 1.0, iv)


def test_fire_estimate_cheaper_than_plume():
    iv = TimeInterval(0, 72 * 3600)
    p = {"spatial_res": 0.1, "temporal_res": 1.0, "particle_count": 1000}
    tf, _ = fire_estimate(p, 3.75, iv)
    tp, _ = plume_estimate(p, 3.75, iv)
    assert tf < tp


def _field_of(vals, sres=0.01, tres=0.25):
    vals = np.asarray(vals, dtype=float)
    box = BBox(0.0, vals.shape[0] * sres, 10.0, 10.0 + vals.shape[1] * sres)
    iv = TimeInterval(0, round(vals.shape[2] * tres * 3600))
    return GridField(("t", "c"), box, iv, sres, tres, vals)


def test_accuracy_score_identity():
    f = _field_of(np.random.default_rng(0).uniform(0, 9, (4, 4, 4)))
    assert accuracy_score(f, f) == 1.0


def test_accuracy_score_full_range_offset_is_zero():
    ref = _field_of(np.random.default_rng(1).uniform(0, 10, (4, 4, 4)))
    rng_span = ref.values.max() - ref.values.min()
    shifted = _field_of(ref.values + rng_span)
    assert accuracy_score(shifted, ref) == 0.0


def test_accuracy_score_degenerate_reference():
    ref = _field_of(np.full((2, 2, 2), 3.0))
    same = _field_of(np.full((2, 2, 2), 3.0))
    other = _field_of(np.full((2, 2, 2), 4.0))
    assert accuracy_score(same, ref) == 1.0
    assert accuracy_score(other, ref) == 0.0


def test_accuracy_score_aggregates_reference():
    rng = np.random.default_rng(3)
    ref = _field_of(rng.uniform(0, 10, (8, 8, 4)), sres=0.01, tres=0.25)
    coarse = _field_of(ref.values.reshape(4, 2, 4, 2, 2, 2).mean(axis=(1, 3, 5)),
                       sres=0.02, tres=0.5)
    assert accuracy_score(coarse, ref) == pytest.approx(1.0, abs=1e-9)
