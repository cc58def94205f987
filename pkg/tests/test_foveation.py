import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foveasplat.errors import ConfigurationError, DomainError
from foveasplat.foveation import (
    FoveationConfig,
    FoveationProfile,
    band_level,
    disk_outside_fraction,
    foveal_radius,
    level_requests,
    profile_exits,
    profile_from_distances,
    tile_centers,
)
from foveasplat.gaze import ExitModel
from foveasplat.scene import Camera

from oracles import FROZEN_MC_E_DEG, classify_tiles, expected_distance_quadrature
from oracles import LAYER3_SIGMA as LAYER3
from oracles import LAYER6_SIGMA as LAYER6

CAM = Camera.from_fov(90.0, 1280, 720)
CFG = FoveationConfig.for_camera(CAM)


def test_foveal_radius_18_deg():
    assert abs(foveal_radius(rho_d=1000.0, theta_i=18.0, delta_theta=0.0) - 324.92) < 0.01


def test_foveal_radius_zero_angle():
    assert foveal_radius(rho_d=1000.0, theta_i=0.0, delta_theta=0.0) == 0.0


def test_foveal_radius_margin_grows():
    r0 = foveal_radius(rho_d=1000.0, theta_i=18.0, delta_theta=0.0)
    r2 = foveal_radius(FoveationConfig(rho_d=1000.0))
    assert abs(r2 - 363.97) < 0.01
    assert r2 > r0


def test_foveal_radius_domain():
    with pytest.raises(DomainError):
        foveal_radius(rho_d=1000.0, theta_i=80.0, delta_theta=10.0)


def test_rho_d_from_fov():
    assert abs(CFG.rho_d - 640.0) < 1e-9


@pytest.mark.parametrize("kwargs", [
    dict(rho_d=0.0),
    dict(rho_d=100.0, band_edges=(18.0, 33.0, 27.0)),
    dict(rho_d=100.0, theta_i=20.0),
    dict(rho_d=100.0, levels=(4, 3, 4, 1)),
])
def test_config_invariants(kwargs):
    with pytest.raises(ConfigurationError):
        FoveationConfig(**kwargs)


# --- profiling ----------------------------------------------------------------

def test_frozen_oracle_agrees_with_quadrature():
    quad = expected_distance_quadrature(np.array(LAYER3), np.array(LAYER6))
    assert abs(quad - FROZEN_MC_E_DEG) / quad < 0.005


def test_profile_matches_frozen_oracle():
    prof = profile_exits([LAYER3, LAYER6], samples=100_000, seed=0, cfg=CFG)
    assert abs(prof.expected_dist_deg[0] - FROZEN_MC_E_DEG) / FROZEN_MC_E_DEG < 0.02
    prof.check()


def test_profile_is_deterministic():
    a = profile_exits([LAYER3, LAYER6], samples=10_000, seed=5, cfg=CFG)
    b = profile_exits([LAYER3, LAYER6], samples=10_000, seed=5, cfg=CFG)
    assert a.to_dict() == b.to_dict()


def test_zero_error_profile():
    prof = profile_exits([(0.0, 0.0), (0.0, 0.0)], samples=1000, seed=0, cfg=CFG)
    assert prof.expected_dist_deg[0] == 0.0
    assert prof.r_f[0] == prof.r_fN


def test_huge_error_clamps_to_zero():
    prof = profile_from_distances([1e4, 0.0], [80.0, 0.0], CFG)
    assert prof.r_f[0] == 0.0


def test_negative_sigma_rejected():
    with pytest.raises(ConfigurationError):
        profile_exits([(-1.0, 1.0), (1.0, 1.0)], samples=100, cfg=CFG)


def test_preset_profile_invariants_and_radii():
    model = ExitModel.preset("unpruned")
    prof = profile_exits(model, samples=100_000, seed=0, cfg=CFG)
    prof.check()
    assert prof.r_fN == foveal_radius(CFG)
    assert np.all(np.diff(prof.r_f) >= 0)
    assert np.all(prof.r_max >= prof.r_fN)
    np.testing.assert_allclose(prof.r_max, prof.r_fN + prof.expected_dist_px)
    bound = np.maximum(0.0, prof.r_fN - prof.expected_dist_px)
    assert np.all(prof.r_f <= bound)
    # px distance is the mean of rho_d*tan(dist), at least rho_d*tan(mean dist)
    assert np.all(prof.expected_dist_px >= CFG.deg_to_px(prof.expected_dist_deg) - 1e-9)


def test_correlation_hook_shrinks_distance():
    ind = profile_exits([LAYER3, LAYER6], samples=50_000, seed=1, cfg=CFG)
    cor = profile_exits([LAYER3, LAYER6], samples=50_000, seed=1, cfg=CFG, correlation=0.8)
    assert cor.expected_dist_deg[0] < ind.expected_dist_deg[0]


def test_profile_json_roundtrip(tmp_path):
    prof = profile_exits(ExitModel.preset("pruned-0.2"), samples=5000, seed=2, cfg=CFG)
    p = tmp_path / "profile.json"
    prof.save(p)
    back = FoveationProfile.load(p)
    assert back.to_dict() == prof.to_dict()


def test_profile_check_catches_violation():
    prof = profile_from_distances([50.0, 0.0], [4.0, 0.0], CFG)
    prof.r_f[0] = prof.r_fN  # exceeds r_fN - E
    with pytest.raises(ConfigurationError):
        prof.check()


# --- geometry of the profiled radii --------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 2 * math.pi), st.floats(0, 1))
def test_containment_of_early_disk(frac, ang, r_frac):
    r_N = 300.0
    r_i = r_frac * r_N
    d = frac * (r_N - r_i)
    u_N = (640.0, 360.0)
    u_i = (u_N[0] + d * math.cos(ang), u_N[1] + d * math.sin(ang))
    assert disk_outside_fraction(u_i, r_i, u_N, r_N) <= 1e-12


def test_profiled_radii_reduce_waste():
    rng = np.random.default_rng(3)
    model = ExitModel.preset("unpruned")
    prof = profile_exits(model, samples=100_000, seed=0, cfg=CFG)
    n = 10_000
    i = 2  # exit 3
    e_i = rng.standard_normal((n, 2)) * model.sigma[i]
    e_N = rng.standard_normal((n, 2)) * model.sigma[-1]
    c = np.array([640.0, 360.0])
    u_i = c + CFG.rho_d * np.tan(np.radians(e_i))
    u_N = c + CFG.rho_d * np.tan(np.radians(e_N))
    r = prof.r_f[i]
    waste = np.mean([disk_outside_fraction(a, r, b, prof.r_fN) for a, b in zip(u_i, u_N)])
    bigger = np.mean([disk_outside_fraction(a, 1.5 * r, b, prof.r_fN) for a, b in zip(u_i, u_N)])
    assert waste < bigger


def test_speculative_radius_covers_final_disk():
    rng = np.random.default_rng(4)
    model = ExitModel.preset("unpruned")
    prof = profile_exits(model, samples=100_000, seed=0, cfg=CFG)
    checked = 0
    for _ in range(5000):
        j = int(rng.integers(0, model.n_exits - 1))
        e = rng.standard_normal((2, 2)) * model.sigma[[j, -1]]
        u = 640.0 + CFG.rho_d * np.tan(np.radians(e))
        if np.hypot(*(u[0] - u[1])) <= prof.expected_dist_px[j]:
            checked += 1
            assert disk_outside_fraction(u[1], prof.r_fN, u[0], prof.r_max[j]) <= 1e-12
    assert checked > 1000


def test_disk_outside_fraction_values():
    assert disk_outside_fraction((0, 0), 1.0, (10, 0), 1.0) == 1.0
    assert disk_outside_fraction((0, 0), 1.0, (0, 0), 2.0) == 0.0
    assert abs(disk_outside_fraction((0, 0), 2.0, (0, 0), 1.0) - 0.75) < 1e-12


# --- tile requests ------------------------------------------------------------

def test_gaze_tile_gets_level4():
    req = level_requests((640.0, 368.0), 0.0, foveal_radius(CFG), CFG, CAM)
    assert req[368 // 32, 640 // 32] == 4


def test_far_tile_level1():
    assert band_level(40.0, CFG) == 1
    req = level_requests((16.0, 16.0), 0.0, foveal_radius(CFG), CFG, CAM)
    X, Y = tile_centers(CAM)
    ecc = np.degrees(np.arctan(np.hypot(X - 16, Y - 16) / CFG.rho_d))
    assert np.all(req[ecc > 33.0] == 1)


def test_band_edges_belong_to_inner_band():
    assert band_level(27.0, CFG) == 3
    assert band_level(27.0001, CFG) == 2


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 1280), st.floats(0, 720), st.floats(0, 500))
def test_requests_match_brute_force(gx, gy, r):
    want = classify_tiles((gx, gy), r, 1280, 720, CFG.rho_d, CFG.band_edges, CFG.levels)
    np.testing.assert_array_equal(level_requests((gx, gy), 0.0, r, CFG, CAM), want)


def test_inner_radius_must_not_exceed_outer():
    with pytest.raises(ValueError):
        level_requests((0.0, 0.0), 10.0, 5.0, CFG, CAM)


def test_band_classification_rotationally_symmetric():
    # gaze on a tile center: mirrored and transposed tile offsets share a level
    gaze = (656.0, 368.0)
    req = level_requests(gaze, 0.0, foveal_radius(CFG), CFG, CAM)
    gx, gy = 656 // 32, 368 // 32
    full_rows, full_cols = 720 // 32, 1280 // 32

    def level(ox, oy):
        tx, ty = gx + ox, gy + oy
        if 0 <= tx < full_cols and 0 <= ty < full_rows:
            return req[ty, tx]
        return None

    compared = 0
    for dy in range(-gy, gy + 1):
        for dx in range(-gx, gx + 1):
            here = level(dx, dy)
            for ox, oy in [(-dx, dy), (dx, -dy), (-dx, -dy), (dy, dx)]:
                other = level(ox, oy)
                if here is not None and other is not None:
                    assert here == other
                    compared += 1
    assert compared > 1000
