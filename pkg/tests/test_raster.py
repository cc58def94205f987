import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foveasplat.raster import (
    SLOT_OFFSETS,
    FrameState,
    composite_pixels,
    composite_tile,
    dump_level_map,
    fill_holes,
    read_ppm,
    render_full,
    render_region,
    tile_slot_size,
    write_ppm,
)
from foveasplat.scene import Camera
from foveasplat.splat import Splat2D, Splats, build_workset, project

from oracles import composite_reference


def single_tile_ws(splats, size=32):
    cam = Camera.from_fov(90.0, size, size)
    return build_workset(Splats.from_list(splats), cam)


def full_request(frame, level):
    return np.full(frame.level_map.shape, level)


def test_empty_tile_gives_background():
    ws = single_tile_ws([])
    frame = FrameState.for_workset(ws)
    render_region(ws, frame, full_request(frame, 4))
    assert np.all(frame.color == 0.0)


def test_single_opaque_splat_clamped():
    color = (0.2, 0.7, 0.4)
    bg = np.array([0.1, 0.3, 0.9])
    sp = Splat2D((8.5, 8.5), (1e6, 0.0, 1e6), 1.0, color, 1.0, 1)
    ws = single_tile_ws([sp])
    frame = FrameState.for_workset(ws, background=bg)
    render_region(ws, frame, full_request(frame, 4))
    np.testing.assert_allclose(frame.color[8, 8], 0.99 * np.array(color) + 0.01 * bg, atol=1e-15)
    np.testing.assert_array_equal(frame.color[0, 0], bg)


def test_ten_splats_match_reference(rng):
    for _ in range(50):
        splats = []
        for _ in range(10):
            a, c = rng.uniform(0.01, 0.3, 2)
            splats.append(((rng.uniform(0, 32), rng.uniform(0, 32)),
                           (a, rng.uniform(-0.5, 0.5) * np.sqrt(a * c), c),
                           rng.uniform(0, 1, 3), rng.uniform(0.3, 1.0)))
        x, y = rng.uniform(0, 32, 2)
        m = np.array([s[0] for s in splats])
        got = composite_pixels(np.array([x]), np.array([y]), m,
                               np.array([s[1] for s in splats]),
                               np.array([s[2] for s in splats]),
                               np.array([s[3] for s in splats]), np.zeros(3))[0]
        want = composite_reference(x, y, splats, np.zeros(3))
        np.testing.assert_allclose(got, want, atol=1e-4)


# --- hole filling ---------------------------------------------------------------

def _frame_at(small_ws, level):
    frame = FrameState.for_workset(small_ws)
    render_region(small_ws, frame, full_request(frame, level))
    return frame


def test_level1_blocks_uniform(small_ws):
    frame = _frame_at(small_ws, 1)
    c = frame.color
    for dx, dy in SLOT_OFFSETS.values():
        np.testing.assert_array_equal(c[dy::2, dx::2], c[0::2, 0::2])


def test_level2_fills_slots_3_and_4_only(small_ws):
    frame = _frame_at(small_ws, 2)
    c = frame.color
    np.testing.assert_array_equal(c[0::2, 1::2], c[0::2, 0::2])  # slot 3
    np.testing.assert_array_equal(c[1::2, 0::2], c[0::2, 0::2])  # slot 4
    ref = _frame_at(small_ws, 4).color
    np.testing.assert_array_equal(c[1::2, 1::2], ref[1::2, 1::2])  # slot 2 rendered


def test_fill_holes_identity_at_level4_and_idempotent(small_ws):
    frame = _frame_at(small_ws, 4)
    before = frame.color.copy()
    for t in range(small_ws.n_tiles):
        fill_holes(frame, t)
    np.testing.assert_array_equal(frame.color, before)
    frame = _frame_at(small_ws, 2)
    before = frame.color.copy()
    fill_holes(frame, 0)
    np.testing.assert_array_equal(frame.color, before)


def test_fill_holes_needs_rendered_tile(small_ws):
    frame = FrameState.for_workset(small_ws)
    with pytest.raises(ValueError):
        fill_holes(frame, 0)


# --- rounds -------------------------------------------------------------------

def test_repeat_request_is_noop(small_ws):
    frame = FrameState.for_workset(small_ws)
    render_region(small_ws, frame, full_request(frame, 1))
    second = render_region(small_ws, frame, full_request(frame, 1))
    assert second.pixels_composited == 0 and second.tiles_upgraded == 0


def test_level2_after_level1_is_256_pixels(small_ws):
    frame = FrameState.for_workset(small_ws)
    render_region(small_ws, frame, {(0, 0): 1})
    rnd = render_region(small_ws, frame, {(0, 0): 2})
    assert rnd.pixels_composited == 256


def test_partial_tile_slot_size():
    cam = Camera.from_fov(90.0, 48, 40)
    ws = build_workset(Splats.empty(), cam)
    assert tile_slot_size(ws, (0, 0)) == 256
    assert tile_slot_size(ws, (1, 0)) == 8 * 16
    assert tile_slot_size(ws, (1, 1)) == 8 * 4


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.integers(0, 4), min_size=15, max_size=15), min_size=1, max_size=5))
def test_work_accounting(small_ws, requests):
    frame = FrameState.for_workset(small_ws)
    for req in requests:
        req = np.array(req).reshape(frame.level_map.shape)
        old = frame.level_map.copy()
        rnd = render_region(small_ws, frame, req, shade=False)
        new = frame.level_map
        assert np.all(new >= old)
        want = sum(tile_slot_size(small_ws, t) * (new.flat[t] - old.flat[t])
                   for t in range(small_ws.n_tiles))
        assert rnd.pixels_composited == want


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.integers(0, 4), min_size=15, max_size=15), min_size=1, max_size=4))
def test_path_independence(small_ws, requests):
    frame = FrameState.for_workset(small_ws)
    for req in requests:
        render_region(small_ws, frame, np.array(req).reshape(frame.level_map.shape))
    one = FrameState.for_workset(small_ws)
    render_region(small_ws, one, frame.level_map.copy())
    np.testing.assert_array_equal(frame.color, one.color)
    np.testing.assert_array_equal(frame.level_map, one.level_map)


def test_level4_equals_full_rasterizer(small_ws):
    frame = _frame_at(small_ws, 4)
    np.testing.assert_array_equal(frame.color, render_full(small_ws))


def test_input_order_does_not_matter(small_scene, small_cam, rng):
    sp = project(small_scene, small_cam)
    perm = rng.permutation(len(sp))
    shuffled = Splats(sp.mean2d[perm], sp.conic[perm], sp.cov2d[perm], sp.depth[perm],
                      sp.color[perm], sp.opacity[perm], sp.radius[perm], sp.source[perm])
    a = render_full(build_workset(sp, small_cam))
    b = render_full(build_workset(shuffled, small_cam))
    np.testing.assert_array_equal(a, b)


def test_thread_pool_matches_serial(small_ws):
    a = FrameState.for_workset(small_ws)
    b = FrameState.for_workset(small_ws)
    req = np.arange(small_ws.n_tiles).reshape(a.level_map.shape) % 5
    render_region(small_ws, a, req)
    render_region(small_ws, b, req, workers=4)
    np.testing.assert_array_equal(a.color, b.color)


def test_composite_tile_rejects_downgrade(small_ws):
    frame = FrameState.for_workset(small_ws)
    with pytest.raises(ValueError):
        composite_tile(small_ws, 0, 2, 2, frame)


def test_request_out_of_range(small_ws):
    frame = FrameState.for_workset(small_ws)
    with pytest.raises(ValueError):
        render_region(small_ws, frame, full_request(frame, 5))


def test_ppm_and_level_dump(tmp_path, small_ws):
    frame = _frame_at(small_ws, 3)
    p = tmp_path / "f.ppm"
    write_ppm(p, frame.color)
    back = read_ppm(p)
    assert back.shape == frame.color.shape
    assert np.abs(back - np.clip(frame.color, 0, 1)).max() <= 0.5 / 255 + 1e-12
    rows = dump_level_map(frame).splitlines()
    assert len(rows) == frame.level_map.shape[0]
    assert set(" ".join(rows).split()) == {"3"}
