import threading

import numpy as np
import pytest

import foveasplat.scheduler as scheduler
from foveasplat.errors import ConfigurationError, ConsistencyError, FrameAborted
from foveasplat.foveation import FoveationConfig, foveal_radius, level_requests, profile_exits, \
    profile_from_distances
from foveasplat.gaze import ExitModel, GazePrediction, GazeTruth
from foveasplat.raster import RenderRound, render_full
from foveasplat.scene import Camera
from foveasplat.scheduler import (
    SPEC_STEP,
    EventCostModel,
    FrameSchedule,
    SharedGazeSlot,
    account,
    run_frame,
    speculate,
)
from foveasplat.splat import Splats, build_workset

CAM = Camera.from_fov(90.0, 320, 192)
CFG = FoveationConfig.for_camera(CAM)
MODEL = ExitModel.preset("unpruned")
PROFILE = profile_exits(MODEL, samples=20_000, seed=0, cfg=CFG)
COST = EventCostModel.calibrate(151.239, CAM.width, CAM.height)
EMPTY_WS = build_workset(Splats.empty(), CAM)


def pred(i, t=0.0, point=(1.0, 1.0)):
    return GazePrediction(i, point, t, False)


# --- shared slot ---------------------------------------------------------------

def test_slot_reads_are_whole_and_monotone():
    slot = SharedGazeSlot()
    n = 3000
    bad = []

    def writer():
        for i in range(1, n + 1):
            slot.write(pred(i, float(i), (float(i), float(-i))))
        slot.close()

    def reader():
        last = 0
        while True:
            count, latest = slot.read()
            if latest is not None:
                # a torn read would mix fields of different writes
                if not (latest.exit_index == count and latest.point == (count, -count)
                        and latest.available_at == count):
                    bad.append((count, latest))
            if count < last:
                bad.append(("regressed", count, last))
            last = count
            if slot.closed and count == n:
                return

    threads = [threading.Thread(target=writer), threading.Thread(target=reader)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=30)
    assert not bad


def test_slot_rejects_non_increasing_exit():
    slot = SharedGazeSlot()
    slot.write(pred(2))
    with pytest.raises(ValueError):
        slot.write(pred(2))


def test_slot_wait_returns_false_after_close():
    slot = SharedGazeSlot()
    assert slot.read() == (0, None)
    slot.close()
    assert slot.wait_for_write(0, timeout=1.0) is False


# --- speculation -------------------------------------------------------------------

def test_speculation_cap_from_expected_distance():
    cfg = FoveationConfig(rho_d=1000.0)
    r_fN = foveal_radius(cfg)
    prof = profile_from_distances([100.0, 0.0], [5.0, 0.0], cfg)
    assert prof.r_max[0] == pytest.approx(r_fN + 100.0)


def test_speculate_done_at_cap():
    prof = profile_from_distances([100.0, 0.0], [5.0, 0.0], CFG)
    assert speculate(1, prof.r_max[0], prof) is None
    assert speculate(1, prof.r_max[0] + 1.0, prof) is None


def test_speculation_steps_cover_range():
    prof = profile_from_distances([100.0, 0.0], [5.0, 0.0], CFG)
    r = float(prof.r_f[0])
    steps = [r]
    while (nxt := speculate(1, r, prof)) is not None:
        steps.append(nxt)
        r = nxt
    assert steps[-1] == prof.r_max[0]
    gaps = np.diff(steps)
    assert np.all(gaps[:-1] == SPEC_STEP) and 0 < gaps[-1] <= SPEC_STEP


# --- accounting ------------------------------------------------------------------

def _manual(mode, t_d, render_start, render_end, t_s_c=2.0):
    s = FrameSchedule(mode, "event", 0, (0.0, 0.0), t_s_c=t_s_c, gaze_end=t_d,
                      render_start=render_start, render_end=render_end)
    s.rounds = [RenderRound(1, None, 0, 0, render_end - render_start, render_start)]
    return s


def test_sfr_sum_identity():
    lat = account(_manual("SFR", 26.28, 26.28, 26.28 + 37.78))
    assert lat.t_tot == pytest.approx(2.0 + 64.06)
    assert lat.t_r == pytest.approx(37.78)


def test_a3fr_max_identity():
    lat = account(_manual("A3FR", 26.28, 0.0, 37.78))
    assert lat.t_tot == pytest.approx(2.0 + 37.78)


def test_frr_has_no_tracker():
    lat = account(_manual("FRR", 0.0, 0.0, 151.239, t_s_c=0.0))
    assert lat.t_d == 0.0 and lat.t_tot == pytest.approx(151.239)


def test_corrupted_schedule_detected():
    s = _manual("A3FR", 26.28, 0.0, 37.78)
    s.rounds[0].elapsed += 1.0  # busy time no longer matches the timeline
    with pytest.raises(ConsistencyError):
        account(s)


# --- frames ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def cam_ws(small_scene):
    from foveasplat.splat import project
    return build_workset(project(small_scene, CAM), CAM)


def test_frr_equals_one_shot_render(cam_ws):
    frame, sched = run_frame(cam_ws, CAM, None, None, CFG, "FRR", cost=COST)
    np.testing.assert_array_equal(frame.color, render_full(cam_ws))
    assert np.all(frame.level_map == 4)
    assert sched.latency.t_d == 0.0 and sched.latency.t_tot == pytest.approx(151.239)


@pytest.mark.parametrize("gaze", [(160.0, 96.0), (40.0, 150.0)])
def test_noiseless_a3fr_matches_sfr(cam_ws, gaze):
    model = MODEL.noiseless()
    prof = profile_exits(model, samples=1000, seed=0, cfg=CFG)
    truth = GazeTruth(gaze)
    a, sa = run_frame(cam_ws, CAM, truth, model, CFG, "A3FR", seed=3, profile=prof, cost=COST)
    s, ss = run_frame(cam_ws, CAM, truth, model, CFG, "SFR", seed=3, profile=prof, cost=COST)
    np.testing.assert_array_equal(a.color, s.color)
    np.testing.assert_array_equal(a.level_map, s.level_map)
    assert sa.latency.t_tot < ss.latency.t_tot


def _a3fr(seed, **kw):
    kw.setdefault("profile", PROFILE)
    kw.setdefault("cost", COST)
    return run_frame(EMPTY_WS, CAM, None, MODEL, CFG, "A3FR", seed=seed, shade=False, **kw)


@pytest.mark.parametrize("seed", range(10))
def test_rounds_use_freshest_exit(seed):
    _, s = _a3fr(seed)
    times = np.array([p.available_at for p in s.gaze_log])
    latest = 0
    for r in s.rounds[1:]:
        visible = int(np.searchsorted(times, r.start, side="right"))
        assert r.write_count == visible
        latest = max(latest, r.exit_index)
        assert r.exit_index == visible == latest
        assert r.gaze_used == s.gaze_log[r.exit_index - 1].point


@pytest.mark.parametrize("seed", range(10))
def test_idle_only_when_nothing_left(seed):
    _, s = _a3fr(seed, cost=EventCostModel(2e-5))
    assert s.idle
    for a, b in s.idle:
        before = [r for r in s.rounds if r.start + r.elapsed <= a + 1e-9][-1]
        if before.kind == "preprocess+periphery":
            continue
        # the current exit's speculative disk is complete
        assert before.outer_r == PROFILE.r_max[before.exit_index - 1]


def test_final_region_at_full_level():
    _, s = _a3fr(4)
    want = level_requests(s.final_gaze, 0.0, PROFILE.r_fN, CFG, CAM)
    frame, _ = _a3fr(4)
    assert np.all(frame.level_map >= want)
    assert s.rounds[-1].exit_index == MODEL.n_exits


def test_stalled_gaze_speculates_to_cap():
    frame, s = _a3fr(5, stall_after=2)
    assert s.exits_written == 2
    assert s.rounds[-1].kind == "speculative"
    assert s.rounds[-1].outer_r == PROFILE.r_max[1]
    assert s.gaze_end == MODEL.cumulative_ms[1]
    want = level_requests(s.gaze_log[1].point, 0.0, PROFILE.r_max[1], CFG, CAM)
    assert np.all(frame.level_map >= want)


def test_no_speculation_waits_instead():
    # cheap rendering so the worker outpaces the tracker
    _, s = run_frame(EMPTY_WS, CAM, None, MODEL, CFG, "A3FR", seed=6, cost=EventCostModel(1e-6),
                     profile=PROFILE, shade=False, speculative=False)
    assert s.speculative_rounds == 0
    assert len(s.idle) >= MODEL.n_exits - 1


def test_event_schedule_is_deterministic():
    assert _a3fr(11)[1].to_json() == _a3fr(11)[1].to_json()


def test_event_mode_ordering():
    times = {}
    for mode in ("FRR", "SFR", "A3FR"):
        _, s = run_frame(EMPTY_WS, CAM, None, MODEL, CFG, mode, seed=0, cost=COST,
                         profile=PROFILE, shade=False)
        times[mode] = s.latency.t_tot
    assert times["A3FR"] < times["SFR"] < times["FRR"]


def test_wallclock_frame(cam_ws):
    frame, s = run_frame(cam_ws, CAM, None, MODEL.scaled(0.2), CFG, "A3FR", seed=1,
                         clock="wallclock", profile=PROFILE)
    assert s.rounds[0].kind == "preprocess+periphery"
    assert s.rounds[-1].exit_index == MODEL.n_exits
    want = level_requests(s.final_gaze, 0.0, PROFILE.r_fN, CFG, CAM)
    assert np.all(frame.level_map >= want)
    assert s.latency.t_tot >= s.latency.t_r


def test_wallclock_failure_aborts(cam_ws, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("injected")
    monkeypatch.setattr(scheduler, "level_requests", boom)
    with pytest.raises(FrameAborted, match="injected"):
        run_frame(cam_ws, CAM, None, MODEL.scaled(0.1), CFG, "A3FR", clock="wallclock",
                  profile=PROFILE)
    with pytest.raises(FrameAborted):
        run_frame(cam_ws, CAM, None, MODEL, CFG, "A3FR", cost=COST, profile=PROFILE)


@pytest.mark.parametrize("kw", [dict(mode="XFR", cost=COST), dict(mode="A3FR"),
                                dict(mode="A3FR", cost=COST, stall_after=7)])
def test_bad_frame_config(kw):
    mode = kw.pop("mode")
    with pytest.raises(ConfigurationError):
        run_frame(EMPTY_WS, CAM, None, MODEL, CFG, mode, profile=PROFILE, shade=False, **kw)
