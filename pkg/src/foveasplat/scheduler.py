"""
Per-frame scheduling of gaze tracking and rendering.

Three modes are supported:

``FRR``
    every tile at full level, no gaze tracking.
``SFR``
    wait for the last gaze exit, then render one foveated frame.
``A3FR``
    a gaze worker publishes each exit into a latest-value slot while a render
    worker refines the frame in rounds, always using the freshest exit and
    growing the full-level disk speculatively while no new exit is available.

Two clocks drive the workers.  The event clock is a small discrete-event
simulation: exits appear at their profiled times and every round costs a
calibrated amount per composited pixel.  The wall clock runs two real threads
with real compositing cost.
"""
from __future__ import annotations

import json
import threading
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ConsistencyError, FrameAborted
from .foveation import FoveationConfig, FoveationProfile, level_requests, profile_exits
from .gaze import ExitModel, GazePrediction, GazeTruth, simulate_exits
from .raster import FrameState, RenderRound, render_region
from .scene import Camera
from .splat import TILE, Splats, TileWorkset, build_workset, project

MODES = ("FRR", "SFR", "A3FR")
CLOCKS = ("event", "wallclock")
T_S_C_MS = 2.0
QUANTUM_MS = 0.1
WALLCLOCK_SLACK_MS = 5.0
SPEC_STEP = TILE


class SharedGazeSlot:
    """Single-writer latest-value register for gaze predictions.

    Readers never block on :meth:`read`; they get either ``None`` or the
    complete prediction of the most recent write together with the number
    of writes so far.
    """

    def __init__(self):
        self._cond = threading.Condition()
        self._latest: GazePrediction | None = None
        self._count = 0
        self._closed = False

    @property
    def write_count(self) -> int:
        with self._cond:
            return self._count

    def write(self, pred: GazePrediction) -> None:
        with self._cond:
            if self._latest is not None and pred.exit_index <= self._latest.exit_index:
                raise ValueError("exit indices must increase within a frame")
            self._latest = pred
            self._count += 1
            self._cond.notify_all()

    def read(self) -> tuple[int, GazePrediction | None]:
        with self._cond:
            return self._count, self._latest

    def close(self) -> None:
        """Mark that no further writes will come."""
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    @property
    def closed(self) -> bool:
        with self._cond:
            return self._closed

    def wait_for_write(self, seen: int, timeout: float | None = None) -> bool:
        """Block until more than ``seen`` writes happened; False once closed without one."""
        with self._cond:
            self._cond.wait_for(lambda: self._count > seen or self._closed, timeout)
            return self._count > seen


@dataclass
class LatencyBreakdown:
    t_s_c: float
    t_d: float
    t_r: float
    t_tot: float

    def to_dict(self) -> dict:
        return {"t_s_c": self.t_s_c, "t_d": self.t_d, "t_r": self.t_r, "t_tot": self.t_tot}


@dataclass(frozen=True)
class EventCostModel:
    """Virtual render cost: ``preprocess_ms`` once per frame plus a per-pixel cost."""

    ms_per_pixel: float
    preprocess_ms: float = 0.0

    def __post_init__(self):
        if self.ms_per_pixel <= 0 or self.preprocess_ms < 0:
            raise ConfigurationError("render costs must be positive")

    @classmethod
    def calibrate(cls, anchor_frr_ms: float, width: int, height: int,
                  preprocess_ms: float = 0.0) -> EventCostModel:
        """Cost model whose full-resolution frame takes ``anchor_frr_ms``."""
        if anchor_frr_ms <= preprocess_ms:
            raise ConfigurationError("the full-frame anchor must exceed the preprocess cost")
        return cls((anchor_frr_ms - preprocess_ms) / (width * height), preprocess_ms)

    def round_cost(self, pixels: int, preprocess: bool) -> float:
        return (self.preprocess_ms if preprocess else 0.0) + pixels * self.ms_per_pixel


@dataclass(eq=False)
class FrameSchedule:
    """Timeline of one frame, the unit of record of a benchmark run."""

    mode: str
    clock: str
    seed: int
    truth: tuple[float, float] | None
    rounds: list[RenderRound] = field(default_factory=list)
    gaze_log: list[GazePrediction] = field(default_factory=list)
    exits_written: int = 0
    t_s_c: float = 0.0
    gaze_end: float = 0.0
    render_start: float = 0.0
    render_end: float = 0.0
    idle: list[tuple[float, float]] = field(default_factory=list)
    latency: LatencyBreakdown | None = None

    @property
    def speculative_rounds(self) -> int:
        return sum(r.kind == "speculative" for r in self.rounds)

    @property
    def final_gaze(self) -> tuple[float, float] | None:
        """Last exit prediction of the frame, whether or not it was written."""
        return self.gaze_log[-1].point if self.gaze_log else None

    @property
    def busy_ms(self) -> float:
        return sum(r.elapsed for r in self.rounds)

    def pixels_composited(self) -> int:
        return sum(r.pixels_composited for r in self.rounds)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "clock": self.clock,
            "seed": self.seed,
            "truth": None if self.truth is None else [float(v) for v in self.truth],
            "latency": None if self.latency is None else self.latency.to_dict(),
            "render_start_ms": self.render_start,
            "render_end_ms": self.render_end,
            "gaze_end_ms": self.gaze_end,
            "speculative_rounds": self.speculative_rounds,
            "pixels_composited": self.pixels_composited(),
            "exits_written": self.exits_written,
            "idle_ms": [[a, b] for a, b in self.idle],
            "rounds": [r.to_dict() for r in self.rounds],
            "gaze_log": [g.to_dict() for g in self.gaze_log],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())


def speculate(current_exit: int, rendered_r: float, profile: FoveationProfile) -> float | None:
    """Next outer radius of speculative growth around exit ``current_exit`` (1-based).

    Returns ``None`` once ``rendered_r`` has reached the exit's maximum radius.
    """
    r_max = float(profile.r_max[current_exit - 1])
    if rendered_r >= r_max:
        return None
    return min(rendered_r + SPEC_STEP, r_max)


def account(schedule: FrameSchedule) -> LatencyBreakdown:
    """Fill and check the latency breakdown of a finished frame.

    Raises
    ------
    ConsistencyError
        If the mode's end-to-end identity is off by more than one quantum
        (event clock) or the thread slack (wall clock).
    """
    s = schedule
    tol = QUANTUM_MS if s.clock == "event" else WALLCLOCK_SLACK_MS
    if s.mode == "FRR":
        t_s_c, t_d = 0.0, 0.0
        t_r = s.render_end - s.render_start
        t_tot = s.render_end
        expected = t_r
    elif s.mode == "SFR":
        t_s_c, t_d = s.t_s_c, s.gaze_end
        t_r = s.render_end - s.render_start
        t_tot = s.t_s_c + s.render_end
        expected = t_s_c + t_d + t_r
    elif s.mode == "A3FR":
        t_s_c, t_d = s.t_s_c, s.gaze_end
        t_r = s.render_end - s.render_start
        t_tot = s.t_s_c + max(s.render_end, s.gaze_end)
        expected = t_s_c + max(t_d, t_r)
    else:
        raise ConfigurationError(f"unknown mode {s.mode!r}")
    if abs(t_tot - expected) > tol:
        raise ConsistencyError(
            f"{s.mode}: t_tot {t_tot:.4f} ms differs from identity value {expected:.4f} ms"
        )
    if s.clock == "event" and abs(s.busy_ms - sum_idle_complement(s)) > tol:
        raise ConsistencyError("round times do not add up to the render worker's busy time")
    s.latency = LatencyBreakdown(t_s_c, t_d, t_r, t_tot)
    return s.latency


def sum_idle_complement(s: FrameSchedule) -> float:
    """Render-worker time not spent idle."""
    return (s.render_end - s.render_start) - sum(b - a for a, b in s.idle)


# ---------------------------------------------------------------------------
# clocks used by the render loop

class _EventClock:
    def __init__(self, writes: list[GazePrediction], cost: EventCostModel):
        self.writes = writes
        self.times = [w.available_at for w in writes]
        self.cost = cost
        self.now = 0.0

    def snapshot(self):
        n = int(np.searchsorted(self.times, self.now, side="right"))
        return n, (self.writes[n - 1] if n else None)

    def begin(self) -> float:
        return self.now

    def finish(self, rnd: RenderRound, preprocess: bool) -> None:
        rnd.start = self.now
        rnd.elapsed = self.cost.round_cost(rnd.pixels_composited, preprocess)
        self.now += rnd.elapsed

    def idle(self, seen: int) -> tuple[float, float] | None:
        if seen >= len(self.writes):
            return None
        start, self.now = self.now, max(self.now, self.times[seen])
        return start, self.now


class _WallClock:
    def __init__(self, slot: SharedGazeSlot, t0: float):
        self.slot = slot
        self.t0 = t0

    @property
    def now(self) -> float:
        return (time.perf_counter() - self.t0) * 1e3

    def snapshot(self):
        return self.slot.read()

    def begin(self) -> float:
        return self.now

    def finish(self, rnd: RenderRound, preprocess: bool) -> None:
        rnd.start = self.now - rnd.elapsed

    def idle(self, seen: int) -> tuple[float, float] | None:
        start = self.now
        if not self.slot.wait_for_write(seen):
            return None
        return start, self.now


@dataclass
class _Context:
    ws: TileWorkset | None
    cam: Camera
    cfg: FoveationConfig
    profile: FoveationProfile
    frame: FrameState
    shade: bool
    workers: int | None


def _prepare(scene_or_ws, cam: Camera, shade: bool) -> TileWorkset:
    if isinstance(scene_or_ws, TileWorkset):
        return scene_or_ws
    if not shade or scene_or_ws is None:
        return build_workset(Splats.empty(), cam)
    return build_workset(project(scene_or_ws, cam), cam)


def _round(ctx: _Context, ws: TileWorkset, request, **fields) -> RenderRound:
    return render_region(ws, ctx.frame, request, shade=ctx.shade, workers=ctx.workers, **fields)


def _a3fr_loop(ctx: _Context, scene_or_ws, clock, n_exits: int, speculative: bool,
               sched: FrameSchedule) -> None:
    """Render worker body shared by both clocks."""
    cam, cfg, prof = ctx.cam, ctx.cfg, ctx.profile
    t_begin = clock.begin()
    ws = _prepare(scene_or_ws, cam, ctx.shade)
    ctx.ws = ws
    wc, _ = clock.snapshot()
    # round 1: whole image at the peripheral level while gaze is still unknown
    request = np.full(ctx.frame.level_map.shape, cfg.levels[-1], dtype=np.int64)
    rnd = _round(ctx, ws, request, kind="preprocess+periphery", write_count=wc)
    if isinstance(clock, _WallClock):
        rnd.elapsed = clock.now - t_begin
    clock.finish(rnd, preprocess=True)

    current = None
    rendered_r = 0.0
    while True:
        wc, latest = clock.snapshot()
        if latest is not None and (current is None or latest.exit_index != current.exit_index):
            current = latest
            rendered_r = float(prof.r_f[current.exit_index - 1])
            request = level_requests(current.point, 0.0, rendered_r, cfg, cam)
            rnd = _round(ctx, ws, request, kind="exit", gaze_used=current.point,
                         exit_index=current.exit_index, inner_r=0.0, outer_r=rendered_r,
                         write_count=wc)
            clock.finish(rnd, preprocess=False)
            if current.exit_index == n_exits:
                break
            continue
        if current is not None and speculative:
            nxt = speculate(current.exit_index, rendered_r, prof)
            if nxt is not None:
                request = level_requests(current.point, rendered_r, nxt, cfg, cam)
                rnd = _round(ctx, ws, request, kind="speculative", gaze_used=current.point,
                             exit_index=current.exit_index, inner_r=rendered_r,
                             outer_r=nxt, write_count=wc)
                clock.finish(rnd, preprocess=False)
                rendered_r = nxt
                continue
        gap = clock.idle(wc)
        if gap is None:
            break
        if gap[1] > gap[0]:
            sched.idle.append(gap)
    sched.render_end = clock.now


def run_frame(scene, cam: Camera, truth: GazeTruth | None, model: ExitModel | None,
              cfg: FoveationConfig, mode: str, seed: int = 0, clock: str = "event", *,
              profile: FoveationProfile | None = None, cost: EventCostModel | None = None,
              t_s_c: float = T_S_C_MS, stall_after: int | None = None,
              speculative: bool = True, shade: bool = True, workers: int | None = None,
              background=(0.0, 0.0, 0.0)) -> tuple[FrameState, FrameSchedule]:
    """Render one frame in ``mode`` and return the frame with its schedule.

    Parameters
    ----------
    scene : Scene or TileWorkset
        A prebuilt workset skips projection and binning.  May be ``None``
        when ``shade`` is False.
    cam : Camera
    truth : GazeTruth
        True gaze point; the image center when ``None``.
    model : ExitModel
        Ignored in FRR mode.
    cfg : FoveationConfig
    mode : {"FRR", "SFR", "A3FR"}
    seed : int
        Seeds the gaze errors.
    clock : {"event", "wallclock"}
    profile : FoveationProfile, optional
        Profiled radii for ``model``; computed with 10^5 samples if missing.
    cost : EventCostModel
        Required by the event clock.
    t_s_c : float
        Sensing plus link latency added in front of gaze tracking, ms.
    stall_after : int, optional
        Stop the gaze worker after this exit (A3FR only).
    speculative : bool
        Grow the full-level disk while no new exit is available.
    shade : bool
        False tracks levels and pixel counts without compositing.

    Raises
    ------
    FrameAborted
        If either worker fails; no partial frame is returned.
    """
    mode = mode.upper()
    if mode not in MODES:
        raise ConfigurationError(f"mode must be one of {MODES}, got {mode!r}")
    if clock not in CLOCKS:
        raise ConfigurationError(f"clock must be one of {CLOCKS}, got {clock!r}")
    if clock == "event" and cost is None:
        raise ConfigurationError("the event clock needs an EventCostModel")
    if mode != "FRR" and model is None:
        raise ConfigurationError(f"{mode} needs an exit model")
    W, H = cam.width, cam.height
    if truth is None:
        truth = GazeTruth((W / 2.0, H / 2.0))
    frame = FrameState.blank(W, H, background)
    sched = FrameSchedule(mode, clock, int(seed), tuple(truth.point))

    try:
        if mode == "FRR":
            _run_frr(scene, cam, cfg, frame, sched, clock, cost, shade, workers)
        else:
            if profile is None:
                profile = profile_exits(model, samples=100_000, seed=0, cfg=cfg)
            if profile.n_exits != model.n_exits:
                raise ConfigurationError("profile and exit model disagree on the number of exits")
            preds = simulate_exits(truth, model, seed, cfg.rho_d, (W, H))
            sched.gaze_log = preds
            sched.t_s_c = t_s_c
            ctx = _Context(None, cam, cfg, profile, frame, shade, workers)
            if mode == "SFR":
                _run_sfr(scene, ctx, preds, sched, clock, cost)
            elif clock == "event":
                _run_a3fr_event(scene, ctx, preds, sched, cost, stall_after, speculative)
            else:
                _run_a3fr_wall(scene, ctx, preds, sched, stall_after, speculative)
    except (FrameAborted, ConfigurationError):
        raise
    except Exception as exc:
        raise FrameAborted(f"{mode} frame (seed {seed}) aborted: {exc!r}") from exc
    account(sched)
    return frame, sched


def _run_frr(scene, cam, cfg, frame, sched, clock, cost, shade, workers):
    t0 = time.perf_counter()
    ws = _prepare(scene, cam, shade)
    request = np.full(frame.level_map.shape, 4, dtype=np.int64)
    rnd = render_region(ws, frame, request, shade=shade, workers=workers, kind="full")
    if clock == "event":
        rnd.start, rnd.elapsed = 0.0, cost.round_cost(rnd.pixels_composited, True)
    else:
        rnd.start, rnd.elapsed = 0.0, (time.perf_counter() - t0) * 1e3
    sched.rounds = frame.round_log
    sched.render_start, sched.render_end = 0.0, rnd.elapsed


def _run_sfr(scene, ctx: _Context, preds, sched, clock, cost):
    final = preds[-1]
    r_fN = ctx.profile.r_fN
    if clock == "event":
        t_d = final.available_at
        ws = _prepare(scene, ctx.cam, ctx.shade)
    else:
        # the tracker must finish before rendering can start
        t0 = time.perf_counter()
        time.sleep(final.available_at / 1e3)
        t_d = (time.perf_counter() - t0) * 1e3
        t1 = time.perf_counter()
        ws = _prepare(scene, ctx.cam, ctx.shade)
    request = level_requests(final.point, 0.0, r_fN, ctx.cfg, ctx.cam)
    rnd = _round(ctx, ws, request, kind="preprocess+foveated", gaze_used=final.point,
                 exit_index=final.exit_index, inner_r=0.0, outer_r=r_fN,
                 write_count=len(preds))
    if clock == "event":
        rnd.elapsed = cost.round_cost(rnd.pixels_composited, True)
    else:
        rnd.elapsed = (time.perf_counter() - t1) * 1e3
    rnd.start = t_d
    sched.rounds = ctx.frame.round_log
    sched.exits_written = len(preds)
    sched.gaze_end = t_d
    sched.render_start = t_d
    sched.render_end = t_d + rnd.elapsed


def _written(preds, stall_after):
    if stall_after is None:
        return list(preds)
    if not 1 <= stall_after <= len(preds):
        raise ConfigurationError(f"stall_after must lie in 1..{len(preds)}")
    return list(preds[:stall_after])


def _run_a3fr_event(scene, ctx, preds, sched, cost, stall_after, speculative):
    writes = _written(preds, stall_after)
    clock = _EventClock(writes, cost)
    sched.exits_written = len(writes)
    sched.gaze_end = writes[-1].available_at
    sched.render_start = 0.0
    _a3fr_loop(ctx, scene, clock, len(preds), speculative, sched)
    sched.rounds = ctx.frame.round_log


def _run_a3fr_wall(scene, ctx, preds, sched, stall_after, speculative):
    writes = _written(preds, stall_after)
    slot = SharedGazeSlot()
    abort = threading.Event()
    errors: list[str] = []
    t0 = time.perf_counter()
    clock = _WallClock(slot, t0)
    gaze_end = [0.0]

    def gaze_worker():
        try:
            for pred in writes:
                delay = t0 + pred.available_at / 1e3 - time.perf_counter()
                if delay > 0 and abort.wait(delay):
                    return
                slot.write(pred)
                gaze_end[0] = clock.now
        except Exception:
            errors.append("gaze worker:\n" + traceback.format_exc())
        finally:
            slot.close()

    def render_worker():
        try:
            _a3fr_loop(ctx, scene, clock, len(preds), speculative, sched)
        except Exception:
            errors.append("render worker:\n" + traceback.format_exc())
            abort.set()

    threads = [threading.Thread(target=gaze_worker, name="gaze"),
               threading.Thread(target=render_worker, name="render")]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if errors:
        raise FrameAborted("A3FR frame aborted\n" + "\n".join(errors))
    sched.exits_written = len(writes)
    sched.gaze_end = gaze_end[0]
    sched.render_start = 0.0
    sched.rounds = ctx.frame.round_log
