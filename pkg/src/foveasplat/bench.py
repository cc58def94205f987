"""
Benchmark harness: run frames in every mode and report latency and quality.

Usable as a library (:func:`run_benchmark`) or from the command line::

    python -m foveasplat.bench --scene synthetic:0 --resolution 1280x720 \\
        --mode frr --mode sfr --mode a3fr --clock event --out runs/demo
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FoveaSplatError, FrameAborted
from .foveation import FoveationConfig, foveal_radius, profile_exits, tile_centers
from .gaze import ExitModel, GazeTruth, read_trace
from .metrics import psnr, ssim
from .raster import FrameState, render_region, write_ppm
from .scene import SIZE_ALIGN, Camera, Scene, load_poses, load_scene
from .scheduler import CLOCKS, MODES, EventCostModel, run_frame
from .splat import TILE, build_workset, project
from .synthetic import synthetic_poses, synthetic_scene

CSV_VERSION = "# foveasplat summary v1"
CSV_COLUMNS = (
    "scene", "width", "height", "mode", "clock", "exit_model", "frames",
    "t_tot_mean_ms", "t_tot_min_ms", "t_tot_max_ms", "t_d_mean_ms", "t_r_mean_ms",
    "rounds_mean", "speculative_rounds_mean", "round_elapsed_means_ms",
    "round_start_means_ms", "pixels_composited", "psnr_fovea_min_db",
    "psnr_mean_db", "ssim_mean",
)
REFERENCE_FRR_MS = 151.239
DEFAULT_POSES = 100


class BenchmarkError(FoveaSplatError, RuntimeError):
    """A frame failed; the message names scene, pose, mode and seed."""


@dataclass
class FrameRecord:
    scene: str
    width: int
    height: int
    mode: str
    pose: int
    seed: int
    t_tot: float
    t_d: float
    t_r: float
    round_elapsed: list[float]
    round_start: list[float]
    speculative_rounds: int
    pixels: int
    psnr_fovea: float = math.nan
    psnr: float = math.nan
    ssim: float = math.nan
    schedule_file: str = ""


@dataclass
class RunReport:
    """Per-frame records plus their aggregation into summary rows."""

    frames: list[FrameRecord] = field(default_factory=list)
    clock: str = "event"
    exit_model: str = ""
    out_dir: Path | None = None

    @property
    def schedule_files(self) -> list[str]:
        return [f.schedule_file for f in self.frames if f.schedule_file]

    def rows(self) -> list[dict]:
        groups: dict[tuple, list[FrameRecord]] = {}
        for f in self.frames:
            groups.setdefault((f.scene, f.width, f.height, f.mode), []).append(f)
        out = []
        for (scene, W, H, mode), recs in groups.items():
            t = np.array([r.t_tot for r in recs])
            k = max(len(r.round_elapsed) for r in recs)
            # per-round means over the frames that have that round
            el = [np.mean([r.round_elapsed[i] for r in recs if len(r.round_elapsed) > i])
                  for i in range(k)]
            st = [np.mean([r.round_start[i] for r in recs if len(r.round_start) > i])
                  for i in range(k)]
            out.append({
                "scene": scene, "width": W, "height": H, "mode": mode,
                "clock": self.clock, "exit_model": self.exit_model, "frames": len(recs),
                "t_tot_mean_ms": t.mean(), "t_tot_min_ms": t.min(), "t_tot_max_ms": t.max(),
                "t_d_mean_ms": np.mean([r.t_d for r in recs]),
                "t_r_mean_ms": np.mean([r.t_r for r in recs]),
                "rounds_mean": np.mean([len(r.round_elapsed) for r in recs]),
                "speculative_rounds_mean": np.mean([r.speculative_rounds for r in recs]),
                "round_elapsed_means_ms": el,
                "round_start_means_ms": st,
                "pixels_composited": sum(r.pixels for r in recs),
                "psnr_fovea_min_db": min(r.psnr_fovea for r in recs),
                "psnr_mean_db": float(np.mean([r.psnr for r in recs])),
                "ssim_mean": float(np.mean([r.ssim for r in recs])),
            })
        return out

    def mean_t_tot(self, mode: str, scene: str | None = None) -> float:
        vals = [f.t_tot for f in self.frames
                if f.mode == mode and (scene is None or f.scene == scene)]
        return float(np.mean(vals))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_VERSION + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows():
            w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6f}"
    return str(v)


def read_summary(path) -> list[dict]:
    """Parse a summary CSV written by :meth:`RunReport.to_csv`."""
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != CSV_VERSION:
            raise ValueError(f"unsupported summary header {first!r}")
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# inputs

def parse_resolution(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ConfigurationError(f"resolution must look like WxH, got {text!r}") from None
    if w <= 0 or h <= 0 or w % SIZE_ALIGN or h % SIZE_ALIGN:
        raise ConfigurationError(f"resolution {w}x{h} must be positive multiples of {SIZE_ALIGN}")
    return w, h


def resolve_scene(spec: str) -> Scene:
    """``synthetic:SEED[:N]`` or a PLY path."""
    if spec.startswith("synthetic:"):
        parts = spec.split(":")[1:]
        seed = int(parts[0])
        n = int(parts[1]) if len(parts) > 1 else 3000
        return synthetic_scene(n, seed=seed, name=f"synthetic{seed}")
    return load_scene(spec)


def resolve_poses(spec: str | None, n_poses: int, width: int, height: int,
                  seed: int = 0) -> list[Camera]:
    """Pose file resized to ``width x height``, or seeded synthetic poses."""
    if spec is None or spec.startswith("synthetic"):
        if spec and ":" in spec:
            n_poses = int(spec.split(":")[1])
        return synthetic_poses(n_poses, width, height, seed=seed)
    cams = load_poses(spec)
    return [c if c.image_size == (width, height) else c.resized(width, height) for c in cams]


def foveal_tile_mask(cam: Camera, gaze, r_fN: float) -> np.ndarray:
    """Pixel mask of the tiles whose centers lie within ``r_fN`` of ``gaze``."""
    X, Y = tile_centers(cam)
    tiles = np.hypot(X - gaze[0], Y - gaze[1]) <= r_fN
    mask = np.repeat(np.repeat(tiles, TILE, axis=0), TILE, axis=1)
    return mask[:cam.height, :cam.width]


# ---------------------------------------------------------------------------

def run_benchmark(scenes, poses=None, resolutions=((1280, 720),), modes=MODES,
                  exit_model="unpruned", seeds=(0,), clock: str = "event", out_dir=None, *,
                  anchor_frr_ms=(REFERENCE_FRR_MS,), preprocess_ms: float = 0.0,
                  trace=None, frame_period_ms: float = 100.0, n_poses: int = DEFAULT_POSES,
                  emit_images: bool = False, latency_only: bool = False,
                  parallel_frames: int = 1, profile_samples: int = 100_000,
                  profile_seed: int = 0, t_s_c: float = 2.0) -> RunReport:
    """Run every (scene, resolution, pose, seed, mode) frame and summarize.

    Parameters
    ----------
    scenes : list of str or Scene
        PLY paths, ``synthetic:SEED[:N]`` specs or loaded scenes.
    poses : list of str, optional
        One pose file (or ``synthetic[:N]``) per scene; synthetic by default.
    resolutions : list of (W, H)
    modes : subset of ("FRR", "SFR", "A3FR")
    exit_model : str or ExitModel
        Preset name or JSON path.
    seeds : list of int
        Gaze-noise seeds; every pose runs once per seed.
    clock : {"event", "wallclock"}
    out_dir : path, optional
        Receives ``summary.csv``, one schedule JSON per frame and, with
        ``emit_images``, PPM frames.
    anchor_frr_ms : float or list of float
        Event-clock calibration: FRR frame time at each resolution.  A single
        value applies to the first resolution and the per-pixel cost carries
        over to the others.
    latency_only : bool
        Skip compositing and quality metrics (pixel counts are still exact).
    parallel_frames : int
        Worker threads over poses; event clock only, since wall-clock
        latencies must not contend.

    Raises
    ------
    BenchmarkError
        On the first failing frame.
    """
    modes = [m.upper() for m in modes]
    for m in modes:
        if m not in MODES:
            raise ConfigurationError(f"unknown mode {m!r}")
    if clock not in CLOCKS:
        raise ConfigurationError(f"unknown clock {clock!r}")
    if parallel_frames > 1 and clock != "event":
        raise ConfigurationError("parallel frames would distort wall-clock latencies")
    model = exit_model if isinstance(exit_model, ExitModel) else ExitModel.load(exit_model)
    anchors = [anchor_frr_ms] if np.isscalar(anchor_frr_ms) else list(anchor_frr_ms)
    if len(anchors) not in (1, len(resolutions)):
        raise ConfigurationError("give one FRR anchor or one per resolution")
    W0, H0 = resolutions[0]
    shared_cost = EventCostModel.calibrate(anchors[0], W0, H0, preprocess_ms)
    gaze_trace = read_trace(trace) if trace is not None else None
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    report = RunReport(clock=clock, exit_model=model.name, out_dir=out)
    pose_specs = list(poses) if poses is not None else [None] * len(scenes)
    if len(pose_specs) != len(scenes):
        raise ConfigurationError("give one pose source per scene")

    for scene_spec, pose_spec in zip(scenes, pose_specs):
        scene = scene_spec if isinstance(scene_spec, Scene) else resolve_scene(scene_spec)
        for ri, (W, H) in enumerate(resolutions):
            cost = (EventCostModel.calibrate(anchors[ri], W, H, preprocess_ms)
                    if len(anchors) > 1 else shared_cost)
            cams = resolve_poses(pose_spec, n_poses, W, H)
            cfg = FoveationConfig.for_camera(cams[0])
            profile = profile_exits(model, profile_samples, profile_seed, cfg)
            truths = (gaze_trace.frame_truths(len(cams), frame_period_ms)
                      if gaze_trace is not None else [None] * len(cams))
            job = _PoseJob(scene, cfg, profile, model, cost, modes, seeds, clock,
                           out, emit_images, latency_only, t_s_c)
            indices = range(len(cams))
            if parallel_frames > 1:
                with ThreadPoolExecutor(parallel_frames) as pool:
                    results = list(pool.map(lambda k: job(k, cams[k], truths[k]), indices))
            else:
                results = [job(k, cams[k], truths[k]) for k in indices]
            for recs in results:
                report.frames.extend(recs)

    if out is not None:
        (out / "summary.csv").write_text(report.to_csv())
    return report


@dataclass
class _PoseJob:
    scene: Scene
    cfg: FoveationConfig
    profile: object
    model: ExitModel
    cost: EventCostModel
    modes: list
    seeds: tuple
    clock: str
    out: Path | None
    emit_images: bool
    latency_only: bool
    t_s_c: float

    def __call__(self, k: int, cam: Camera, truth: GazeTruth | None) -> list[FrameRecord]:
        shade = not self.latency_only
        name = self.scene.name
        W, H = cam.image_size
        if truth is not None:
            try:
                truth.check(W, H)
            except ConfigurationError as exc:
                raise BenchmarkError(f"frame failed: scene={name} pose={k}: {exc}") from exc
        if shade and self.clock == "event":
            source = build_workset(project(self.scene, cam), cam)
        else:
            source = self.scene if shade else None
        reference = None
        records = []
        r_fN = foveal_radius(self.cfg)
        for seed in self.seeds:
            for mode in self.modes:
                try:
                    frame, sched = run_frame(
                        source, cam, truth, self.model, self.cfg, mode, seed, self.clock,
                        profile=self.profile, cost=self.cost, shade=shade, t_s_c=self.t_s_c,
                    )
                except (FrameAborted, ConfigurationError) as exc:
                    raise BenchmarkError(
                        f"frame failed: scene={name} pose={k} mode={mode} seed={seed}: {exc}"
                    ) from exc
                lat = sched.latency
                rec = FrameRecord(
                    name, W, H, mode, k, seed, lat.t_tot, lat.t_d, lat.t_r,
                    [r.elapsed for r in sched.rounds], [r.start for r in sched.rounds],
                    sched.speculative_rounds, sched.pixels_composited(),
                )
                if shade:
                    if reference is None:
                        reference = self._reference(mode, frame, source, cam)
                    gaze = sched.final_gaze or (W / 2.0, H / 2.0)
                    mask = foveal_tile_mask(cam, gaze, r_fN)
                    rec.psnr_fovea = psnr(frame.color, reference, mask) if mask.any() else math.inf
                    rec.psnr = psnr(frame.color, reference)
                    rec.ssim = ssim(frame.color, reference)
                stem = f"{name}_{W}x{H}_{mode.lower()}_pose{k:03d}_seed{seed}"
                if self.out is not None:
                    path = self.out / f"{stem}.json"
                    sched.save(path)
                    rec.schedule_file = path.name
                    if self.emit_images and shade:
                        write_ppm(self.out / f"{stem}.ppm", frame.color)
                records.append(rec)
        return records

    def _reference(self, mode, frame, source, cam):
        """Full-level image of the pose, reusing an FRR frame when there is one."""
        if mode == "FRR":
            return frame.color
        ws = source if not isinstance(source, Scene) else build_workset(project(source, cam), cam)
        ref = FrameState.for_workset(ws)
        render_region(ws, ref, np.full(ref.level_map.shape, 4))
        return ref.color


# ---------------------------------------------------------------------------
# command line

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="foveasplat-bench",
        description="Render frames in FRR/SFR/A3FR modes and report latency and quality.",
    )
    p.add_argument("--scene", action="append", required=True,
                   help="PLY file or synthetic:SEED[:N]; repeatable")
    p.add_argument("--poses", action="append",
                   help="pose JSON per scene, or synthetic[:N] (default synthetic)")
    p.add_argument("--n-poses", type=int, default=DEFAULT_POSES,
                   help="number of synthetic poses (default %(default)s)")
    p.add_argument("--resolution", action="append", type=parse_resolution,
                   help="WxH, repeatable (default 1280x720)")
    p.add_argument("--mode", action="append", choices=["frr", "sfr", "a3fr"],
                   help="repeatable (default all three)")
    p.add_argument("--exit-model", default="unpruned", help="preset name or JSON file")
    p.add_argument("--seed", action="append", type=int, help="gaze-noise seed, repeatable")
    p.add_argument("--clock", choices=CLOCKS, default="event")
    p.add_argument("--anchor-frr-ms", action="append", type=float,
                   help="event-clock FRR frame time; once, or once per resolution")
    p.add_argument("--preprocess-ms", type=float, default=0.0,
                   help="event-clock projection and binning cost per frame")
    p.add_argument("--trace", help="gaze trace CSV with columns t_ms,x_px,y_px")
    p.add_argument("--frame-period-ms", type=float, default=100.0,
                   help="trace time between consecutive poses")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--emit-images", action="store_true", help="also write PPM frames")
    p.add_argument("--latency-only", action="store_true",
                   help="skip compositing and quality metrics")
    p.add_argument("--parallel-frames", type=int, default=1,
                   help="threads over poses (event clock, quality runs)")
    p.add_argument("--profile-samples", type=int, default=100_000)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report = run_benchmark(
            args.scene,
            poses=args.poses,
            resolutions=args.resolution or [(1280, 720)],
            modes=[m.upper() for m in (args.mode or ["frr", "sfr", "a3fr"])],
            exit_model=args.exit_model,
            seeds=args.seed or [0],
            clock=args.clock,
            out_dir=args.out,
            anchor_frr_ms=args.anchor_frr_ms or [REFERENCE_FRR_MS],
            preprocess_ms=args.preprocess_ms,
            trace=args.trace,
            frame_period_ms=args.frame_period_ms,
            n_poses=args.n_poses,
            emit_images=args.emit_images,
            latency_only=args.latency_only,
            parallel_frames=args.parallel_frames,
            profile_samples=args.profile_samples,
        )
    except (FoveaSplatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for row in report.rows():
        print(f"{row['scene']} {row['width']}x{row['height']} {row['mode']:>4}: "
              f"t_tot {row['t_tot_mean_ms']:.2f} ms over {row['frames']} frames")
    return 0


if __name__ == "__main__":
    sys.exit(main())
