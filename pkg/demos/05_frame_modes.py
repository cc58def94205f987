# # One frame in three modes
#
# FRR renders everything at full level.  SFR waits for the final gaze exit and
# then renders a foveated frame.  A3FR starts rendering the periphery at once,
# refines around each exit as it arrives and speculatively grows the
# full-level disk while it waits.  The event clock makes timings reproducible.

import numpy as np

from foveasplat.foveation import FoveationConfig, profile_exits
from foveasplat.gaze import ExitModel
from foveasplat.metrics import psnr
from foveasplat.scheduler import EventCostModel, run_frame
from foveasplat.splat import build_workset, project
from foveasplat.synthetic import synthetic_poses, synthetic_scene

cam = synthetic_poses(1, 640, 360, seed=5)[0]
ws = build_workset(project(synthetic_scene(2000, seed=5), cam), cam)
cfg = FoveationConfig.for_camera(cam)
model = ExitModel.preset("unpruned")
prof = profile_exits(model, samples=100_000, seed=0, cfg=cfg)
# full-level frames take 151.239 ms on the reference hardware
cost = EventCostModel.calibrate(151.239, cam.width, cam.height)

frames = {}
for mode in ("FRR", "SFR", "A3FR"):
    frame, sched = run_frame(ws, cam, None, model, cfg, mode, seed=1, cost=cost, profile=prof)
    frames[mode] = frame
    lat = sched.latency
    print(f"\n{mode}: t_tot {lat.t_tot:.2f} ms (t_s_c {lat.t_s_c}, t_d {lat.t_d:.2f}, "
          f"t_r {lat.t_r:.2f})")
    for r in sched.rounds:
        print(f"  {r.start:7.2f} ms  {r.kind:22s} exit {r.exit_index}  "
              f"r {r.outer_r if r.outer_r is None else round(r.outer_r, 1)}  "
              f"{r.pixels_composited:7d} px")

# The foveated frames agree with FRR on every tile they rendered at level 4.
for mode in ("SFR", "A3FR"):
    lm = frames[mode].level_map
    mask = np.kron(lm == 4, np.ones((32, 32), dtype=bool))[:cam.height, :cam.width]
    print(f"{mode}: fovea PSNR {psnr(frames[mode].color, frames['FRR'].color, mask)} dB, "
          f"whole image {psnr(frames[mode].color, frames['FRR'].color):.2f} dB")

# ## A faster renderer
#
# At this calibration the periphery round alone outlasts the tracker, so A3FR
# jumps straight to the last exit.  With a renderer four times faster the
# intermediate exits and the speculative rings show up.

fast = EventCostModel.calibrate(151.239 / 4, cam.width, cam.height)
_, sched = run_frame(ws, cam, None, model, cfg, "A3FR", seed=1, cost=fast, profile=prof)
for r in sched.rounds:
    print(f"  {r.start:7.2f} ms  {r.kind:22s} exit {r.exit_index}  "
          f"{r.pixels_composited:7d} px")
print(f"t_tot {sched.latency.t_tot:.2f} ms, idle {sum(b - a for a, b in sched.idle):.2f} ms")

# ## The same frame with real threads
#
# The wall clock runs the gaze worker and the render worker concurrently; the
# tracker sleeps for each exit's latency.

frame, sched = run_frame(ws, cam, None, model, cfg, "A3FR", seed=1, clock="wallclock",
                         profile=prof)
print(f"\nwall clock A3FR: {len(sched.rounds)} rounds, t_tot {sched.latency.t_tot:.1f} ms")

# ## A stalled tracker
#
# If the tracker stops after exit 2, speculation still covers the expected
# final foveal region.

_, sched = run_frame(ws, cam, None, model, cfg, "A3FR", seed=1, cost=cost, profile=prof,
                     stall_after=2)
last = sched.rounds[-1]
print(f"stalled after exit 2: last round {last.kind}, radius {last.outer_r:.1f} px "
      f"(cap {prof.r_max[1]:.1f} px)")
