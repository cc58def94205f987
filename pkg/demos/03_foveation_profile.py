# # Foveal radius, eccentricity bands and profiled radii
#
# The display geometry turns viewing angles into pixel radii.  Offline
# profiling of the gaze tracker's exits decides how large a disk to render at
# full level as soon as each exit arrives (r_f) and how far to keep growing it
# while waiting for the next one (r_max).

import numpy as np

from foveasplat.foveation import (
    FoveationConfig,
    foveal_radius,
    level_requests,
    profile_exits,
)
from foveasplat.gaze import ExitModel
from foveasplat.scene import Camera

cam = Camera.from_fov(90.0, 1280, 720)
cfg = FoveationConfig.for_camera(cam)
print(f"viewing distance {cfg.rho_d:.1f} px, foveal angle {cfg.theta_f:.0f} deg")
print(f"foveal radius: {foveal_radius(cfg):.2f} px "
      f"(without the tracking margin: {foveal_radius(cfg, delta_theta=0.0):.2f} px)")

# ## Per-exit radii

model = ExitModel.preset("unpruned")
prof = profile_exits(model, samples=200_000, seed=0, cfg=cfg)
prof.check()
print("exit  E[dist] deg  E[dist] px   r_f    r_max")
for i in range(model.n_exits):
    print(f"{i + 1:4d}  {prof.expected_dist_deg[i]:11.2f}  {prof.expected_dist_px[i]:10.1f}"
          f"  {prof.r_f[i]:6.1f}  {prof.r_max[i]:6.1f}")

# ## Tile levels for one gaze point

req = level_requests((400.0, 300.0), 0.0, prof.r_fN, cfg, cam)
for level in (4, 3, 2, 1):
    print(f"level {level}: {np.sum(req == level):4d} tiles")
print("\n".join("".join(str(v) for v in row) for row in req))
